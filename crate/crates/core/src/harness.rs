//! End-to-end experiment pipeline.
//!
//! generate → split → train snapshots → forecast the test split with one
//! uncertainty method → flatten → metrics → artifacts.
//!
//! Datasets and trained snapshots are cached under `<out>/cache/`, keyed by
//! a hash of the settings they depend on, so every method of one seed is
//! scored against the same data and the same trained models.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::baselines::{ensemble_forecast, mc_dropout_forecast};
use crate::config::{ExperimentConfig, ModelKind};
use crate::conformal::{self, cp_forecast, z_value, ConformalRadius, ScoreTable};
use crate::error::{Error, Result, StageExt};
use crate::forecast::{Method, UncertaintyForecast};
use crate::grid::{make_splits, DatasetSplits, Field, Trajectory};
use crate::io::{self, Manifest};
use crate::metrics::{
    self, calibration_curve, fit_recalibrator, recalibrated_curve, FlatPrediction, MetricReport,
};
use crate::plot;
use crate::seeding;
use crate::sim::generate_dataset;
use crate::surrogate::{train_snapshots, DiffusionPropagator, Forecaster, SnapshotSet};

pub const REPORT_HEADER: &str = "method,model,MAE,RMSE,Sharpness,MA,RA";
const INTERVAL_POINTS: usize = 400;

pub struct Prepared {
    pub dataset: Vec<Trajectory>,
    pub splits: DatasetSplits,
    /// `None` when the oracle model is evaluated.
    pub snapshots: Option<SnapshotSet>,
}

impl Prepared {
    pub fn subset(&self, idx: &[usize]) -> Vec<Trajectory> {
        idx.iter().map(|&i| self.dataset[i].clone()).collect()
    }
}

fn cache_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("cache")
}

fn dataset_dir(cfg: &ExperimentConfig) -> PathBuf {
    cache_dir(cfg).join(format!("data-{}", cfg.dataset_hash()))
}

fn snapshot_dir(cfg: &ExperimentConfig) -> PathBuf {
    cache_dir(cfg).join(format!("snapshots-{}", cfg.snapshot_hash()))
}

fn load_dataset(dir: &Path, n: usize) -> Result<Vec<Trajectory>> {
    (0..n)
        .map(|i| io::read_trajectory(&dir.join(format!("traj_{i:05}.cdyn"))))
        .collect()
}

fn save_dataset(dir: &Path, data: &[Trajectory]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, t) in data.iter().enumerate() {
        io::write_trajectory(&dir.join(format!("traj_{i:05}.cdyn")), t)?;
    }
    let mut m = Manifest::new();
    m.insert("count".into(), data.len().to_string());
    // Written last: its presence marks a complete dataset.
    io::write_manifest(&dir.join("manifest.txt"), &m)
}

/// Generates the dataset, or loads it from the cache.
pub fn generate(cfg: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let dir = dataset_dir(cfg);
    if cfg.cache && dir.join("manifest.txt").exists() {
        return load_dataset(&dir, cfg.n_traj).stage("generate");
    }
    let data = generate_dataset(&cfg.sim_config(), cfg.n_traj).stage("generate")?;
    if cfg.cache {
        save_dataset(&dir, &data).stage("generate")?;
    }
    Ok(data)
}

/// Trains the snapshot set on the training split, or loads it from the cache.
pub fn train(
    cfg: &ExperimentConfig,
    dataset: &[Trajectory],
    splits: &DatasetSplits,
) -> Result<SnapshotSet> {
    let dir = snapshot_dir(cfg);
    if cfg.cache && dir.join("manifest.txt").exists() {
        return SnapshotSet::load_dir(&dir).stage("train");
    }
    let train: Vec<Trajectory> = splits.train.iter().map(|&i| dataset[i].clone()).collect();
    let set =
        train_snapshots(&train, &cfg.surrogate, &cfg.schedule, cfg.train_seed()).stage("train")?;
    if cfg.cache {
        set.save_dir(&dir).stage("train")?;
    }
    Ok(set)
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let dataset = generate(cfg)?;
    let splits = make_splits(cfg.n_traj, cfg.split_seed()).stage("split")?;
    let snapshots = match cfg.model {
        ModelKind::Surrogate => Some(train(cfg, &dataset, &splits)?),
        ModelKind::Oracle => None,
    };
    Ok(Prepared {
        dataset,
        splits,
        snapshots,
    })
}

/// Conformal calibration results kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub scores: ScoreTable,
    pub radius: ConformalRadius,
    pub test_coverage: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub method: Method,
    pub model: ModelKind,
    pub report: MetricReport,
    pub forecasts: Vec<UncertaintyForecast>,
    pub truths: Vec<Vec<Field>>,
    pub flat: FlatPrediction,
    pub calibration: Option<CalibrationRecord>,
}

fn oracle(cfg: &ExperimentConfig) -> DiffusionPropagator {
    DiffusionPropagator {
        size: cfg.sim.size,
        window: cfg.surrogate.window,
        nu: cfg.sim.nu,
        frame_dt: cfg.sim.frame_dt(),
    }
}

fn need_snapshots(prepared: &Prepared, method: Method) -> Result<&SnapshotSet> {
    prepared
        .snapshots
        .as_ref()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("method '{method}' needs the trained surrogate")))
}

/// Scores one method on the test split. With `rotate`, calibration and test
/// trajectories are turned by a quarter before use.
pub fn evaluate(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    method: Method,
    rotate: bool,
) -> Result<Evaluation> {
    let turn = |data: Vec<Trajectory>| -> Vec<Trajectory> {
        if rotate {
            data.iter().map(Trajectory::rot90).collect()
        } else {
            data
        }
    };
    let (w, h) = (cfg.surrogate.window, cfg.horizon);
    if let Some(t) = prepared.dataset.iter().find(|t| t.len() < w + h) {
        return Err(Error::invalid(format!(
            "window {w} + horizon {h} exceeds trajectory length {}",
            t.len()
        )))
        .stage("evaluate");
    }
    let cal = turn(prepared.subset(&prepared.splits.cal));
    let test = turn(prepared.subset(&prepared.splits.test));
    let windows: Vec<&[Field]> = test.iter().map(|t| &t.frames()[..w]).collect();
    let truths: Vec<Vec<Field>> = test.iter().map(|t| t.frames()[w..w + h].to_vec()).collect();

    let oracle_model = oracle(cfg);
    let point_model: &dyn Forecaster = match cfg.model {
        ModelKind::Oracle => &oracle_model,
        ModelKind::Surrogate => need_snapshots(prepared, method)?.last().expect("non-empty"),
    };

    let mut calibration = None;
    let forecasts = match method {
        Method::Conformal => {
            let scores = conformal::score_table(point_model, &cal, h).stage("calibrate")?;
            let radius = ConformalRadius::from_scores(&scores, cfg.alpha, cfg.quantile_mode)
                .stage("calibrate")?;
            let test_scores = conformal::score_table(point_model, &test, h).stage("calibrate")?;
            calibration = Some(CalibrationRecord {
                test_coverage: conformal::coverage_from_scores(&test_scores, &radius),
                scores,
                radius: radius.clone(),
            });
            windows
                .iter()
                .map(|win| cp_forecast(point_model, win, &radius, cfg.z))
                .collect::<Result<Vec<_>>>()
        }
        Method::Dropout => {
            let model = need_snapshots(prepared, method)?.last().expect("non-empty");
            windows
                .iter()
                .enumerate()
                .map(|(i, win)| {
                    let seed = seeding::mix(cfg.dropout_seed(), i as u64);
                    mc_dropout_forecast(
                        model,
                        win,
                        h,
                        cfg.dropout_p,
                        cfg.mc_passes,
                        seed,
                        cfg.std_kind,
                    )
                })
                .collect()
        }
        Method::Ensemble => {
            let set = need_snapshots(prepared, method)?;
            windows
                .iter()
                .map(|win| ensemble_forecast(set, win, h, cfg.std_kind))
                .collect()
        }
    }
    .stage("forecast")?;

    let flat = FlatPrediction::from_forecasts(&forecasts, &truths).stage("metrics")?;
    let report = metrics::evaluate(&flat, cfg.n_grid).stage("metrics")?;
    Ok(Evaluation {
        method,
        model: cfg.model,
        report,
        forecasts,
        truths,
        flat,
        calibration,
    })
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn report_row(method: Method, model: ModelKind, r: &MetricReport) -> String {
    format!(
        "{method},{model},{},{},{},{},{}",
        num(r.mae),
        num(r.rmse),
        num(r.sharpness),
        num(r.ma),
        num(r.ra)
    )
}

/// Metric row rounded to four decimals for display.
pub fn table_row(method: &str, model: &str, values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!("{method:<10} {model:<10} {}", cells.join("  "))
}

pub fn run_dir(cfg: &ExperimentConfig, label: &str) -> PathBuf {
    cfg.out_dir.join(format!(
        "{label}-{}-{}-s{}",
        cfg.model,
        cfg.run_hash(),
        cfg.seed
    ))
}

fn steps_csv(eval: &Evaluation) -> String {
    let mut out = String::from("step,mean_abs,mean_sigma\n");
    let n = eval.forecasts.len() as f64;
    for step in 0..eval.forecasts[0].horizon() {
        let mean_abs = eval
            .forecasts
            .iter()
            .map(|f| {
                f.mean[step].values().iter().map(|v| v.abs()).sum::<f64>()
                    / f.mean[step].values().len() as f64
            })
            .sum::<f64>()
            / n;
        let mean_sigma = eval
            .forecasts
            .iter()
            .map(|f| f.mean_sigma(step))
            .sum::<f64>()
            / n;
        writeln!(out, "{},{},{}", step + 1, num(mean_abs), num(mean_sigma)).unwrap();
    }
    out
}

fn intervals_csv(flat: &FlatPrediction, z: f64) -> String {
    let n = flat.len();
    let take = n.min(INTERVAL_POINTS);
    let mut out = String::from("index,y,mu,sigma,z\n");
    for k in 0..take {
        let i = k * n / take;
        writeln!(
            out,
            "{i},{},{},{},{}",
            num(flat.y()[i]),
            num(flat.mu()[i]),
            num(flat.sigma()[i]),
            num(z)
        )
        .unwrap();
    }
    out
}

fn write_panels(dir: &Path, eval: &Evaluation, frame_dt: f64) -> Result<()> {
    let f = &eval.forecasts[0];
    let sigma: Vec<Field> = (0..f.horizon()).map(|s| f.sigma_field(s)).collect();
    io::write_trajectory(
        &dir.join(plot::PANEL_TRUTH),
        &Trajectory::new(eval.truths[0].clone(), frame_dt)?,
    )?;
    io::write_trajectory(
        &dir.join(plot::PANEL_MEAN),
        &Trajectory::new(f.mean.clone(), frame_dt)?,
    )?;
    io::write_trajectory(
        &dir.join(plot::PANEL_SIGMA),
        &Trajectory::new(sigma, frame_dt)?,
    )
}

fn write_manifest(dir: &Path, cfg: &ExperimentConfig, label: &str) -> Result<()> {
    let mut files: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.txt")
        .collect();
    files.sort();
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut m = Manifest::new();
    m.insert("run".into(), label.into());
    m.insert("config_hash".into(), cfg.run_hash());
    m.insert("dataset_hash".into(), cfg.dataset_hash());
    m.insert("snapshot_hash".into(), cfg.snapshot_hash());
    m.insert("seed".into(), cfg.seed.to_string());
    m.insert("files".into(), files.join(" "));
    m.insert("created_unix".into(), created.to_string());
    io::write_manifest(&dir.join("manifest.txt"), &m)
}

/// Writes every artifact of one evaluation into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, eval: &Evaluation) -> Result<()> {
    fs::create_dir_all(dir)?;
    let report = format!(
        "{REPORT_HEADER}\n{}\n",
        report_row(eval.method, eval.model, &eval.report)
    );
    fs::write(dir.join("report.csv"), report)?;
    fs::write(dir.join("steps.csv"), steps_csv(eval))?;
    let curve = calibration_curve(&eval.flat, cfg.n_grid)?;
    fs::write(dir.join(plot::CALIBRATION_CSV), curve.to_csv())?;
    let (fit, holdout) = eval.flat.split_halves()?;
    let recal = fit_recalibrator(&calibration_curve(&fit, cfg.n_grid)?);
    fs::write(
        dir.join(plot::RECALIBRATED_CSV),
        recalibrated_curve(&holdout, &recal, cfg.n_grid)?.to_csv(),
    )?;
    fs::write(
        dir.join(plot::INTERVALS_CSV),
        intervals_csv(&eval.flat, z_value(cfg.alpha, cfg.z)?),
    )?;
    if let Some(c) = &eval.calibration {
        fs::write(dir.join("radii.csv"), c.radius.to_csv(cfg.z)?)?;
        let mut cov = String::from("horizon_step,coverage\n");
        for (h, v) in c.test_coverage.iter().enumerate() {
            writeln!(cov, "{},{}", h + 1, num(*v)).unwrap();
        }
        fs::write(dir.join("coverage.csv"), cov)?;
    }
    write_panels(dir, eval, cfg.sim.frame_dt())?;
    plot::emit_plots(dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    Ok(())
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub evaluation: Evaluation,
}

pub fn run_experiment(cfg: &ExperimentConfig, method: Method) -> Result<RunOutcome> {
    let prepared = prepare(cfg)?;
    let evaluation = evaluate(cfg, &prepared, method, false)?;
    let dir = run_dir(cfg, method.tag());
    write_run(&dir, cfg, &evaluation).stage("write")?;
    write_manifest(&dir, cfg, method.tag()).stage("write")?;
    Ok(RunOutcome { dir, evaluation })
}

pub struct SymmetryOutcome {
    pub dir: PathBuf,
    pub unrotated: Evaluation,
    pub rotated: Evaluation,
}

/// Conformal evaluation on the original and on quarter-turned calibration
/// and test sets, with the model trained on unrotated data.
pub fn run_symmetry(cfg: &ExperimentConfig) -> Result<SymmetryOutcome> {
    let prepared = prepare(cfg)?;
    let unrotated = evaluate(cfg, &prepared, Method::Conformal, false)?;
    let rotated = evaluate(cfg, &prepared, Method::Conformal, true)?;
    let dir = run_dir(cfg, "symmetry");
    fs::create_dir_all(&dir).stage("write")?;
    let (a, b) = (&unrotated.report, &rotated.report);
    let delta = MetricReport {
        mae: b.mae - a.mae,
        rmse: b.rmse - a.rmse,
        sharpness: b.sharpness - a.sharpness,
        ma: b.ma - a.ma,
        ra: b.ra - a.ra,
    };
    let mut csv = String::from("variant,MAE,RMSE,Sharpness,MA,RA\n");
    for (name, r) in [("unrotated", a), ("rotated", b), ("delta", &delta)] {
        writeln!(
            csv,
            "{name},{},{},{},{},{}",
            num(r.mae),
            num(r.rmse),
            num(r.sharpness),
            num(r.ma),
            num(r.ra)
        )
        .unwrap();
    }
    let mut radii = String::from("horizon_step,Q_unrotated,Q_rotated,delta\n");
    let (ra, rb) = (
        &unrotated.calibration.as_ref().expect("cp").radius,
        &rotated.calibration.as_ref().expect("cp").radius,
    );
    for (h, (x, y)) in ra.q.iter().zip(&rb.q).enumerate() {
        writeln!(radii, "{},{},{},{}", h + 1, num(*x), num(*y), num(y - x)).unwrap();
    }
    fs::write(dir.join("symmetry.csv"), csv).stage("write")?;
    fs::write(dir.join("symmetry_radii.csv"), radii).stage("write")?;
    fs::write(dir.join("config.txt"), cfg.to_text()).stage("write")?;
    write_manifest(&dir, cfg, "symmetry").stage("write")?;
    Ok(SymmetryOutcome {
        dir,
        unrotated,
        rotated,
    })
}

/// Collects the `report.csv` of every run directory under `out`.
pub fn collect_reports(out: &Path) -> Result<Vec<String>> {
    if !out.is_dir() {
        return Err(Error::MissingFile(out.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(out)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("report.csv").is_file())
        .collect();
    dirs.sort();
    let mut rows = Vec::new();
    for d in dirs {
        let path = d.join("report.csv");
        let text = fs::read_to_string(&path)?;
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::format(&path, "unexpected report header"));
        }
        rows.extend(lines.map(str::to_string));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Solver;

    fn small(out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.sim.solver = Solver::Diffusion;
        cfg.sim.size = 8;
        cfg.sim.nu = 0.01;
        cfg.sim.frames_per_traj = 20;
        cfg.n_traj = 40;
        cfg.schedule.cycle_len = 20;
        cfg.mc_passes = 8;
        cfg.out_dir = out.to_path_buf();
        cfg
    }

    #[test]
    fn oracle_cp_run_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.model = ModelKind::Oracle;
        let out = run_experiment(&cfg, Method::Conformal).unwrap();
        let r = out.evaluation.report;
        assert!(r.mae < 1e-12 && r.rmse < 1e-12, "{r:?}");
        assert!(r.sharpness < 1e-9);
        assert!(r.ma.is_finite() && r.ra.is_finite());
        for name in [
            "report.csv",
            "steps.csv",
            "radii.csv",
            "manifest.txt",
            "panel.svg",
        ] {
            assert!(out.dir.join(name).is_file(), "{name}");
        }
        let err = run_experiment(&cfg, Method::Dropout).err().unwrap();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn stage_is_attributed() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.sim.frames_per_traj = 20;
        cfg.horizon = 10;
        cfg.surrogate.window = 12;
        // Bypass validation to reach the forecasting stage.
        let prepared = Prepared {
            dataset: generate_dataset(&cfg.sim_config(), 20).unwrap(),
            splits: make_splits(20, 0).unwrap(),
            snapshots: None,
        };
        cfg.model = ModelKind::Oracle;
        let err = evaluate(&cfg, &prepared, Method::Conformal, false).unwrap_err();
        assert!(err.to_string().starts_with("evaluate: "), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn collects_reports() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.model = ModelKind::Oracle;
        run_experiment(&cfg, Method::Conformal).unwrap();
        let rows = collect_reports(dir.path()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].starts_with("cp,oracle,"));
    }
}
