use std::fs;

use confdyn::harness::{self, REPORT_HEADER};
use confdyn::{ExperimentConfig, Method};

fn small(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.sim.size = 16;
    cfg.n_traj = 40;
    cfg.schedule.cycle_len = 30;
    cfg.mc_passes = 20;
    cfg.out_dir = out.to_path_buf();
    cfg
}

#[test]
fn surrogate_methods_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    for m in Method::ALL {
        let run = harness::run_experiment(&cfg, m).unwrap();
        let r = run.evaluation.report;
        assert!(r.mae > 0.0 && r.sharpness > 0.0, "{m:?}: {r:?}");
        assert!(r.ra.is_finite() && r.ma.is_finite());
        for f in [
            "report.csv",
            "steps.csv",
            "intervals.csv",
            "config.txt",
            "manifest.txt",
            "panel.svg",
        ] {
            assert!(run.dir.join(f).is_file(), "{m:?} is missing {f}");
        }
        assert_eq!(run.dir.join("radii.csv").is_file(), m == Method::Conformal);
    }
    let rows = harness::collect_reports(dir.path()).unwrap();
    assert_eq!(rows.len(), 3);

    // A cached rerun reproduces the report.
    let again = harness::run_experiment(&cfg, Method::Ensemble).unwrap();
    let text = fs::read_to_string(again.dir.join("report.csv")).unwrap();
    assert!(text.starts_with(REPORT_HEADER));
    assert!(rows.iter().any(|r| text.contains(r.as_str())));
}

#[test]
fn symmetry_run_reports_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let out = harness::run_symmetry(&small(dir.path())).unwrap();
    let csv = fs::read_to_string(out.dir.join("symmetry.csv")).unwrap();
    let names: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["unrotated", "rotated", "delta"]);
    let radii = fs::read_to_string(out.dir.join("symmetry_radii.csv")).unwrap();
    assert_eq!(
        radii.lines().count(),
        1 + out.unrotated.forecasts[0].horizon()
    );
}
