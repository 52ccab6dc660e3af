//! Experiment configuration.
//!
//! The file format is UTF-8 `key = value` lines grouped under `[section]`
//! headers; `#` starts a comment. Every key is optional.
//!
//! ```text
//! [sim]
//! solver = navier-stokes
//! size = 32
//! n_traj = 1200
//!
//! [uq]
//! alpha = 0.05
//! quantile_mode = split-quantile
//! ```

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::baselines::StdKind;
use crate::conformal::{GaussianZ, QuantileMode};
use crate::error::{Error, Result};
use crate::grid::MIN_TRAJECTORIES;
use crate::metrics::DEFAULT_GRID;
use crate::seeding;
use crate::sim::{SimConfig, Solver};
use crate::surrogate::{SurrogateConfig, TrainSchedule};

/// Forecaster evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    #[default]
    Surrogate,
    /// Exact diffusion propagator; only valid on diffusion data.
    Oracle,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Surrogate => "surrogate",
            ModelKind::Oracle => "oracle",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "surrogate" => Ok(ModelKind::Surrogate),
            "oracle" => Ok(ModelKind::Oracle),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub n_traj: usize,
    pub schedule: TrainSchedule,
    pub surrogate: SurrogateConfig,
    pub model: ModelKind,
    pub alpha: f64,
    pub dropout_p: f64,
    pub mc_passes: usize,
    pub horizon: usize,
    pub quantile_mode: QuantileMode,
    pub z: GaussianZ,
    pub std_kind: StdKind,
    pub n_grid: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cache: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sim: SimConfig::default(),
            n_traj: 1200,
            schedule: TrainSchedule::default(),
            surrogate: SurrogateConfig::default(),
            model: ModelKind::Surrogate,
            alpha: 0.05,
            dropout_p: 0.05,
            mc_passes: 100,
            horizon: 10,
            quantile_mode: QuantileMode::SplitQuantile,
            z: GaussianZ::Rounded,
            std_kind: StdKind::Population,
            n_grid: DEFAULT_GRID,
            seed: 0,
            out_dir: PathBuf::from("out"),
            cache: true,
        }
    }
}

fn parse<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse '{value}'")))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "[{section}] {key}: expected a boolean, got '{value}'"
        ))),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(&section, key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let s = section;
        match (section, key) {
            ("sim", "solver") => self.sim.solver = v.parse::<Solver>()?,
            ("sim", "size") => self.sim.size = parse(s, key, v)?,
            ("sim", "nu") => self.sim.nu = parse(s, key, v)?,
            ("sim", "dt") => self.sim.dt = parse(s, key, v)?,
            ("sim", "frames_per_traj") => self.sim.frames_per_traj = parse(s, key, v)?,
            ("sim", "record_every") => self.sim.record_every = parse(s, key, v)?,
            ("sim", "forcing_amplitude") => self.sim.forcing_amplitude = parse(s, key, v)?,
            ("sim", "spectrum_slope") => self.sim.spectrum_slope = parse(s, key, v)?,
            ("sim", "n_traj") => self.n_traj = parse(s, key, v)?,
            ("train", "eta_max") => self.schedule.eta_max = parse(s, key, v)?,
            ("train", "eta_min") => self.schedule.eta_min = parse(s, key, v)?,
            ("train", "cycle_len") => self.schedule.cycle_len = parse(s, key, v)?,
            ("train", "snapshots") | ("train", "cycles") => {
                self.schedule.cycles = parse(s, key, v)?
            }
            ("train", "batch_size") => self.surrogate.batch_size = parse(s, key, v)?,
            ("model", "kind") => self.model = v.parse()?,
            ("model", "window") => self.surrogate.window = parse(s, key, v)?,
            ("model", "cutoff") => {
                self.surrogate.cutoff = if v == "auto" {
                    None
                } else {
                    Some(parse(s, key, v)?)
                }
            }
            ("uq", "alpha") => self.alpha = parse(s, key, v)?,
            ("uq", "dropout_p") => self.dropout_p = parse(s, key, v)?,
            ("uq", "mc_passes") => self.mc_passes = parse(s, key, v)?,
            ("uq", "horizon") => self.horizon = parse(s, key, v)?,
            ("uq", "quantile_mode") => self.quantile_mode = v.parse()?,
            ("uq", "z") => self.z = v.parse()?,
            ("uq", "std") => self.std_kind = v.parse()?,
            ("uq", "n_grid") => self.n_grid = parse(s, key, v)?,
            ("run", "seed") => self.seed = parse(s, key, v)?,
            ("run", "out") => self.out_dir = PathBuf::from(v),
            ("run", "cache") => self.cache = parse_bool(s, key, v)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown key '{key}' in section [{section}]"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_config().validate()?;
        self.schedule.validate()?;
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.n_traj < MIN_TRAJECTORIES {
            return cfg_err(format!("n_traj must be at least {MIN_TRAJECTORIES}"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return cfg_err(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return cfg_err(format!(
                "dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            ));
        }
        if self.mc_passes == 0 || self.surrogate.batch_size == 0 || self.surrogate.window == 0 {
            return cfg_err("mc_passes, batch_size and window must be positive".into());
        }
        if self.horizon < 2 {
            return cfg_err("horizon must be at least 2".into());
        }
        if self.surrogate.window + self.horizon > self.sim.frames_per_traj {
            return cfg_err(format!(
                "window {} + horizon {} exceeds frames_per_traj {}",
                self.surrogate.window, self.horizon, self.sim.frames_per_traj
            ));
        }
        if self.surrogate.cutoff_for(self.sim.size) + 1 > self.sim.size / 2 {
            return cfg_err(format!("cutoff must be at most {}", self.sim.size / 2 - 1));
        }
        if self.n_grid < 3 {
            return cfg_err("n_grid must be at least 3".into());
        }
        if self.model == ModelKind::Oracle && self.sim.solver != Solver::Diffusion {
            return cfg_err("the oracle model requires the diffusion solver".into());
        }
        Ok(())
    }

    /// Simulation settings with the seed taken from the master seed.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            ..self.sim.clone()
        }
    }

    pub fn split_seed(&self) -> u64 {
        seeding::mix(self.seed, 0x5b11)
    }

    pub fn train_seed(&self) -> u64 {
        seeding::mix(self.seed, 0x7a1)
    }

    pub fn dropout_seed(&self) -> u64 {
        seeding::mix(self.seed, 0xd0)
    }

    fn sim_text(&self) -> String {
        let s = self.sim_config();
        format!(
            "[sim]\nsolver = {}\nsize = {}\nnu = {:?}\ndt = {:?}\nframes_per_traj = {}\nrecord_every = {}\nforcing_amplitude = {:?}\nspectrum_slope = {:?}\nn_traj = {}\n",
            s.solver, s.size, s.nu, s.dt, s.frames_per_traj, s.record_every, s.forcing_amplitude, s.spectrum_slope, self.n_traj
        )
    }

    fn train_text(&self) -> String {
        let cutoff = match self.surrogate.cutoff {
            Some(k) => k.to_string(),
            None => "auto".into(),
        };
        format!(
            "[train]\neta_max = {:?}\neta_min = {:?}\ncycle_len = {}\nsnapshots = {}\nbatch_size = {}\n\n[model]\nkind = {}\nwindow = {}\ncutoff = {}\n",
            self.schedule.eta_max,
            self.schedule.eta_min,
            self.schedule.cycle_len,
            self.schedule.cycles,
            self.surrogate.batch_size,
            self.model,
            self.surrogate.window,
            cutoff
        )
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut out = self.sim_text();
        out.push('\n');
        out.push_str(&self.train_text());
        write!(
            out,
            "\n[uq]\nalpha = {:?}\ndropout_p = {:?}\nmc_passes = {}\nhorizon = {}\nquantile_mode = {}\nz = {}\nstd = {}\nn_grid = {}\n\n[run]\nseed = {}\nout = {}\ncache = {}\n",
            self.alpha,
            self.dropout_p,
            self.mc_passes,
            self.horizon,
            self.quantile_mode,
            self.z,
            self.std_kind,
            self.n_grid,
            self.seed,
            self.out_dir.display(),
            self.cache
        )
        .expect("write to string");
        out
    }

    /// Key of the generated dataset.
    pub fn dataset_hash(&self) -> String {
        short_hash(&format!("{}seed = {}\n", self.sim_text(), self.seed))
    }

    /// Key of the trained snapshots; covers everything training depends on.
    pub fn snapshot_hash(&self) -> String {
        short_hash(&format!(
            "{}{}seed = {}\n",
            self.sim_text(),
            self.train_text(),
            self.seed
        ))
    }

    /// Key of a whole run, excluding the output location.
    pub fn run_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.cache = true;
        short_hash(&c.to_text())
    }
}

fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.schedule.cycles, 6);
        assert_eq!((cfg.alpha, cfg.dropout_p, cfg.mc_passes), (0.05, 0.05, 100));
        assert_eq!((cfg.surrogate.window, cfg.horizon), (10, 10));
    }

    #[test]
    fn parses_sections() {
        let cfg = ExperimentConfig::parse(
            "# comment\n[sim]\nsolver = diffusion\nsize = 16\n\n[uq]\nalpha = 0.1 # inline\nquantile_mode = max-score\n[run]\nseed = 9\ncache = off\n",
        )
        .unwrap();
        assert_eq!(cfg.sim.solver, Solver::Diffusion);
        assert_eq!(cfg.sim.size, 16);
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.quantile_mode, QuantileMode::MaxScore);
        assert_eq!(cfg.seed, 9);
        assert!(!cfg.cache);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.sim.nu = 0.1 + 0.2;
        cfg.surrogate.cutoff = Some(5);
        cfg.seed = 42;
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn errors_are_config_errors() {
        for text in [
            "[sim]\nbogus = 1\n",
            "[uq]\nalpha = 1.5\n",
            "[uq]\nalpha = x\n",
            "no equals sign\n",
            "[model]\nkind = oracle\n",
            "[uq]\nhorizon = 25\n",
        ] {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn hashes_track_relevant_sections() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.alpha = 0.1;
        assert_eq!(a.dataset_hash(), b.dataset_hash());
        assert_eq!(a.snapshot_hash(), b.snapshot_hash());
        assert_ne!(a.run_hash(), b.run_hash());
        b.schedule.cycle_len = 50;
        assert_eq!(a.dataset_hash(), b.dataset_hash());
        assert_ne!(a.snapshot_hash(), b.snapshot_hash());
        b.seed = 1;
        assert_ne!(a.dataset_hash(), b.dataset_hash());
    }
}
