//! Split conformal prediction over autoregressive rollouts.
//!
//! The nonconformity score of a forecast is the L2 distance to the truth.
//! Scores are collected per rollout step on a calibration set, reduced to a
//! radius `Q` per step, and converted to a Gaussian-equivalent standard
//! deviation `Q / z` for metric computation.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::forecast::{Method, Sigma, UncertaintyForecast};
use crate::grid::{l2_dist, Field, Trajectory};
use crate::surrogate::Forecaster;

/// Nonconformity score `‖truth - pred‖₂`.
pub fn score(pred: &Field, truth: &Field) -> Result<f64> {
    l2_dist(truth, pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantileMode {
    /// Largest calibration score.
    MaxScore,
    /// `ceil((n+1)(1-alpha))`-th smallest score, or the largest when that
    /// rank exceeds `n`.
    #[default]
    SplitQuantile,
}

impl fmt::Display for QuantileMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantileMode::MaxScore => "max-score",
            QuantileMode::SplitQuantile => "split-quantile",
        })
    }
}

impl FromStr for QuantileMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "max-score" | "max" | "paper-max" => Ok(QuantileMode::MaxScore),
            "split-quantile" | "split" => Ok(QuantileMode::SplitQuantile),
            other => Err(Error::Config(format!("unknown quantile mode '{other}'"))),
        }
    }
}

/// How the Gaussian `z` for a two-sided `1 - alpha` interval is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GaussianZ {
    /// `Φ⁻¹(1 - alpha/2)` rounded to two decimals, the tabulated value
    /// (1.96 at alpha = 0.05).
    #[default]
    Rounded,
    Exact,
}

impl fmt::Display for GaussianZ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GaussianZ::Rounded => "rounded",
            GaussianZ::Exact => "exact",
        })
    }
}

impl FromStr for GaussianZ {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rounded" => Ok(GaussianZ::Rounded),
            "exact" => Ok(GaussianZ::Exact),
            other => Err(Error::Config(format!("unknown z policy '{other}'"))),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

pub fn z_value(alpha: f64, policy: GaussianZ) -> Result<f64> {
    check_alpha(alpha)?;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    Ok(match policy {
        GaussianZ::Exact => z,
        GaussianZ::Rounded => (z * 100.0).round() / 100.0,
    })
}

/// Calibration scores per rollout step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    steps: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(steps: Vec<Vec<f64>>) -> Result<Self> {
        let n = steps.first().map(Vec::len).unwrap_or(0);
        if steps.is_empty() || n == 0 {
            return Err(Error::invalid(
                "score table needs at least one step and one score",
            ));
        }
        if steps.iter().any(|s| s.len() != n) {
            return Err(Error::invalid(
                "every step must hold the same number of scores",
            ));
        }
        if steps
            .iter()
            .flatten()
            .any(|s| !(*s >= 0.0) || !s.is_finite())
        {
            return Err(Error::numeric("scores must be finite and non-negative"));
        }
        Ok(ScoreTable { steps })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn n_cal(&self) -> usize {
        self.steps[0].len()
    }

    pub fn step(&self, h: usize) -> &[f64] {
        &self.steps[h]
    }
}

pub fn conformal_quantile(scores: &[f64], alpha: f64, mode: QuantileMode) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(match mode {
        QuantileMode::MaxScore => sorted[n - 1],
        QuantileMode::SplitQuantile => {
            let k = ((n + 1) as f64 * (1.0 - alpha)).ceil() as usize;
            sorted[k.clamp(1, n) - 1]
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformalRadius {
    pub alpha: f64,
    pub mode: QuantileMode,
    /// Radius per rollout step.
    pub q: Vec<f64>,
    pub n_cal: usize,
}

impl ConformalRadius {
    pub fn from_scores(table: &ScoreTable, alpha: f64, mode: QuantileMode) -> Result<Self> {
        let q = table
            .steps
            .iter()
            .map(|s| conformal_quantile(s, alpha, mode))
            .collect::<Result<_>>()?;
        Ok(ConformalRadius {
            alpha,
            mode,
            q,
            n_cal: table.n_cal(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    pub fn sigma(&self, z: GaussianZ) -> Result<Vec<f64>> {
        let z = z_value(self.alpha, z)?;
        Ok(self.q.iter().map(|q| q / z).collect())
    }

    /// CSV with columns `horizon_step,n_cal,alpha,mode,Q,sigma`.
    pub fn to_csv(&self, z: GaussianZ) -> Result<String> {
        let sigma = self.sigma(z)?;
        let mut out = String::from("horizon_step,n_cal,alpha,mode,Q,sigma\n");
        for (h, (q, s)) in self.q.iter().zip(sigma).enumerate() {
            writeln!(
                out,
                "{},{},{},{},{:e},{:e}",
                h + 1,
                self.n_cal,
                self.alpha,
                self.mode,
                q,
                s
            )
            .expect("write to string");
        }
        Ok(out)
    }
}

fn split_trajectory(
    traj: &Trajectory,
    window: usize,
    horizon: usize,
) -> Result<(&[Field], &[Field])> {
    if window + horizon > traj.len() {
        return Err(Error::invalid(format!(
            "window {window} + horizon {horizon} exceeds trajectory length {}",
            traj.len()
        )));
    }
    let frames = traj.frames();
    Ok((&frames[..window], &frames[window..window + horizon]))
}

/// Rolls the model out from the first `W` frames of every trajectory and
/// scores each step against the following frames.
pub fn score_table<M: Forecaster + ?Sized>(
    model: &M,
    data: &[Trajectory],
    horizon: usize,
) -> Result<ScoreTable> {
    if data.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    let w = model.window_len();
    let per_traj = data
        .par_iter()
        .map(|traj| {
            let (window, truth) = split_trajectory(traj, w, horizon)?;
            let preds = model.rollout(window, horizon)?;
            preds
                .iter()
                .zip(truth)
                .map(|(p, t)| score(p, t))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let steps = (0..horizon)
        .map(|h| per_traj.iter().map(|s| s[h]).collect())
        .collect();
    ScoreTable::new(steps)
}

pub fn calibrate<M: Forecaster + ?Sized>(
    model: &M,
    cal: &[Trajectory],
    alpha: f64,
    horizon: usize,
    mode: QuantileMode,
) -> Result<ConformalRadius> {
    check_alpha(alpha)?;
    ConformalRadius::from_scores(&score_table(model, cal, horizon)?, alpha, mode)
}

/// Deterministic rollout with a uniform sigma of `Q / z` per step.
pub fn cp_forecast<M: Forecaster + ?Sized>(
    model: &M,
    window: &[Field],
    radius: &ConformalRadius,
    z: GaussianZ,
) -> Result<UncertaintyForecast> {
    let mean = model.rollout(window, radius.horizon())?;
    UncertaintyForecast::new(Method::Conformal, mean, Sigma::Uniform(radius.sigma(z)?))
}

/// Fraction of test trajectories whose score is within the radius, per step.
pub fn empirical_coverage<M: Forecaster + ?Sized>(
    model: &M,
    radius: &ConformalRadius,
    test: &[Trajectory],
) -> Result<Vec<f64>> {
    let table = score_table(model, test, radius.horizon())?;
    Ok(coverage_from_scores(&table, radius))
}

pub fn coverage_from_scores(table: &ScoreTable, radius: &ConformalRadius) -> Vec<f64> {
    table
        .steps
        .iter()
        .zip(&radius.q)
        .map(|(s, q)| s.iter().filter(|v| *v <= q).count() as f64 / s.len() as f64)
        .collect()
}
