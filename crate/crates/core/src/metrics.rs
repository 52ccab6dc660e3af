//! Accuracy, sharpness and calibration metrics over flattened predictions.
//!
//! Calibration is quantile based: at expected level `p` the observed level
//! is the fraction of points with `y <= mu + sigma * Φ⁻¹(p)`.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::forecast::UncertaintyForecast;
use crate::grid::Field;

/// Lower bound applied to every predictive standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-12;

pub const DEFAULT_GRID: usize = 101;

/// Parallel arrays over every scalar prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatPrediction {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    y: Vec<f64>,
}

impl FlatPrediction {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() || mu.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: if sigma.len() != mu.len() {
                    sigma.len()
                } else {
                    y.len()
                },
            });
        }
        if mu.is_empty() {
            return Err(Error::invalid("no predictions to evaluate"));
        }
        if mu.iter().chain(&sigma).chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::numeric("predictions contain non-finite values"));
        }
        if sigma.iter().any(|s| *s < 0.0) {
            return Err(Error::numeric("negative predictive sigma"));
        }
        let sigma = sigma.into_iter().map(|s| s.max(SIGMA_FLOOR)).collect();
        Ok(FlatPrediction { mu, sigma, y })
    }

    /// Flattens forecasts against their truths in (forecast, step, cell) order.
    pub fn from_forecasts(
        forecasts: &[UncertaintyForecast],
        truths: &[Vec<Field>],
    ) -> Result<Self> {
        if forecasts.len() != truths.len() {
            return Err(Error::DimensionMismatch {
                expected: forecasts.len(),
                found: truths.len(),
            });
        }
        let (mut mu, mut sigma, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for (f, truth) in forecasts.iter().zip(truths) {
            if truth.len() != f.horizon() {
                return Err(Error::DimensionMismatch {
                    expected: f.horizon(),
                    found: truth.len(),
                });
            }
            for (step, (m, t)) in f.mean.iter().zip(truth).enumerate() {
                if m.size() != t.size() {
                    return Err(Error::DimensionMismatch {
                        expected: m.size(),
                        found: t.size(),
                    });
                }
                mu.extend_from_slice(m.values());
                y.extend_from_slice(t.values());
                sigma.extend((0..m.values().len()).map(|c| f.sigma_at(step, c)));
            }
        }
        Self::new(mu, sigma, y)
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// First and second half; the first gets the shorter half when odd.
    pub fn split_halves(&self) -> Result<(FlatPrediction, FlatPrediction)> {
        if self.len() < 2 {
            return Err(Error::invalid("need at least two points to split"));
        }
        let mid = self.len() / 2;
        let part = |r: std::ops::Range<usize>| FlatPrediction {
            mu: self.mu[r.clone()].to_vec(),
            sigma: self.sigma[r.clone()].to_vec(),
            y: self.y[r].to_vec(),
        };
        Ok((part(0..mid), part(mid..self.len())))
    }

    fn sorted_z(&self) -> Vec<f64> {
        let mut z: Vec<f64> = self
            .mu
            .iter()
            .zip(&self.sigma)
            .zip(&self.y)
            .map(|((m, s), y)| (y - m) / s)
            .collect();
        z.sort_by(f64::total_cmp);
        z
    }
}

pub fn mae(fp: &FlatPrediction) -> f64 {
    fp.mu
        .iter()
        .zip(&fp.y)
        .map(|(m, y)| (y - m).abs())
        .sum::<f64>()
        / fp.len() as f64
}

pub fn rmse(fp: &FlatPrediction) -> f64 {
    (fp.mu
        .iter()
        .zip(&fp.y)
        .map(|(m, y)| (y - m) * (y - m))
        .sum::<f64>()
        / fp.len() as f64)
        .sqrt()
}

/// Mean predictive standard deviation.
pub fn sharpness(fp: &FlatPrediction) -> f64 {
    fp.sigma.iter().sum::<f64>() / fp.len() as f64
}

/// Standard normal quantile with exact values at 0, 1/2 and 1.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else if p == 0.5 {
        0.0
    } else {
        Normal::standard().inverse_cdf(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    pub expected: Vec<f64>,
    pub observed: Vec<f64>,
}

impl CalibrationCurve {
    pub fn new(expected: Vec<f64>, observed: Vec<f64>) -> Result<Self> {
        if expected.len() != observed.len() || expected.len() < 2 {
            return Err(Error::invalid(
                "calibration curve needs matching arrays of length >= 2",
            ));
        }
        if expected.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "expected levels must be strictly increasing",
            ));
        }
        if expected
            .iter()
            .chain(&observed)
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::invalid("calibration levels must lie in [0, 1]"));
        }
        Ok(CalibrationCurve { expected, observed })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("expected,observed\n");
        for (e, o) in self.expected.iter().zip(&self.observed) {
            out.push_str(&format!("{e},{o}\n"));
        }
        out
    }
}

fn level_grid(n_grid: usize) -> Result<Vec<f64>> {
    if n_grid < 3 {
        return Err(Error::invalid(format!(
            "calibration grid needs >= 3 points, got {n_grid}"
        )));
    }
    let last = (n_grid - 1) as f64;
    Ok((0..n_grid).map(|i| i as f64 / last).collect())
}

fn observed_at(sorted_z: &[f64], level: f64) -> f64 {
    let q = normal_quantile(level);
    sorted_z.partition_point(|z| *z <= q) as f64 / sorted_z.len() as f64
}

pub fn calibration_curve(fp: &FlatPrediction, n_grid: usize) -> Result<CalibrationCurve> {
    let expected = level_grid(n_grid)?;
    let z = fp.sorted_z();
    let observed = expected.iter().map(|&p| observed_at(&z, p)).collect();
    CalibrationCurve::new(expected, observed)
}

/// Trapezoidal integral of `|observed - expected|`.
pub fn miscalibration_area(curve: &CalibrationCurve) -> f64 {
    let gap: Vec<f64> = curve
        .expected
        .iter()
        .zip(&curve.observed)
        .map(|(e, o)| (o - e).abs())
        .collect();
    curve
        .expected
        .windows(2)
        .zip(gap.windows(2))
        .map(|(x, g)| 0.5 * (x[1] - x[0]) * (g[0] + g[1]))
        .sum()
}

/// Weighted isotonic (non-decreasing) least squares by pooling adjacent
/// violators.
pub fn pava(ys: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if ys.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: ys.len(),
            found: weights.len(),
        });
    }
    if ys.is_empty() {
        return Err(Error::invalid("pava needs at least one value"));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::invalid("pava weights must be positive"));
    }
    // Blocks of (weighted mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(ys.len());
    for (&y, &w) in ys.iter().zip(weights) {
        blocks.push((y, w, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m2, w2, n2) = blocks.pop().unwrap();
            let (m1, w1, n1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, n1 + n2));
        }
    }
    Ok(blocks
        .iter()
        .flat_map(|&(m, _, n)| std::iter::repeat_n(m, n))
        .collect())
}

/// Monotone piecewise-linear map of quantile levels.
///
/// It is fitted as expected level against observed level, so applying it to
/// a target level gives the nominal level whose observed frequency matches
/// the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Recalibrator {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Recalibrator {
    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn apply(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        let i = self.xs.partition_point(|x| *x <= p);
        if i == 0 {
            return self.ys[0];
        }
        if i == self.xs.len() {
            return self.ys[i - 1];
        }
        let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
        (y0 + (y1 - y0) * (p - x0) / (x1 - x0)).clamp(0.0, 1.0)
    }
}

pub fn fit_recalibrator(curve: &CalibrationCurve) -> Recalibrator {
    // Observed levels are non-decreasing already; pool equal ones so the map
    // is a function, then enforce monotonicity of the pooled means.
    let mut xs: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut pairs: Vec<(f64, f64)> = curve
        .observed
        .iter()
        .copied()
        .zip(curve.expected.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    for (x, y) in pairs {
        if xs.last() == Some(&x) {
            *sums.last_mut().unwrap() += y;
            *counts.last_mut().unwrap() += 1.0;
        } else {
            xs.push(x);
            sums.push(y);
            counts.push(1.0);
        }
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / c).collect();
    let ys = pava(&means, &counts).expect("positive counts");
    Recalibrator { xs, ys }
}

/// Calibration curve of `fp` after remapping each requested level.
pub fn recalibrated_curve(
    fp: &FlatPrediction,
    recal: &Recalibrator,
    n_grid: usize,
) -> Result<CalibrationCurve> {
    let expected = level_grid(n_grid)?;
    let z = fp.sorted_z();
    let observed = expected
        .iter()
        .map(|&p| observed_at(&z, recal.apply(p)))
        .collect();
    CalibrationCurve::new(expected, observed)
}

pub fn recalibration_area(
    fp_fit: &FlatPrediction,
    fp_holdout: &FlatPrediction,
    n_grid: usize,
) -> Result<f64> {
    let recal = fit_recalibrator(&calibration_curve(fp_fit, n_grid)?);
    Ok(miscalibration_area(&recalibrated_curve(
        fp_holdout, &recal, n_grid,
    )?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    pub sharpness: f64,
    pub ma: f64,
    pub ra: f64,
}

/// All metrics; the recalibrator is fitted on the first half of the points
/// and scored on the second half.
pub fn evaluate(fp: &FlatPrediction, n_grid: usize) -> Result<MetricReport> {
    let (fit, holdout) = fp.split_halves()?;
    Ok(MetricReport {
        mae: mae(fp),
        rmse: rmse(fp),
        sharpness: sharpness(fp),
        ma: miscalibration_area(&calibration_curve(fp, n_grid)?),
        ra: recalibration_area(&fit, &holdout, n_grid)?,
    })
}
