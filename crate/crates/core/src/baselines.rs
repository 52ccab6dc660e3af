//! Sampling-based uncertainty: snapshot ensembles and MC dropout.
//!
//! Every member or pass runs its own autoregressive rollout. The per-cell
//! reduction sorts the samples first, so the result does not depend on the
//! order in which samples were produced.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forecast::{Method, Sigma, UncertaintyForecast};
use crate::grid::Field;
use crate::surrogate::{Forecaster, RolloutMode, SnapshotSet, SurrogateModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StdKind {
    /// Divide by `N`.
    #[default]
    Population,
    /// Divide by `N - 1`; a single sample gives zero.
    Sample,
}

impl fmt::Display for StdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StdKind::Population => "population",
            StdKind::Sample => "sample",
        })
    }
}

impl FromStr for StdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "population" => Ok(StdKind::Population),
            "sample" => Ok(StdKind::Sample),
            other => Err(Error::Config(format!("unknown std kind '{other}'"))),
        }
    }
}

/// Per-cell mean and standard deviation of `samples[member][step]`.
pub fn reduce_samples(samples: &[Vec<Field>], kind: StdKind) -> Result<(Vec<Field>, Vec<Field>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("no samples to reduce"))?;
    let horizon = first.len();
    let size = first
        .first()
        .ok_or_else(|| Error::invalid("samples have no steps"))?
        .size();
    for s in samples {
        if s.len() != horizon {
            return Err(Error::DimensionMismatch {
                expected: horizon,
                found: s.len(),
            });
        }
        if let Some(bad) = s.iter().find(|f| f.size() != size) {
            return Err(Error::DimensionMismatch {
                expected: size,
                found: bad.size(),
            });
        }
    }
    let n = samples.len();
    let denom = match kind {
        StdKind::Population => n as f64,
        StdKind::Sample => (n.max(2) - 1) as f64,
    };
    let mut means = Vec::with_capacity(horizon);
    let mut sigmas = Vec::with_capacity(horizon);
    let mut column = vec![0.0; n];
    for step in 0..horizon {
        let mut mean = vec![0.0; size * size];
        let mut sigma = vec![0.0; size * size];
        for cell in 0..size * size {
            for (slot, s) in column.iter_mut().zip(samples) {
                *slot = s[step].values()[cell];
            }
            column.sort_by(f64::total_cmp);
            // Shifted by the median so agreeing samples reduce exactly.
            let pivot = column[n / 2];
            let m = pivot + column.iter().map(|v| v - pivot).sum::<f64>() / n as f64;
            let var = column.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / denom;
            mean[cell] = m;
            sigma[cell] = if n == 1 { 0.0 } else { var.sqrt() };
        }
        means.push(Field::new(size, mean)?);
        sigmas.push(Field::new(size, sigma)?);
    }
    Ok((means, sigmas))
}

/// Average of independent rollouts of every snapshot.
pub fn ensemble_forecast(
    snapshots: &SnapshotSet,
    window: &[Field],
    horizon: usize,
    kind: StdKind,
) -> Result<UncertaintyForecast> {
    if snapshots.is_empty() {
        return Err(Error::invalid("empty snapshot set"));
    }
    let samples = snapshots
        .snapshots
        .par_iter()
        .map(|m| m.rollout(window, horizon))
        .collect::<Result<Vec<_>>>()?;
    let (mean, sigma) = reduce_samples(&samples, kind)?;
    UncertaintyForecast::new(Method::Ensemble, mean, Sigma::PerCell(sigma))
}

/// `passes` seeded dropout rollouts; pass `i` uses seed `seed + i`.
pub fn mc_dropout_forecast(
    model: &SurrogateModel,
    window: &[Field],
    horizon: usize,
    p: f64,
    passes: usize,
    seed: u64,
    kind: StdKind,
) -> Result<UncertaintyForecast> {
    if passes == 0 {
        return Err(Error::invalid("need at least one dropout pass"));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "dropout rate must lie in [0, 1), got {p}"
        )));
    }
    let samples = (0..passes as u64)
        .into_par_iter()
        .map(|i| {
            model.rollout_with(
                window,
                horizon,
                RolloutMode::Dropout {
                    p,
                    seed: seed.wrapping_add(i),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, sigma) = reduce_samples(&samples, kind)?;
    UncertaintyForecast::new(Method::Dropout, mean, Sigma::PerCell(sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rustfft::num_complex::Complex64;

    fn stack(n: usize, horizon: usize, seed: u64) -> Vec<Vec<Field>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..horizon)
                    .map(|_| Field::from_fn(4, |_, _| rng.random_range(-3.0..3.0)).unwrap())
                    .collect()
            })
            .collect()
    }

    fn model(seed: u64) -> SurrogateModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<Complex64> = (0..8 * 8 * 2)
            .map(|_| Complex64::new(rng.random_range(-0.4..0.4), rng.random_range(-0.1..0.1)))
            .collect();
        let mut m = SurrogateModel::from_record(crate::io::ModelRecord {
            size: 8,
            window: 2,
            cutoff: 2,
            coeffs,
        })
        .unwrap();
        m.enforce_conjugate_symmetry();
        m
    }

    fn window() -> Vec<Field> {
        (0..2)
            .map(|t| Field::from_fn(8, |i, j| ((i + 2 * j + t) as f64 * 0.7).sin()).unwrap())
            .collect()
    }

    #[test]
    fn two_member_example() {
        let a = vec![Field::zeros(4).unwrap()];
        let b = vec![Field::new(4, vec![2.0; 16]).unwrap()];
        let (mean, sigma) = reduce_samples(&[a, b], StdKind::Population).unwrap();
        assert_eq!(mean[0].values(), &[1.0; 16]);
        assert_eq!(sigma[0].values(), &[1.0; 16]);
    }

    #[test]
    fn matches_naive_loop() {
        let s = stack(7, 3, 1);
        let (mean, sigma) = reduce_samples(&s, StdKind::Population).unwrap();
        let (_, sample_sigma) = reduce_samples(&s, StdKind::Sample).unwrap();
        for step in 0..3 {
            for cell in 0..16 {
                let mut m = 0.0;
                for member in &s {
                    m += member[step].values()[cell];
                }
                m /= 7.0;
                let mut v = 0.0;
                for member in &s {
                    v += (member[step].values()[cell] - m).powi(2);
                }
                assert!((mean[step].values()[cell] - m).abs() < 1e-12);
                assert!((sigma[step].values()[cell] - (v / 7.0).sqrt()).abs() < 1e-12);
                assert!((sample_sigma[step].values()[cell] - (v / 6.0).sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_members_have_zero_sigma() {
        let m = model(1);
        let set = SnapshotSet {
            snapshots: vec![m.clone(); 6],
            cycle_losses: Vec::new(),
        };
        let f = ensemble_forecast(&set, &window(), 4, StdKind::Population).unwrap();
        assert_eq!(f.mean, m.rollout(&window(), 4).unwrap());
        match &f.sigma {
            Sigma::PerCell(s) => assert!(s.iter().all(|f| f.values().iter().all(|v| *v == 0.0))),
            _ => panic!("ensemble sigma is per cell"),
        }
        let empty = SnapshotSet {
            snapshots: Vec::new(),
            cycle_losses: Vec::new(),
        };
        assert!(ensemble_forecast(&empty, &window(), 4, StdKind::Population).is_err());
    }

    #[test]
    fn dropout_degenerate_cases() {
        let m = model(2);
        let zero_rate =
            mc_dropout_forecast(&m, &window(), 3, 0.0, 20, 5, StdKind::Population).unwrap();
        let single = mc_dropout_forecast(&m, &window(), 3, 0.3, 1, 5, StdKind::Population).unwrap();
        for f in [&zero_rate, &single] {
            for step in 0..3 {
                assert_eq!(f.sigma_field(step).max_abs(), 0.0);
            }
        }
        assert_eq!(zero_rate.mean, m.rollout(&window(), 3).unwrap());
        let a = mc_dropout_forecast(&m, &window(), 3, 0.3, 10, 5, StdKind::Population).unwrap();
        let b = mc_dropout_forecast(&m, &window(), 3, 0.3, 10, 5, StdKind::Population).unwrap();
        assert_eq!(a, b);
        assert!(a.sigma_field(0).max_abs() > 0.0);
        assert!(mc_dropout_forecast(&m, &window(), 3, 1.0, 10, 5, StdKind::Population).is_err());
        assert!(mc_dropout_forecast(&m, &window(), 3, 0.1, 0, 5, StdKind::Population).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(seed in 0u64..1000, n in 1usize..9) {
            let s = stack(n, 2, seed);
            let mut shuffled = s.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
            prop_assert_eq!(reduce_samples(&s, StdKind::Population).unwrap(),
                            reduce_samples(&shuffled, StdKind::Population).unwrap());
        }

        #[test]
        fn mean_is_linear(seed in 0u64..1000, c in -4.0f64..4.0) {
            let s = stack(5, 1, seed);
            let scaled: Vec<Vec<Field>> = s.iter()
                .map(|m| m.iter().map(|f| f.scaled(c).unwrap()).collect()).collect();
            let (m1, s1) = reduce_samples(&s, StdKind::Population).unwrap();
            let (m2, s2) = reduce_samples(&scaled, StdKind::Population).unwrap();
            for (a, b) in m1[0].values().iter().zip(m2[0].values()) {
                prop_assert!((a * c - b).abs() < 1e-12);
            }
            for (a, b) in s1[0].values().iter().zip(s2[0].values()) {
                prop_assert!(*b >= 0.0);
                prop_assert!((a * c.abs() - b).abs() < 1e-12);
            }
        }
    }
}
