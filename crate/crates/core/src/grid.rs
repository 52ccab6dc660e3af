//! Gridded state types, norms and the quarter-turn rotation.
//!
//! A [`Field`] is one snapshot of the system state on a periodic `H x H`
//! grid stored row-major; row index `i` runs along `y`, column index `j`
//! along `x`. `H` must be a power of two no smaller than 4 so that every
//! field can be handed to the spectral transform.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    size: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        check_size(size)?;
        if values.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite value {} at cell ({}, {})",
                values[pos],
                pos / size,
                pos % size
            )));
        }
        Ok(Field { size, values })
    }

    pub fn zeros(size: usize) -> Result<Self> {
        check_size(size)?;
        Ok(Field {
            size,
            values: vec![0.0; size * size],
        })
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_size(size)?;
        let mut values = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                values.push(f(i, j));
            }
        }
        Field::new(size, values)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Result<Field> {
        Field::new(self.size, self.values.iter().map(|v| v * factor).collect())
    }

    /// Elementwise `|self - other|`.
    pub fn abs_diff(&self, other: &Field) -> Result<Field> {
        same_size(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Field::new(self.size, values)
    }

    /// Counter-clockwise quarter turn: `out[i][j] = in[j][H-1-i]`.
    pub fn rot90(&self) -> Field {
        Field {
            size: self.size,
            values: rotate_quarter(&self.values, self.size),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_size(size: usize) -> Result<()> {
    if size < 4 || !size.is_power_of_two() {
        return Err(Error::InvalidField(format!(
            "grid size {size} must be a power of two >= 4"
        )));
    }
    Ok(())
}

fn same_size(a: &Field, b: &Field) -> Result<()> {
    if a.size != b.size {
        return Err(Error::DimensionMismatch {
            expected: a.size,
            found: b.size,
        });
    }
    Ok(())
}

/// Quarter-turn permutation on a raw row-major square of side `size`.
pub fn rotate_quarter(values: &[f64], size: usize) -> Vec<f64> {
    assert_eq!(values.len(), size * size, "not a square array");
    let mut out = vec![0.0; values.len()];
    for i in 0..size {
        for j in 0..size {
            out[i * size + j] = values[j * size + (size - 1 - i)];
        }
    }
    out
}

/// Frobenius norm of the elementwise difference of two equal-length arrays.
pub fn frobenius_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Unnormalized L2 distance `sqrt(sum (a - b)^2)` between two fields.
pub fn l2_dist(a: &Field, b: &Field) -> Result<f64> {
    same_size(a, b)?;
    Ok(frobenius_distance(&a.values, &b.values))
}

/// A time-ordered run of fields sharing one grid, sampled every `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    frames: Vec<Field>,
    dt: f64,
}

impl Trajectory {
    pub fn new(frames: Vec<Field>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!(
                "trajectory dt must be positive, got {dt}"
            )));
        }
        if frames.len() < 2 {
            return Err(Error::invalid(format!(
                "trajectory needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let size = frames[0].size();
        if let Some(bad) = frames.iter().find(|f| f.size() != size) {
            return Err(Error::DimensionMismatch {
                expected: size,
                found: bad.size(),
            });
        }
        Ok(Trajectory { frames, dt })
    }

    pub fn frames(&self) -> &[Field] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Field> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn size(&self) -> usize {
        self.frames[0].size()
    }

    pub fn rot90(&self) -> Trajectory {
        Trajectory {
            frames: self.frames.iter().map(Field::rot90).collect(),
            dt: self.dt,
        }
    }
}

/// Disjoint index sets over a collection of trajectories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub cal: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplits {
    pub fn sizes(&self) -> (usize, usize, usize, usize) {
        (
            self.train.len(),
            self.val.len(),
            self.cal.len(),
            self.test.len(),
        )
    }
}

/// Smallest collection for which the 5% calibration and test shares are
/// nonempty.
pub const MIN_TRAJECTORIES: usize = 20;

/// Shuffles `0..n_traj` by `seed` and cuts it 70/20/5/5 into
/// train/val/cal/test. Val, cal and test use the floor of their share;
/// the remainder goes to train.
pub fn make_splits(n_traj: usize, seed: u64) -> Result<DatasetSplits> {
    if n_traj < MIN_TRAJECTORIES {
        return Err(Error::invalid(format!(
            "need at least {MIN_TRAJECTORIES} trajectories for nonempty cal/test splits, got {n_traj}"
        )));
    }
    let n_val = n_traj * 20 / 100;
    let n_cal = n_traj * 5 / 100;
    let n_test = n_traj * 5 / 100;
    let n_train = n_traj - n_val - n_cal - n_test;

    let mut order: Vec<usize> = (0..n_traj).collect();
    order.shuffle(&mut seeding::rng(seed, 0x0005_9117));

    let mut take = {
        let mut rest = order.as_slice();
        move |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            let mut v = head.to_vec();
            v.sort_unstable();
            v
        }
    };
    Ok(DatasetSplits {
        train: take(n_train),
        val: take(n_val),
        cal: take(n_cal),
        test: take(n_test),
    })
}
