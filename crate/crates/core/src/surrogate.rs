//! Linear spectral forecaster.
//!
//! The model predicts every retained Fourier mode of the next frame as a
//! linear combination of the same mode over the last `W` frames:
//!
//! ```text
//! û_{n+1}(k) = Σ_j c(k, j) · u_{n-W+1+j}(k),   max(|kx|, |ky|) <= K
//! ```
//!
//! Modes outside the cutoff are predicted as zero. Window position `j = 0`
//! is the oldest frame. Coefficients satisfy `c(-k, j) = conj(c(k, j))`
//! so real windows produce real forecasts.
//!
//! Training is plain mini-batch gradient descent under a cosine-annealed
//! learning rate; the model at the end of each annealing cycle is kept as a
//! snapshot.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::RngExt;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Trajectory};
use crate::io::{self, Manifest, ModelRecord};
use crate::seeding;
use crate::sim::step_diffusion_exact;
use crate::spectral::{conjugate_index, fft2, ifft2, wavenumber, SpectralField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Anything that maps a window of past frames to the next frame.
pub trait Forecaster: Sync {
    fn size(&self) -> usize;

    fn window_len(&self) -> usize;

    fn predict(&self, window: &[Field]) -> Result<Field>;

    /// Autoregressive forecast of `horizon` frames: each prediction is
    /// appended to the window and the oldest frame dropped.
    fn rollout(&self, init: &[Field], horizon: usize) -> Result<Vec<Field>> {
        check_window(init, self.window_len(), self.size())?;
        check_horizon(horizon)?;
        let mut window: VecDeque<Field> = init.iter().cloned().collect();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let next = self.predict(window.make_contiguous())?;
            window.pop_front();
            window.push_back(next.clone());
            out.push(next);
        }
        Ok(out)
    }
}

fn check_window(window: &[Field], len: usize, size: usize) -> Result<()> {
    if window.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            found: window.len(),
        });
    }
    if let Some(bad) = window.iter().find(|f| f.size() != size) {
        return Err(Error::DimensionMismatch {
            expected: size,
            found: bad.size(),
        });
    }
    Ok(())
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        Err(Error::invalid("rollout horizon must be at least 1"))
    } else {
        Ok(())
    }
}

fn check_dropout_rate(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "dropout rate must lie in [0, 1), got {p}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RolloutMode {
    Deterministic,
    Dropout { p: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub window: usize,
    /// Mode cutoff `K`; `None` means `H/4`.
    pub cutoff: Option<usize>,
    pub batch_size: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            window: 10,
            cutoff: None,
            batch_size: 16,
        }
    }
}

impl SurrogateConfig {
    pub fn cutoff_for(&self, size: usize) -> usize {
        self.cutoff.unwrap_or(size / 4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    size: usize,
    window: usize,
    cutoff: usize,
    /// `size*size*window`, mode-major.
    coeffs: Vec<Complex64>,
    /// Storage indices of retained modes, ascending.
    active: Vec<usize>,
    /// Conjugate-pair id of each retained mode, used for dropout masks.
    pair_of: Vec<usize>,
    n_pairs: usize,
}

impl SurrogateModel {
    pub fn zeros(size: usize, window: usize, cutoff: usize) -> Result<Self> {
        Self::from_parts(size, window, cutoff, vec![ZERO; size * size * window])
    }

    fn from_parts(
        size: usize,
        window: usize,
        cutoff: usize,
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        if size < 4 || !size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "grid size {size} must be a power of two >= 4"
            )));
        }
        if window == 0 {
            return Err(Error::invalid("model window must be at least 1"));
        }
        if cutoff + 1 > size / 2 {
            return Err(Error::invalid(format!(
                "mode cutoff {cutoff} must be at most H/2 - 1 = {}",
                size / 2 - 1
            )));
        }
        if coeffs.len() != size * size * window {
            return Err(Error::DimensionMismatch {
                expected: size * size * window,
                found: coeffs.len(),
            });
        }
        let k = cutoff as i64;
        let active: Vec<usize> = (0..size * size)
            .filter(|&c| {
                wavenumber(c / size, size).abs() <= k && wavenumber(c % size, size).abs() <= k
            })
            .collect();
        let mut pair_id = vec![usize::MAX; size * size];
        let mut n_pairs = 0;
        let mut pair_of = Vec::with_capacity(active.len());
        for &c in &active {
            let partner = conjugate_index(c / size, size) * size + conjugate_index(c % size, size);
            if pair_id[c] == usize::MAX {
                pair_id[c] = n_pairs;
                pair_id[partner] = n_pairs;
                n_pairs += 1;
            }
            pair_of.push(pair_id[c]);
        }
        let mut model = SurrogateModel {
            size,
            window,
            cutoff,
            coeffs,
            active,
            pair_of,
            n_pairs,
        };
        model.zero_inactive();
        Ok(model)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Weight of window position `j` for wavenumber `(ky, kx)`.
    pub fn coefficient(&self, ky: i64, kx: i64, j: usize) -> Complex64 {
        let n = self.size as i64;
        let c = ky.rem_euclid(n) as usize * self.size + kx.rem_euclid(n) as usize;
        self.coeffs[c * self.window + j]
    }

    pub fn active_modes(&self) -> &[usize] {
        &self.active
    }

    fn partner(&self, c: usize) -> usize {
        conjugate_index(c / self.size, self.size) * self.size
            + conjugate_index(c % self.size, self.size)
    }

    fn zero_inactive(&mut self) {
        let mut keep = vec![false; self.size * self.size];
        for &c in &self.active {
            keep[c] = true;
        }
        for (c, kept) in keep.into_iter().enumerate() {
            if !kept {
                self.coeffs[c * self.window..(c + 1) * self.window].fill(ZERO);
            }
        }
    }

    /// Projects the coefficients onto `c(-k) = conj(c(k))`.
    pub fn enforce_conjugate_symmetry(&mut self) {
        let w = self.window;
        for &c in &self.active {
            let p = self.partner(c);
            if p < c {
                continue;
            }
            for j in 0..w {
                let a = self.coeffs[c * w + j];
                let b = self.coeffs[p * w + j];
                let sym = 0.5 * (a + b.conj());
                self.coeffs[c * w + j] = sym;
                self.coeffs[p * w + j] = sym.conj();
            }
        }
    }

    fn spectral_window(&self, window: &[Field]) -> Result<VecDeque<Vec<Complex64>>> {
        check_window(window, self.window, self.size)?;
        Ok(window.iter().map(|f| fft2(f).into_coeffs()).collect())
    }

    fn dropout_mask(&self, p: f64, seed: u64, call: u64) -> Vec<f64> {
        let mut rng = seeding::rng(seed, call);
        let keep_scale = 1.0 / (1.0 - p);
        (0..self.n_pairs)
            .map(|_| {
                if rng.random_bool(1.0 - p) {
                    keep_scale
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn predict_spectral(
        &self,
        window: &VecDeque<Vec<Complex64>>,
        mask: Option<&[f64]>,
    ) -> Vec<Complex64> {
        let w = self.window;
        let mut out = vec![ZERO; self.size * self.size];
        for (a, &c) in self.active.iter().enumerate() {
            let mut acc = ZERO;
            for (j, frame) in window.iter().enumerate() {
                acc += self.coeffs[c * w + j] * frame[c];
            }
            if let Some(mask) = mask {
                acc *= mask[self.pair_of[a]];
            }
            out[c] = acc;
        }
        out
    }

    fn to_field(&self, spec: Vec<Complex64>) -> Result<Field> {
        ifft2(&SpectralField::new(self.size, spec)?).map_err(|e| match e {
            Error::InvalidField(msg) => Error::numeric(format!("forecast is not finite: {msg}")),
            other => other,
        })
    }

    /// One forecast where each conjugate mode pair is kept with
    /// probability `1 - p` and survivors are scaled by `1/(1 - p)`.
    pub fn predict_dropout(&self, window: &[Field], p: f64, seed: u64) -> Result<Field> {
        Ok(self
            .rollout_with(window, 1, RolloutMode::Dropout { p, seed })?
            .pop()
            .expect("horizon 1"))
    }

    pub fn rollout_with(
        &self,
        init: &[Field],
        horizon: usize,
        mode: RolloutMode,
    ) -> Result<Vec<Field>> {
        check_horizon(horizon)?;
        if let RolloutMode::Dropout { p, .. } = mode {
            check_dropout_rate(p)?;
        }
        let mut window = self.spectral_window(init)?;
        let mut out = Vec::with_capacity(horizon);
        for step in 0..horizon {
            let spec = match mode {
                RolloutMode::Dropout { p, seed } if p > 0.0 => {
                    let mask = self.dropout_mask(p, seed, step as u64);
                    self.predict_spectral(&window, Some(&mask))
                }
                _ => self.predict_spectral(&window, None),
            };
            out.push(self.to_field(spec.clone())?);
            window.pop_front();
            window.push_back(spec);
        }
        Ok(out)
    }

    pub fn to_record(&self) -> ModelRecord {
        ModelRecord {
            size: self.size,
            window: self.window,
            cutoff: self.cutoff,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn from_record(rec: ModelRecord) -> Result<Self> {
        Self::from_parts(rec.size, rec.window, rec.cutoff, rec.coeffs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_model(path, &self.to_record())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rec = io::read_model(path)?;
        Self::from_record(rec).map_err(|e| Error::format(path, e.to_string()))
    }
}

impl Forecaster for SurrogateModel {
    fn size(&self) -> usize {
        self.size
    }

    fn window_len(&self) -> usize {
        self.window
    }

    fn predict(&self, window: &[Field]) -> Result<Field> {
        Ok(self
            .rollout_with(window, 1, RolloutMode::Deterministic)?
            .pop()
            .expect("horizon 1"))
    }

    fn rollout(&self, init: &[Field], horizon: usize) -> Result<Vec<Field>> {
        self.rollout_with(init, horizon, RolloutMode::Deterministic)
    }
}

/// Free-function form of [`SurrogateModel::rollout_with`].
pub fn rollout(
    model: &SurrogateModel,
    init: &[Field],
    horizon: usize,
    mode: RolloutMode,
) -> Result<Vec<Field>> {
    model.rollout_with(init, horizon, mode)
}

/// The exact heat-equation propagator behind the forecaster interface.
/// Commutes with quarter turns, which makes it the reference model for
/// symmetry checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPropagator {
    pub size: usize,
    pub window: usize,
    pub nu: f64,
    pub frame_dt: f64,
}

impl Forecaster for DiffusionPropagator {
    fn size(&self) -> usize {
        self.size
    }

    fn window_len(&self) -> usize {
        self.window
    }

    fn predict(&self, window: &[Field]) -> Result<Field> {
        check_window(window, self.window, self.size)?;
        step_diffusion_exact(window.last().expect("window >= 1"), self.nu, self.frame_dt)
    }
}

/// Cosine-annealing schedule repeated for `cycles` cycles of `cycle_len`
/// steps each.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub eta_max: f64,
    pub eta_min: f64,
    pub cycle_len: usize,
    pub cycles: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            eta_max: 0.01,
            eta_min: 0.0001,
            cycle_len: 100,
            cycles: 6,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_max > self.eta_min && self.eta_min > 0.0) {
            return Err(Error::Config(format!(
                "need eta_max > eta_min > 0, got {} and {}",
                self.eta_max, self.eta_min
            )));
        }
        if self.cycle_len < 2 || self.cycles == 0 {
            return Err(Error::Config("need cycle_len >= 2 and cycles >= 1".into()));
        }
        Ok(())
    }
}

/// `eta_min + (eta_max - eta_min)(1 + cos(pi t / T)) / 2` for `0 <= t <= T`.
pub fn lr_at(schedule: &TrainSchedule, t: usize) -> Result<f64> {
    if t > schedule.cycle_len {
        return Err(Error::invalid(format!(
            "schedule position {t} outside [0, {}]",
            schedule.cycle_len
        )));
    }
    let w = 0.5 * (1.0 + (t as f64 / schedule.cycle_len as f64 * PI).cos());
    // Weighted form so that both endpoints are reproduced exactly.
    Ok(w * schedule.eta_max + (1.0 - w) * schedule.eta_min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleLoss {
    pub start: f64,
    pub end: f64,
}

/// Models saved at the end of each annealing cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub snapshots: Vec<SurrogateModel>,
    /// Full-data training loss around each cycle; empty when loaded from disk.
    pub cycle_losses: Vec<CycleLoss>,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// The last snapshot, i.e. the fully trained model.
    pub fn last(&self) -> Option<&SurrogateModel> {
        self.snapshots.last()
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let first = self
            .snapshots
            .first()
            .ok_or_else(|| Error::invalid("empty snapshot set"))?;
        let mut manifest = Manifest::new();
        manifest.insert("count".into(), self.len().to_string());
        manifest.insert("size".into(), first.size.to_string());
        manifest.insert("window".into(), first.window.to_string());
        manifest.insert("cutoff".into(), first.cutoff.to_string());
        for (i, m) in self.snapshots.iter().enumerate() {
            m.save(&dir.join(format!("snapshot_{i:02}.cdym")))?;
        }
        io::write_manifest(&dir.join("manifest.txt"), &manifest)
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.txt");
        let manifest = io::read_manifest(&manifest_path)?;
        let count: usize = manifest
            .get("count")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(&manifest_path, "missing or invalid 'count'"))?;
        let snapshots = (0..count)
            .map(|i| SurrogateModel::load(&dir.join(format!("snapshot_{i:02}.cdym"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = snapshots.first() {
            if snapshots
                .iter()
                .any(|m| (m.size, m.window, m.cutoff) != (first.size, first.window, first.cutoff))
            {
                return Err(Error::format(dir, "snapshots disagree on (H, W, K)"));
            }
        }
        Ok(SnapshotSet {
            snapshots,
            cycle_losses: Vec::new(),
        })
    }
}

/// Spectral training pairs restricted to the retained modes.
struct TrainingData {
    /// `[trajectory][frame][retained mode]`.
    frames: Vec<Vec<Vec<Complex64>>>,
    /// `(trajectory, first window frame)`.
    pairs: Vec<(usize, usize)>,
    /// Inverse mean input power per retained mode; zero freezes the mode.
    inv_power: Vec<f64>,
    window: usize,
}

// Modes whose input power is this far below the strongest mode carry only
// roundoff (e.g. the mean of zero-mean data) and are left at zero.
const POWER_FLOOR: f64 = 1e-20;

impl TrainingData {
    fn new(data: &[Trajectory], model: &SurrogateModel) -> Result<Self> {
        let w = model.window;
        if data.is_empty() {
            return Err(Error::invalid("training data is empty"));
        }
        let mut frames = Vec::with_capacity(data.len());
        let mut pairs = Vec::new();
        for (t, traj) in data.iter().enumerate() {
            if traj.size() != model.size {
                return Err(Error::DimensionMismatch {
                    expected: model.size,
                    found: traj.size(),
                });
            }
            if traj.len() < w + 1 {
                return Err(Error::invalid(format!(
                    "trajectory {t} has {} frames, need at least {}",
                    traj.len(),
                    w + 1
                )));
            }
            let spec: Vec<Vec<Complex64>> = traj
                .frames()
                .iter()
                .map(|f| {
                    let full = fft2(f).into_coeffs();
                    model.active.iter().map(|&c| full[c]).collect()
                })
                .collect();
            pairs.extend((0..=traj.len() - w - 1).map(|s| (t, s)));
            frames.push(spec);
        }
        let n_modes = model.active.len();
        let mut power = vec![0.0; n_modes];
        for &(t, s) in &pairs {
            for frame in &frames[t][s..s + w] {
                for (a, z) in frame.iter().enumerate() {
                    power[a] += z.norm_sqr();
                }
            }
        }
        let denom = (pairs.len() * w) as f64;
        let max_power = power.iter().fold(0.0f64, |m, &p| m.max(p / denom));
        let inv_power = power
            .iter()
            .map(|&p| {
                let p = p / denom;
                if p > POWER_FLOOR * max_power && p > 0.0 {
                    1.0 / p
                } else {
                    0.0
                }
            })
            .collect();
        Ok(TrainingData {
            frames,
            pairs,
            inv_power,
            window: w,
        })
    }

    fn inputs(&self, pair: (usize, usize)) -> (&[Vec<Complex64>], &[Complex64]) {
        let (t, s) = pair;
        (
            &self.frames[t][s..s + self.window],
            &self.frames[t][s + self.window],
        )
    }

    /// Mean over pairs and modes of the power-normalized squared error.
    fn loss(&self, model: &SurrogateModel) -> f64 {
        let w = self.window;
        let n_modes = model.active.len();
        let mut total = 0.0;
        for &pair in &self.pairs {
            let (x, y) = self.inputs(pair);
            for (a, &c) in model.active.iter().enumerate() {
                let mut pred = ZERO;
                for j in 0..w {
                    pred += model.coeffs[c * w + j] * x[j][a];
                }
                total += self.inv_power[a] * (y[a] - pred).norm_sqr();
            }
        }
        total / (self.pairs.len() * n_modes) as f64
    }

    fn gradient_step(&self, model: &mut SurrogateModel, batch: &[(usize, usize)], lr: f64) {
        let w = self.window;
        let mut grad = vec![ZERO; w];
        for (a, &c) in model.active.iter().enumerate() {
            if self.inv_power[a] == 0.0 {
                continue;
            }
            grad.fill(ZERO);
            for &pair in batch {
                let (x, y) = self.inputs(pair);
                let mut pred = ZERO;
                for j in 0..w {
                    pred += model.coeffs[c * w + j] * x[j][a];
                }
                let r = y[a] - pred;
                for j in 0..w {
                    grad[j] += r * x[j][a].conj();
                }
            }
            let step = lr * self.inv_power[a] / batch.len() as f64;
            for j in 0..w {
                model.coeffs[c * w + j] += step * grad[j];
            }
        }
        model.enforce_conjugate_symmetry();
    }
}

/// Trains one model through `schedule.cycles` annealing cycles and keeps
/// the model at the end of every cycle.
pub fn train_snapshots(
    data: &[Trajectory],
    cfg: &SurrogateConfig,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<SnapshotSet> {
    schedule.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let size = data
        .first()
        .ok_or_else(|| Error::invalid("training data is empty"))?
        .size();
    let mut model = SurrogateModel::zeros(size, cfg.window, cfg.cutoff_for(size))?;
    let train = TrainingData::new(data, &model)?;
    let batch_len = cfg.batch_size.min(train.pairs.len());

    let mut snapshots = Vec::with_capacity(schedule.cycles);
    let mut cycle_losses = Vec::with_capacity(schedule.cycles);
    let mut order: Vec<(usize, usize)> = train.pairs.clone();
    let mut batch = Vec::with_capacity(batch_len);
    for cycle in 0..schedule.cycles {
        order.shuffle(&mut seeding::rng(seed, cycle as u64));
        let start = train.loss(&model);
        for step in 0..schedule.cycle_len {
            batch.clear();
            batch.extend((0..batch_len).map(|b| order[(step * batch_len + b) % order.len()]));
            // Positions 1..=T, so the last step of a cycle runs at eta_min.
            let lr = lr_at(schedule, step + 1)?;
            train.gradient_step(&mut model, &batch, lr);
            if model
                .coeffs
                .iter()
                .any(|z| !z.re.is_finite() || !z.im.is_finite())
            {
                return Err(Error::numeric(format!(
                    "training diverged at cycle {cycle}, step {step}"
                )));
            }
        }
        let end = train.loss(&model);
        if !end.is_finite() {
            return Err(Error::numeric(format!(
                "training loss is not finite at the end of cycle {cycle}"
            )));
        }
        cycle_losses.push(CycleLoss { start, end });
        snapshots.push(model.clone());
    }
    Ok(SnapshotSet {
        snapshots,
        cycle_losses,
    })
}

/// Mean power-normalized one-step training loss of `model` on `data`.
pub fn training_loss(model: &SurrogateModel, data: &[Trajectory]) -> Result<f64> {
    Ok(TrainingData::new(data, model)?.loss(model))
}

/// Closed-form per-mode ridge regression,
/// minimizing `Σ |y - Σ_j c_j x_j|² + λ Σ_j |c_j|²` for every retained mode.
pub fn fit_ridge(
    data: &[Trajectory],
    cfg: &SurrogateConfig,
    lambda: f64,
) -> Result<SurrogateModel> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "ridge lambda must be >= 0, got {lambda}"
        )));
    }
    let size = data
        .first()
        .ok_or_else(|| Error::invalid("training data is empty"))?
        .size();
    let mut model = SurrogateModel::zeros(size, cfg.window, cfg.cutoff_for(size))?;
    let train = TrainingData::new(data, &model)?;
    let w = cfg.window;
    for (a, &c) in model.active.clone().iter().enumerate() {
        if train.inv_power[a] == 0.0 {
            continue;
        }
        // (Σ conj(x) x^T + λ I) c = Σ conj(x) y
        let mut lhs = vec![ZERO; w * w];
        let mut rhs = vec![ZERO; w];
        for &pair in &train.pairs {
            let (x, y) = train.inputs(pair);
            for j in 0..w {
                let xj = x[j][a].conj();
                rhs[j] += xj * y[a];
                for l in 0..w {
                    lhs[j * w + l] += xj * x[l][a];
                }
            }
        }
        for j in 0..w {
            lhs[j * w + j] += lambda;
        }
        let sol = solve_complex(&mut lhs, &mut rhs, w).ok_or_else(|| {
            let (ky, kx) = (wavenumber(c / size, size), wavenumber(c % size, size));
            Error::numeric(format!("singular normal equations for mode ({ky}, {kx})"))
        })?;
        model.coeffs[c * w..(c + 1) * w].copy_from_slice(&sol);
    }
    model.enforce_conjugate_symmetry();
    Ok(model)
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_complex(a: &mut [Complex64], b: &mut [Complex64], n: usize) -> Option<Vec<Complex64>> {
    let scale = (0..n).fold(0.0f64, |m, i| m.max(a[i * n + i].norm()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r * n + col].norm().total_cmp(&a[s * n + col].norm()))
            .unwrap();
        if a[pivot * n + col].norm() <= 1e-13 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for r in (col + 1)..n {
            let f = a[r * n + col] / d;
            if f == ZERO {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![ZERO; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for k in (r + 1)..n {
            acc -= a[r * n + k] * x[k];
        }
        x[r] = acc / a[r * n + r];
    }
    Some(x)
}
