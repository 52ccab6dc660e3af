//! Data generation on the periodic square `[0, 2π)²`.
//!
//! Two solvers are provided: the exact spectral heat-equation propagator,
//! which doubles as an analytic oracle, and a pseudo-spectral RK4 stepper
//! for the 2D vorticity equation
//!
//! ```text
//! ∂ω/∂t + u·∇ω = ν∇²ω + f,   ∇²ψ = −ω,   u = (∂ψ/∂y, −∂ψ/∂x)
//! ```
//!
//! with 2/3-rule dealiasing of the advection term. Wavenumbers are integers.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Trajectory};
use crate::seeding;
use crate::spectral::{fft2, ifft2, transform_in_place, wavenumber, SpectralField};

/// Frames needed for a 10-frame input window plus a 10-step rollout.
pub const MIN_FRAMES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    NavierStokes,
    Diffusion,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::NavierStokes => "navier-stokes",
            Solver::Diffusion => "diffusion",
        })
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "navier-stokes" | "ns" => Ok(Solver::NavierStokes),
            "diffusion" => Ok(Solver::Diffusion),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

/// Simulation settings. The defaults are desk-scale stand-ins for the
/// benchmark fluid dataset, not values taken from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub size: usize,
    pub nu: f64,
    pub dt: f64,
    pub frames_per_traj: usize,
    /// Solver steps between recorded frames.
    pub record_every: usize,
    pub forcing_amplitude: f64,
    pub spectrum_slope: f64,
    pub seed: u64,
    pub solver: Solver,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            size: 32,
            nu: 1e-3,
            dt: 1e-2,
            frames_per_traj: 30,
            record_every: 10,
            forcing_amplitude: 0.1,
            spectrum_slope: 4.0,
            seed: 0,
            solver: Solver::NavierStokes,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 4 || !self.size.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size {} must be a power of two >= 4",
                self.size
            )));
        }
        if !(self.nu > 0.0) || !(self.dt > 0.0) {
            return Err(Error::Config("nu and dt must be positive".into()));
        }
        if self.frames_per_traj < MIN_FRAMES {
            return Err(Error::Config(format!(
                "frames_per_traj must be at least {MIN_FRAMES}, got {}",
                self.frames_per_traj
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !self.spectrum_slope.is_finite() || !self.forcing_amplitude.is_finite() {
            return Err(Error::Config(
                "spectrum_slope and forcing_amplitude must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Time between recorded frames.
    pub fn frame_dt(&self) -> f64 {
        self.dt * self.record_every as f64
    }
}

fn squared_wavenumber(i: usize, j: usize, n: usize) -> f64 {
    let ky = wavenumber(i, n) as f64;
    let kx = wavenumber(j, n) as f64;
    kx * kx + ky * ky
}

/// Zero-mean Gaussian random field with power spectrum `|k|^-slope`,
/// scaled to unit expected variance. Seeded by `(cfg.seed, traj_index)`.
pub fn grf_init(cfg: &SimConfig, traj_index: u64) -> Result<Field> {
    let n = cfg.size;
    let mut rng = seeding::rng(cfg.seed, traj_index);
    let noise: Vec<f64> = (0..n * n)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut spec = fft2(&Field::new(n, noise)?).into_coeffs();

    let power = |i: usize, j: usize| {
        let k2 = squared_wavenumber(i, j, n);
        if k2 == 0.0 {
            0.0
        } else {
            k2.powf(-cfg.spectrum_slope / 2.0)
        }
    };
    let total: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| power(i, j))
        .sum();
    // E|noise_hat|^2 = n^2, so this gives E[f^2] = 1.
    let norm = n as f64 / total.sqrt();
    for i in 0..n {
        for j in 0..n {
            spec[i * n + j] *= power(i, j).sqrt() * norm;
        }
    }
    spec[0] = Complex64::new(0.0, 0.0);
    ifft2(&SpectralField::new(n, spec)?)
}

/// Exact heat-equation step: every mode is damped by `exp(-nu |k|^2 dt)`.
pub fn step_diffusion_exact(f: &Field, nu: f64, dt: f64) -> Result<Field> {
    let n = f.size();
    let mut spec = fft2(f).into_coeffs();
    for i in 0..n {
        for j in 0..n {
            spec[i * n + j] *= (-nu * squared_wavenumber(i, j, n) * dt).exp();
        }
    }
    ifft2(&SpectralField::new(n, spec)?)
}

/// Largest Courant number accepted by the vorticity stepper.
pub const MAX_COURANT: f64 = 1.0;
// RK4 real-axis stability limit is about 2.785.
const MAX_VISCOUS_NUMBER: f64 = 2.5;

/// Pseudo-spectral RK4 stepper for the forced 2D vorticity equation.
#[derive(Debug, Clone)]
pub struct NavierStokes {
    n: usize,
    nu: f64,
    dt: f64,
    kx: Vec<f64>,
    ky: Vec<f64>,
    k2: Vec<f64>,
    keep: Vec<bool>,
    forcing: Vec<Complex64>,
}

impl NavierStokes {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        Self::with_dt(cfg, cfg.dt)
    }

    pub fn with_dt(cfg: &SimConfig, dt: f64) -> Result<Self> {
        let n = cfg.size;
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::invalid(format!(
                "grid size {n} must be a power of two >= 4"
            )));
        }
        if !(cfg.nu > 0.0) || !(dt > 0.0) {
            return Err(Error::invalid("nu and dt must be positive"));
        }
        let mut kx = vec![0.0; n * n];
        let mut ky = vec![0.0; n * n];
        let mut k2 = vec![0.0; n * n];
        let mut keep = vec![false; n * n];
        let cut = n as f64 / 3.0;
        for i in 0..n {
            for j in 0..n {
                let c = i * n + j;
                ky[c] = wavenumber(i, n) as f64;
                kx[c] = wavenumber(j, n) as f64;
                k2[c] = kx[c] * kx[c] + ky[c] * ky[c];
                keep[c] = kx[c].abs() < cut && ky[c].abs() < cut;
            }
        }
        // The advection term has zero spatial mean; drop its k = 0 roundoff.
        keep[0] = false;

        let k_max = (n / 2) as f64;
        let viscous = cfg.nu * 2.0 * k_max * k_max * dt;
        if viscous > MAX_VISCOUS_NUMBER {
            return Err(Error::numeric(format!(
                "viscous stability limit exceeded: nu*kmax^2*dt = {viscous:.3}"
            )));
        }

        let a = cfg.forcing_amplitude;
        let forcing_field = Field::from_fn(n, |i, j| {
            let phase = 2.0 * PI * ((j as f64 + i as f64) / n as f64);
            a * (phase.sin() + phase.cos())
        })?;
        let mut forcing = fft2(&forcing_field).into_coeffs();
        forcing[0] = Complex64::new(0.0, 0.0);

        Ok(NavierStokes {
            n,
            nu: cfg.nu,
            dt,
            kx,
            ky,
            k2,
            keep,
            forcing,
        })
    }

    /// Time derivative of the vorticity spectrum. Returns the peak speed
    /// `max(|u| + |v|)` seen while evaluating the advection term.
    fn rhs(&self, w: &[Complex64], out: &mut [Complex64]) -> f64 {
        let n = self.n;
        let i = Complex64::new(0.0, 1.0);
        let zero = Complex64::new(0.0, 0.0);
        let mut u = vec![zero; n * n];
        let mut v = vec![zero; n * n];
        let mut wx = vec![zero; n * n];
        let mut wy = vec![zero; n * n];
        for c in 0..n * n {
            if self.k2[c] == 0.0 || !(self.keep[c]) {
                continue;
            }
            let psi = w[c] / self.k2[c];
            u[c] = i * self.ky[c] * psi;
            v[c] = -i * self.kx[c] * psi;
            wx[c] = i * self.kx[c] * w[c];
            wy[c] = i * self.ky[c] * w[c];
        }
        for buf in [&mut u, &mut v, &mut wx, &mut wy] {
            transform_in_place(buf, n, true);
        }
        let scale = 1.0 / (n * n) as f64;
        let mut speed: f64 = 0.0;
        let mut adv = vec![zero; n * n];
        for c in 0..n * n {
            let (uu, vv) = (u[c].re * scale, v[c].re * scale);
            speed = speed.max(uu.abs() + vv.abs());
            adv[c] = Complex64::new(uu * wx[c].re * scale + vv * wy[c].re * scale, 0.0);
        }
        transform_in_place(&mut adv, n, false);
        for c in 0..n * n {
            let nonlinear = if self.keep[c] { adv[c] } else { zero };
            out[c] = -nonlinear - self.nu * self.k2[c] * w[c] + self.forcing[c];
        }
        speed
    }

    /// Advances a vorticity spectrum by one RK4 step in place.
    pub fn step_spectral(&self, w: &mut [Complex64]) -> Result<()> {
        let len = w.len();
        let zero = Complex64::new(0.0, 0.0);
        let (mut k1, mut k2, mut k3, mut k4) = (
            vec![zero; len],
            vec![zero; len],
            vec![zero; len],
            vec![zero; len],
        );
        let mut tmp = vec![zero; len];
        let h = self.dt;

        let speed = self.rhs(w, &mut k1);
        let dx = 2.0 * PI / self.n as f64;
        let courant = speed * h / dx;
        if courant > MAX_COURANT {
            return Err(Error::numeric(format!(
                "CFL violation: Courant number {courant:.3} exceeds {MAX_COURANT}"
            )));
        }
        for c in 0..len {
            tmp[c] = w[c] + 0.5 * h * k1[c];
        }
        self.rhs(&tmp, &mut k2);
        for c in 0..len {
            tmp[c] = w[c] + 0.5 * h * k2[c];
        }
        self.rhs(&tmp, &mut k3);
        for c in 0..len {
            tmp[c] = w[c] + h * k3[c];
        }
        self.rhs(&tmp, &mut k4);
        for c in 0..len {
            w[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::numeric("vorticity blew up (non-finite spectrum)"));
        }
        Ok(())
    }

    pub fn step(&self, omega: &Field) -> Result<Field> {
        if omega.size() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: omega.size(),
            });
        }
        let mut w = fft2(omega).into_coeffs();
        self.step_spectral(&mut w)?;
        to_field(self.n, w)
    }
}

fn to_field(n: usize, spec: Vec<Complex64>) -> Result<Field> {
    ifft2(&SpectralField::new(n, spec)?).map_err(|e| match e {
        Error::InvalidField(msg) => Error::numeric(format!("solver produced invalid field: {msg}")),
        other => other,
    })
}

/// One RK4 step of the vorticity equation with `cfg.dt`.
pub fn step_ns(omega: &Field, cfg: &SimConfig) -> Result<Field> {
    NavierStokes::new(cfg)?.step(omega)
}

pub fn generate_trajectory(cfg: &SimConfig, traj_index: u64) -> Result<Trajectory> {
    let first = grf_init(cfg, traj_index)?;
    let mut frames = Vec::with_capacity(cfg.frames_per_traj);
    match cfg.solver {
        Solver::Diffusion => {
            frames.push(first);
            let frame_dt = cfg.frame_dt();
            for _ in 1..cfg.frames_per_traj {
                let next = step_diffusion_exact(frames.last().unwrap(), cfg.nu, frame_dt)?;
                frames.push(next);
            }
        }
        Solver::NavierStokes => {
            let solver = NavierStokes::new(cfg)?;
            let mut w = fft2(&first).into_coeffs();
            frames.push(first);
            for frame in 1..cfg.frames_per_traj {
                for _ in 0..cfg.record_every {
                    solver.step_spectral(&mut w).map_err(|e| {
                        Error::numeric(format!("trajectory {traj_index}, frame {frame}: {e}"))
                    })?;
                }
                frames.push(to_field(cfg.size, w.clone())?);
            }
        }
    }
    Trajectory::new(frames, cfg.frame_dt())
}

/// `n_traj` trajectories, generated in parallel and returned in index order.
pub fn generate_dataset(cfg: &SimConfig, n_traj: usize) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    (0..n_traj as u64)
        .into_par_iter()
        .map(|t| generate_trajectory(cfg, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SimConfig {
        SimConfig {
            size: 16,
            ..SimConfig::default()
        }
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn grf_is_deterministic_and_zero_mean() {
        let cfg = small_cfg();
        let a = grf_init(&cfg, 3).unwrap();
        assert_eq!(a, grf_init(&cfg, 3).unwrap());
        assert_ne!(a, grf_init(&cfg, 4).unwrap());
        assert!(a.mean().abs() < 1e-12);
    }

    #[test]
    fn grf_radial_spectrum_slope() {
        // Log-log regression of the shell-averaged power over 100 samples.
        let cfg = SimConfig {
            size: 32,
            spectrum_slope: 4.0,
            ..SimConfig::default()
        };
        let n = cfg.size;
        let shells = n / 2;
        let mut power = vec![0.0; shells];
        let mut count = vec![0usize; shells];
        for t in 0..100 {
            let s = fft2(&grf_init(&cfg, t).unwrap());
            for i in 0..n {
                for j in 0..n {
                    let k = squared_wavenumber(i, j, n).sqrt().round() as usize;
                    if (1..shells).contains(&k) {
                        power[k] += s.coeffs()[i * n + j].norm_sqr();
                        count[k] += 1;
                    }
                }
            }
        }
        let pts: Vec<(f64, f64)> = (1..shells)
            .map(|k| ((k as f64).ln(), (power[k] / count[k] as f64).ln()))
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 4.0).abs() < 0.15 * 4.0, "slope {slope}");
    }

    #[test]
    fn diffusion_examples() {
        let zero = Field::zeros(8).unwrap();
        assert_eq!(step_diffusion_exact(&zero, 0.1, 1.0).unwrap(), zero);

        let a = 0.7;
        let mode = Field::from_fn(8, |_, j| a * (2.0 * PI * j as f64 / 8.0).cos()).unwrap();
        let out = step_diffusion_exact(&mode, 0.1, 1.0).unwrap();
        let expected = mode.scaled((-0.1f64).exp()).unwrap();
        assert!(max_diff(&out, &expected) < 1e-12);
    }

    #[test]
    fn diffusion_semigroup() {
        let f = grf_init(&small_cfg(), 0).unwrap();
        let once = step_diffusion_exact(&f, 0.05, 0.4).unwrap();
        let twice =
            step_diffusion_exact(&step_diffusion_exact(&f, 0.05, 0.2).unwrap(), 0.05, 0.2).unwrap();
        assert!(max_diff(&once, &twice) < 1e-12);
    }

    #[test]
    fn diffusion_commutes_with_rotation() {
        let f = grf_init(&small_cfg(), 1).unwrap();
        let a = step_diffusion_exact(&f.rot90(), 0.02, 1.0).unwrap();
        let b = step_diffusion_exact(&f, 0.02, 1.0).unwrap().rot90();
        assert!(max_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn ns_conserves_mean() {
        let cfg = small_cfg();
        let solver = NavierStokes::new(&cfg).unwrap();
        let mut w = grf_init(&cfg, 2).unwrap();
        for _ in 0..20 {
            let next = solver.step(&w).unwrap();
            assert!((next.mean() - w.mean()).abs() < 1e-12);
            w = next;
        }
    }

    #[test]
    fn ns_unforced_enstrophy_decays() {
        let cfg = SimConfig {
            forcing_amplitude: 0.0,
            nu: 1e-2,
            ..small_cfg()
        };
        let solver = NavierStokes::new(&cfg).unwrap();
        let mut w = grf_init(&cfg, 5).unwrap();
        let mut prev = w.sum_squares();
        for _ in 0..100 {
            w = solver.step(&w).unwrap();
            let e = w.sum_squares();
            assert!(
                e <= prev * (1.0 + 1e-12),
                "enstrophy rose from {prev} to {e}"
            );
            prev = e;
        }
    }

    #[test]
    fn ns_rk4_is_fourth_order() {
        let cfg = SimConfig {
            nu: 1e-2,
            ..small_cfg()
        };
        let w0 = grf_init(&cfg, 3).unwrap();
        let advance = |dt: f64, steps: usize| {
            let solver = NavierStokes::with_dt(&cfg, dt).unwrap();
            (0..steps).fold(w0.clone(), |w, _| solver.step(&w).unwrap())
        };
        let (dt, t_end) = (0.1, 1.0);
        let steps = (t_end / dt) as usize;
        let reference = advance(dt / 8.0, steps * 8);
        let coarse = advance(dt, steps);
        let fine = advance(dt / 2.0, steps * 2);
        let ratio = l2(&coarse, &reference) / l2(&fine, &reference);
        assert!((12.0..=20.0).contains(&ratio), "error ratio {ratio}");
    }

    fn l2(a: &Field, b: &Field) -> f64 {
        crate::grid::l2_dist(a, b).unwrap()
    }

    #[test]
    fn ns_rejects_cfl_violation() {
        let cfg = SimConfig {
            dt: 5.0,
            nu: 1e-5,
            ..small_cfg()
        };
        let w = grf_init(&cfg, 0).unwrap().scaled(10.0).unwrap();
        let err = step_ns(&w, &cfg).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }

    #[test]
    fn diffusion_dataset_matches_iterated_step() {
        let cfg = SimConfig {
            solver: Solver::Diffusion,
            frames_per_traj: 20,
            ..small_cfg()
        };
        let data = generate_dataset(&cfg, 2).unwrap();
        for (t, traj) in data.iter().enumerate() {
            let mut f = grf_init(&cfg, t as u64).unwrap();
            assert_eq!(traj.frames()[0], f);
            for frame in &traj.frames()[1..] {
                f = step_diffusion_exact(&f, cfg.nu, cfg.frame_dt()).unwrap();
                assert_eq!(*frame, f);
            }
        }
        assert_eq!(data, generate_dataset(&cfg, 2).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig {
            frames_per_traj: 19,
            ..SimConfig::default()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            nu: 0.0,
            ..SimConfig::default()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            size: 24,
            ..SimConfig::default()
        }
        .validate()
        .is_err());
        assert!(SimConfig::default().validate().is_ok());
        assert_eq!("diffusion".parse::<Solver>().unwrap(), Solver::Diffusion);
        assert!("heat".parse::<Solver>().is_err());
    }
}
