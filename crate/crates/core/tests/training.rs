use confdyn::sim::{generate_dataset, SimConfig, Solver};
use confdyn::surrogate::{fit_ridge, train_snapshots, Forecaster, SurrogateConfig, TrainSchedule};
use confdyn::{l2_dist, Trajectory};

fn diffusion(n: usize, seed: u64) -> Vec<Trajectory> {
    let cfg = SimConfig {
        size: 16,
        nu: 2e-2,
        solver: Solver::Diffusion,
        seed,
        ..SimConfig::default()
    };
    generate_dataset(&cfg, n).unwrap()
}

/// RMS one-step error and RMS target over every window of `data`.
fn one_step<M: Forecaster>(model: &M, data: &[Trajectory]) -> (f64, f64) {
    let w = model.window_len();
    let (mut err, mut target, mut count) = (0.0, 0.0, 0.0);
    for t in data {
        for start in 0..t.len() - w {
            let pred = model.predict(&t.frames()[start..start + w]).unwrap();
            let truth = &t.frames()[start + w];
            err += l2_dist(&pred, truth).unwrap().powi(2);
            target += truth.sum_squares();
            count += (truth.size() * truth.size()) as f64;
        }
    }
    ((err / count).sqrt(), (target / count).sqrt())
}

#[test]
fn single_cycle_fits_diffusion() {
    let train = diffusion(24, 1);
    let val = diffusion(8, 2);
    let cfg = SurrogateConfig {
        window: 2,
        ..SurrogateConfig::default()
    };
    let schedule = TrainSchedule {
        cycle_len: 1500,
        cycles: 1,
        ..TrainSchedule::default()
    };
    let set = train_snapshots(&train, &cfg, &schedule, 3).unwrap();
    let (rmse, rms) = one_step(set.last().unwrap(), &val);
    assert!(
        rmse < 0.1 * rms,
        "validation RMSE {rmse} vs target RMS {rms}"
    );
}

#[test]
fn ridge_beats_every_snapshot() {
    let data = diffusion(16, 4);
    let cfg = SurrogateConfig {
        window: 1,
        ..SurrogateConfig::default()
    };
    let set = train_snapshots(&data, &cfg, &TrainSchedule::default(), 5).unwrap();
    let ridge = fit_ridge(&data, &cfg, 1e-12).unwrap();
    let (ridge_err, _) = one_step(&ridge, &data);
    for (i, snap) in set.snapshots.iter().enumerate() {
        let (err, _) = one_step(snap, &data);
        assert!(ridge_err <= err, "snapshot {i}: {err} < ridge {ridge_err}");
    }
}
