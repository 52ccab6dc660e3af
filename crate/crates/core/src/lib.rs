pub mod baselines;
pub mod config;
pub mod conformal;
pub mod error;
pub mod forecast;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod plot;
pub mod seeding;
pub mod sim;
pub mod spectral;
pub mod surrogate;

pub use config::{ExperimentConfig, ModelKind};
pub use error::{Error, Result};
pub use forecast::{Method, Sigma, UncertaintyForecast};
pub use grid::{l2_dist, make_splits, DatasetSplits, Field, Trajectory};
