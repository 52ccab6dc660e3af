use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use confdyn::harness::{self, table_row};
use confdyn::{plot, Error, ExperimentConfig, Method, ModelKind, Result};

#[derive(Parser)]
#[command(
    name = "confdyn",
    version,
    about = "Uncertainty quantification for learned PDE surrogates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Config file of `[section]` and `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the dataset into the cache.
    Generate(Common),
    /// Train the snapshot set into the cache.
    Train(Common),
    /// Evaluate one uncertainty method and write a run directory.
    Eval {
        #[command(flatten)]
        common: Common,
        /// cp, dropout or ensemble.
        #[arg(long, default_value = "cp")]
        method: String,
    },
    /// Compare conformal results on original and rotated data.
    Symmetry(Common),
    /// Re-render the plots of a run directory.
    Plot {
        #[arg(long)]
        run: PathBuf,
    },
    /// Run all three methods and print a metric table.
    Report(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_header() {
    println!(
        "{:<10} {:<10} {:<8}{:<8}{:<8}{:<8}RA",
        "method", "model", "MAE", "RMSE", "Sharp", "MA"
    );
}

fn print_eval(eval: &harness::Evaluation) {
    let r = &eval.report;
    println!(
        "{}",
        table_row(
            eval.method.tag(),
            &eval.model.to_string(),
            &[r.mae, r.rmse, r.sharpness, r.ma, r.ra]
        )
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = load(&common)?;
            let data = harness::generate(&cfg)?;
            println!(
                "{} trajectories of {} frames",
                data.len(),
                cfg.sim.frames_per_traj
            );
        }
        Command::Train(common) => {
            let cfg = load(&common)?;
            if cfg.model == ModelKind::Oracle {
                return Err(Error::Config("the oracle model is not trained".into()));
            }
            let prepared = harness::prepare(&cfg)?;
            let set = prepared.snapshots.expect("surrogate is trained");
            println!("{} snapshots", set.len());
            for (i, c) in set.cycle_losses.iter().enumerate() {
                println!("cycle {}: loss {:.6} -> {:.6}", i + 1, c.start, c.end);
            }
        }
        Command::Eval { common, method } => {
            let cfg = load(&common)?;
            let method: Method = method.parse()?;
            let out = harness::run_experiment(&cfg, method)?;
            print_header();
            print_eval(&out.evaluation);
            println!("artifacts: {}", out.dir.display());
        }
        Command::Symmetry(common) => {
            let cfg = load(&common)?;
            let out = harness::run_symmetry(&cfg)?;
            print_header();
            print_eval(&out.unrotated);
            print_eval(&out.rotated);
            println!("artifacts: {}", out.dir.display());
        }
        Command::Plot { run } => {
            for path in plot::emit_plots(&run)? {
                println!("{}", path.display());
            }
        }
        Command::Report(common) => {
            let cfg = load(&common)?;
            let methods: &[Method] = match cfg.model {
                ModelKind::Surrogate => &Method::ALL,
                ModelKind::Oracle => &[Method::Conformal],
            };
            print_header();
            for &m in methods {
                print_eval(&harness::run_experiment(&cfg, m)?.evaluation);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
