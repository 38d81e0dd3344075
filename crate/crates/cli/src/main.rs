use clap::{Parser, Subcommand};
use glmfunk_cli::commands::{cmd_cv, cmd_fit, cmd_infer, cmd_predict, cmd_simulate, resolve_out_dir};
use glmfunk_cli::config::{ExperimentConfig, RunConfig, SimCliConfig};
use glmfunk_cli::error::AppError;
use glmfunk_cli::experiment::cmd_experiment;
use std::path::PathBuf;
use std::process::ExitCode;

/// Doubly network-regularized generalized linear models: fitting,
/// prediction, tuning, inference, and simulation experiments.
#[derive(Parser)]
#[command(name = "glmfunk", version, about)]
struct Cli {
    /// Path to the JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicate-parallel commands.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model at fixed hyperparameters.
    Fit,
    /// Predict held-out units from a saved fit via harmonic extension.
    Predict {
        /// Directory written by `fit`.
        #[arg(long)]
        fit_dir: PathBuf,
        /// Test design CSV (unit_id + features, optional offset column).
        #[arg(long)]
        design: PathBuf,
        /// Edge list over training and test units together.
        #[arg(long)]
        full_graph: Option<PathBuf>,
        /// Optional file mapping training unit t (line t) to its node in
        /// the full graph; defaults to the fit's unit ids.
        #[arg(long)]
        train_nodes: Option<PathBuf>,
    },
    /// Select hyperparameters by K-fold cross-validation.
    Cv,
    /// De-biased inference for a saved fit.
    Infer {
        /// Directory written by `fit`.
        #[arg(long)]
        fit_dir: PathBuf,
    },
    /// Generate a simulated dataset.
    Simulate,
    /// Run a replicated method-comparison experiment.
    Experiment,
}

fn require_config(cli: &Cli) -> Result<PathBuf, AppError> {
    cli.config
        .clone()
        .ok_or_else(|| AppError::Config("--config is required for this command".into()))
}

fn run(cli: Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Fit => {
            let mut cfg = RunConfig::load(&require_config(&cli)?)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let out = resolve_out_dir(cli.out_dir.as_deref(), cfg.out_dir.as_ref(), "fit_out");
            cmd_fit(&cfg, &out)
        }
        Command::Predict {
            fit_dir,
            design,
            full_graph,
            train_nodes,
        } => {
            let out = resolve_out_dir(cli.out_dir.as_deref(), None, "predict_out");
            cmd_predict(
                fit_dir,
                design,
                full_graph.as_deref(),
                train_nodes.as_deref(),
                &out,
            )
        }
        Command::Cv => {
            let mut cfg = RunConfig::load(&require_config(&cli)?)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let out = resolve_out_dir(cli.out_dir.as_deref(), cfg.out_dir.as_ref(), "cv_out");
            cmd_cv(&cfg, &out)
        }
        Command::Infer { fit_dir } => {
            let cfg = RunConfig::load(&require_config(&cli)?)?;
            let out = resolve_out_dir(cli.out_dir.as_deref(), cfg.out_dir.as_ref(), "infer_out");
            cmd_infer(&cfg, fit_dir, &out)
        }
        Command::Simulate => {
            let mut cfg = SimCliConfig::load(&require_config(&cli)?)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let out = resolve_out_dir(cli.out_dir.as_deref(), cfg.out_dir.as_ref(), "sim_out");
            cmd_simulate(&cfg, &out)
        }
        Command::Experiment => {
            let cfg = ExperimentConfig::load(&require_config(&cli)?)?;
            let seed = cli.seed.unwrap_or(cfg.sim.seed);
            let out = resolve_out_dir(cli.out_dir.as_deref(), cfg.out_dir.as_ref(), "experiment_out");
            cmd_experiment(&cfg, seed, cli.threads, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("glmfunk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
