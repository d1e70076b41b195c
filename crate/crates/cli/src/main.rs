//! `dsacd`: train, evaluate and plot diffusion soft actor-critic runs.

mod config;
mod eval;
mod plot;
mod svg;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dsacd_core::Error as CoreError;

#[derive(Debug, Parser)]
#[command(name = "dsacd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from a TOML config. Writes config.toml (all defaults filled
    /// in), metrics.jsonl and checkpoints into the output directory.
    Train(TrainArgs),
    /// Roll out a checkpointed policy and report returns, optionally with
    /// the value-estimation bias.
    Eval(EvalArgs),
    /// Render SVG figures from metrics or a checkpoint.
    Plot(PlotArgs),
}

#[derive(Debug, clap::Args)]
struct OutputArgs {
    /// Output directory. Without it, the config's `out_dir` (default
    /// `runs/<env>`) is placed under the output root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output root for relative output directories.
    #[arg(long = "out-root", env = config::OUT_ENV, hide_env_values = true)]
    out_root: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dotted key override such as `trainer.batch_size=64`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Sets `trainer.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Sets `iterations`.
    #[arg(long)]
    iterations: Option<u64>,
    /// Resume from this checkpoint instead of a fresh initialisation.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Leave wall-clock times out of the metrics so reruns are byte-identical.
    #[arg(long)]
    deterministic: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evaluate on the environment of this config instead of the one stored
    /// in the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides applied to `--config`.
    #[arg(long = "override", value_name = "KEY=VALUE", requires = "config")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Turn off the per-step noise of the policy's denoising chain.
    #[arg(long)]
    deterministic: bool,
    /// Also compare value estimates with discounted sampled returns.
    #[arg(long)]
    bias: bool,
    /// Where to write eval.json; printed to stdout either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PlotKind {
    /// Training curves from a metrics file.
    Curves,
    /// Sampled returns from the value network against rollout returns.
    ReturnHist,
    /// Sampled actions at the initial state with mixture components.
    ActionModes,
    /// Point-mass rollouts coloured by the goal they reach.
    Trajectories,
}

#[derive(Debug, clap::Args)]
struct PlotArgs {
    #[arg(long, value_enum)]
    kind: PlotKind,
    /// Run directory holding metrics.jsonl and checkpoint.ckpt.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Metrics file (curves).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Checkpoint (return_hist, action_modes, trajectories).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of rollouts or samples.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the SVG; defaults to the run directory or `.`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Plot(a) => plot::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            let non_finite = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<CoreError>(),
                    Some(CoreError::NonFinite { .. })
                )
            });
            ExitCode::from(if non_finite { 3 } else { 1 })
        }
    }
}
