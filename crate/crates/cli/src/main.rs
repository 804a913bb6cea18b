mod commands;
mod config;
mod outputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use qnbm_core::model::ModelKind;

/// Interpretable multi-horizon quantile forecasting for day-ahead
/// electricity prices: data synthesis, training, backtesting, evaluation
/// and shape-function extraction from one JSON run config.
#[derive(Parser)]
#[command(name = "qnbm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's model kind (qnbm or qrdnn).
    #[arg(long)]
    model: Option<ModelKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic hourly market CSV with a known-quantile sidecar.
    Synth(CommonArgs),
    /// Train a model (or seeded ensemble) on a windowed dataset.
    Train(CommonArgs),
    /// Run the rolling weekly-recalibration backtest.
    Backtest(CommonArgs),
    /// Score stored forecast CSVs against actuals.
    Evaluate(CommonArgs),
    /// Extract learned shape functions from checkpoints.
    Explain(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Backtest(_) => "backtest",
            Command::Evaluate(_) => "evaluate",
            Command::Explain(_) => "explain",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Synth(a)
            | Command::Train(a)
            | Command::Backtest(a)
            | Command::Evaluate(a)
            | Command::Explain(a) => a,
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, commands::CliError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Some(model) = args.model {
        config.model = Some(model);
    }
    Ok(config)
}

fn run(command: &Command) -> Result<(), commands::CliError> {
    let config = load_config(command.args())?;
    match command {
        Command::Synth(_) => commands::cmd_synth(&config),
        Command::Train(_) => commands::cmd_train(&config),
        Command::Backtest(_) => commands::cmd_backtest(&config),
        Command::Evaluate(_) => commands::cmd_evaluate(&config),
        Command::Explain(_) => commands::cmd_explain(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("qnbm {}: error: {err}", cli.command.name());
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
