//! `qrhawkes`: simulate order books, estimate book-state generators from
//! event data, and report stationary volatility and market-maker rankings.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;
use crate::manifest::Recorder;

#[derive(Parser, Debug)]
#[command(name = "qrhawkes", version, about = "Order book simulation, generator estimation and stability ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving every output and the run manifest.
    #[arg(long, default_value = "qrhawkes-out")]
    pub output_dir: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Simulation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest queue kept in the state space, in AES.
    #[arg(long)]
    pub qmax: Option<u32>,
    /// Largest spread kept in the state space, in ticks.
    #[arg(long)]
    pub smax: Option<u32>,
    /// Lag of the corrected volatility.
    #[arg(long)]
    pub k: Option<usize>,
    /// Drop periods with a wider spread, in ticks; 0 disables the filter.
    #[arg(long)]
    pub spread_filter: Option<u32>,
}

#[derive(Args, Debug, Clone)]
pub struct Inputs {
    /// Event logs, generator files or raw order book CSV.
    #[arg(long, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct OptionalInputs {
    /// Event logs, generator files or raw order book CSV; the configured
    /// model is used when absent.
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the configured model and write an event log.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Check the stability conditions of the configured model.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the book-state generator from event data.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Stationary law, expected spread, volatility and imbalance variance.
    Stationary {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: OptionalInputs,
    },
    /// First-order and lag-corrected volatility for every lag up to k.
    Volatility {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: OptionalInputs,
    },
    /// Rank market makers by the volatility of the market without them; one
    /// asset per input.
    Rank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Ingest, estimate, solve and rank in one run.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Stop after the stationary report.
        #[arg(long)]
        no_rank: bool,
        /// Asset name in the ranking; defaults to the first input's file stem.
        #[arg(long)]
        asset: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Validate { .. } => "validate",
            Command::Estimate { .. } => "estimate",
            Command::Stationary { .. } => "stationary",
            Command::Volatility { .. } => "volatility",
            Command::Rank { .. } => "rank",
            Command::Pipeline { .. } => "pipeline",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common }
            | Command::Validate { common }
            | Command::Estimate { common, .. }
            | Command::Stationary { common, .. }
            | Command::Volatility { common, .. }
            | Command::Rank { common, .. }
            | Command::Pipeline { common, .. } => common,
        }
    }
}

fn run(cmd: &Command, rec: &mut Recorder) -> Result<(), CliError> {
    match cmd {
        Command::Simulate { common } => commands::simulate(common, rec),
        Command::Validate { common } => commands::validate(common, rec),
        Command::Estimate { common, inputs } => commands::estimate(common, &inputs.input, rec),
        Command::Stationary { common, inputs } => commands::stationary(common, &inputs.input, rec),
        Command::Volatility { common, inputs } => commands::volatility(common, &inputs.input, rec),
        Command::Rank { common, inputs } => commands::rank(common, &inputs.input, rec),
        Command::Pipeline {
            common,
            inputs,
            no_rank,
            asset,
        } => commands::pipeline(common, &inputs.input, *no_rank, asset.as_deref(), rec),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let common = cli.command.common();
    let mut rec = Recorder::new(cli.command.name(), common.config.as_deref());
    let result = run(&cli.command, &mut rec);
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error: {e}"),
    };
    if let Err(e) = rec.finish(&common.output_dir, &status) {
        eprintln!("error: cannot write manifest: {e}");
        if result.is_ok() {
            return ExitCode::from(2);
        }
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
