use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use ebv::io::{run_pipeline, Command, IoError, PipelineInputs, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Generate synthetic hives from the configured scenarios.
    Simulate,
    /// Per-day and whole-series parameter fits.
    Fit,
    /// Regime change detection.
    Segment,
    /// Hindcast the final days of each hive.
    Forecast,
    /// Rolling-origin comparison against the baselines.
    Evaluate,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Fit => Command::Fit,
            Cmd::Segment => Command::Segment,
            Cmd::Forecast => Command::Forecast,
            Cmd::Evaluate => Command::Evaluate,
        }
    }
}

/// Hive core temperature modelling from external temperature.
#[derive(Debug, Parser)]
#[command(name = "ebv", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Long-format sensor CSV files.
    #[arg(long = "input", num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only process this hive.
    #[arg(long)]
    hive: Option<String>,
    /// Base seed for `simulate`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_plots: bool,
}

fn run(args: Args) -> Result<(), IoError> {
    let config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let inputs = PipelineInputs {
        inputs: args.inputs,
        out_dir: args.out,
        hive: args.hive,
        seed: args.seed,
        no_plots: args.no_plots,
    };
    let summary = run_pipeline(args.command.into(), &config, &inputs)?;
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    let text = serde_json::to_string_pretty(&summary)?;
    // a closed pipe (e.g. `| head`) is not a failure of the run
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(IoError::File {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
