//! `droopsec` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use droopsec_core::{
    emit_csv, preset, run, ConfigError, ConsensusError, ControlError, PresetName, RunFailure,
    ScenarioFile, TimeSeriesLog,
};
use log::{error, info, warn};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PLANT: u8 = 3;
const EXIT_CONSENSUS: u8 = 4;

#[derive(Parser)]
#[command(
    name = "droopsec",
    version,
    about = "Islanded microgrid droop + distributed secondary control simulator"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its time series as CSV.
    Run(RunArgs),
    /// Print a built-in scenario as JSON.
    Preset {
        /// case1, case2 or case3.
        name: PresetName,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario: case1, case2 or case3.
    #[arg(long)]
    preset: Option<PresetName>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Override the consensus accuracy target, volts.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Override the consensus round cap per tick.
    #[arg(long)]
    max_rounds: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Run(args) => run_command(args),
        Command::Preset { name, out } => preset_command(name, out.as_deref()),
    }
}

fn preset_command(name: PresetName, out: Option<&Path>) -> ExitCode {
    let text = preset(name).to_json();
    match out {
        None => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Some(path) => match std::fs::write(path, text + "\n") {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                error!("cannot write {}: {e}", path.display());
                ExitCode::from(EXIT_OTHER)
            }
        },
    }
}

fn load_file(args: &RunArgs) -> Result<ScenarioFile, ConfigError> {
    let mut file = match (&args.scenario, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?;
            ScenarioFile::from_json(&text)?
        }
        (None, Some(name)) => preset(name),
        (None, None) => return Err(ConfigError::invalid("scenario", "no scenario given")),
    };
    if let Some(eps) = args.epsilon {
        file.secondary.epsilon_target_v = eps;
    }
    if let Some(rounds) = args.max_rounds {
        file.secondary.max_rounds = rounds;
    }
    Ok(file)
}

fn write_log(log: &TimeSeriesLog, out: &Path) -> bool {
    if log.is_empty() {
        warn!("no ticks completed; {} not written", out.display());
        return true;
    }
    match emit_csv(log, out) {
        Ok(()) => true,
        Err(e) => {
            error!("cannot write {}: {e}", out.display());
            false
        }
    }
}

fn run_command(args: RunArgs) -> ExitCode {
    let scenario = match load_file(&args).and_then(ScenarioFile::validate) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    info!(
        "running {} ({} ticks)",
        scenario.name,
        scenario.tick_count()
    );
    match run(&scenario) {
        Ok(log) => {
            if write_log(&log, &args.out) {
                info!(
                    "wrote {} rows to {}",
                    log.len() * scenario.units(),
                    args.out.display()
                );
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_OTHER)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            write_log(&err.partial, &args.out);
            let code = match err.failure {
                RunFailure::Plant(_) => EXIT_PLANT,
                RunFailure::Control(ControlError::Consensus(ConsensusError::NoTermination {
                    ..
                })) => EXIT_CONSENSUS,
                RunFailure::Control(_) => EXIT_OTHER,
            };
            ExitCode::from(code)
        }
    }
}
