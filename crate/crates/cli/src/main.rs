mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AnalyzeArgs, BaselineArgs, BerArgs, SyncArgs, TrainArgs};

#[derive(Parser, Debug)]
#[command(name = "mlss", version, about = "Featureless spread-spectrum simulator")]
struct Cli {
    /// TOML file with one table per subcommand; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the CRC, FEC and model-file conventions and exit.
    #[arg(long)]
    describe: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a spreading network and write the model and a JSON log.
    Train(TrainArgs),
    /// Monte-Carlo BER sweep of a model or baseline.
    Ber(BerArgs),
    /// Featurelessness battery on a model, a chip dump or a PN stream.
    Analyze(AnalyzeArgs),
    /// Acquisition and false-sync experiment.
    Sync(SyncArgs),
    /// DSSS-PN sweep against the closed-form BPSK curve.
    Baseline(BaselineArgs),
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Diverged(String),
    Check(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Diverged(_) => 3,
            Failure::Check(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Diverged(m) | Failure::Check(m) | Failure::Other(m) => m,
        }
    }
}

impl From<mlss::Error> for Failure {
    fn from(e: mlss::Error) -> Self {
        use mlss::Error as E;
        match e {
            E::TrainingDiverged(_) => Failure::Diverged(e.to_string()),
            E::Config(_)
            | E::InvalidArch(_)
            | E::InvalidLfsr(_)
            | E::InvalidTaps { .. }
            | E::DimensionMismatch { .. }
            | E::PayloadTooLarge { .. }
            | E::SpanTooShort(_)
            | E::BadMagic
            | E::VersionMismatch { .. } => Failure::Config(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mlss: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.describe {
        print!("{}", commands::describe());
        return Ok(());
    }
    let file = config::load_file(cli.config.as_deref())?;
    match cli.command {
        Some(Command::Train(a)) => commands::train(a, file.as_ref()),
        Some(Command::Ber(a)) => commands::ber(a, file.as_ref()),
        Some(Command::Analyze(a)) => commands::analyze(a, file.as_ref()),
        Some(Command::Sync(a)) => commands::sync(a, file.as_ref()),
        Some(Command::Baseline(a)) => commands::baseline(a, file.as_ref()),
        None => Err(Failure::Config("no subcommand given (see --help)".into())),
    }
}
