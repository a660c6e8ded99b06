use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod audio;
mod eval;
mod manifest;
mod settings;
mod separate;
mod sweep;
mod synth;

/// Multichannel source separation with local Gaussian models.
#[derive(Debug, Parser)]
#[command(name = "onsep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Separate a WAV mixture into one WAV per source.
    Separate(separate::SeparateArgs),
    /// Score estimated source images against references.
    Eval(eval::EvalArgs),
    /// Run separation and evaluation over a grid of online settings.
    Sweep(sweep::SweepArgs),
    /// Generate a synthetic corpus with known source images.
    Synth(synth::SynthArgs),
}

/// Flags overriding values of the JSON configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON separation config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `offline` or `online`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Online block length in frames.
    #[arg(long)]
    pub block: Option<usize>,
    /// Offline iterations, or iterations per block online.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Error that should end the process with the usage exit status.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<onsep::Error>() {
            if matches!(e, onsep::Error::InvalidConfig(_) | onsep::Error::Dictionary(_)) {
                return 2;
            }
        }
        if let Some(hound::Error::IoError(_)) = cause.downcast_ref::<hound::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Separate(args) => separate::run(&args),
        Command::Eval(args) => eval::run(&args),
        Command::Sweep(args) => sweep::run(&args),
        Command::Synth(args) => synth::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
