//! `mirforge` command-line front end.
//!
//! Exit codes are a stable contract for scripting: 0 success, 1 verification
//! failure (a gradient check breached its tolerance), 2 training divergence,
//! 3 argument or IO error.

mod extract;
mod gradcheck;
mod train;

use std::fmt;

use clap::{Parser, Subcommand};
use mirforge::Error;

#[derive(Parser)]
#[command(
    name = "mirforge",
    version,
    about = "Audio feature extraction and small-model training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a WAV file and write one time-frequency representation.
    Extract(extract::ExtractArgs),
    /// Compare every layer's and loss's gradients against finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Fit a stock model on a bundled synthetic task.
    Train(train::TrainArgs),
    /// Score a saved parameter file on a bundled task's test split.
    Eval(train::EvalArgs),
}

/// An error tagged with the pipeline stage that raised it, so failures print
/// as `error: resample: ...` and scripts can tell which step to look at.
pub struct StageError {
    stage: &'static str,
    source: Error,
}

impl StageError {
    fn exit_code(&self) -> i32 {
        match self.source {
            Error::Divergence { .. } => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

/// Tags toolkit errors with the stage that produced them.
pub trait InStage<T> {
    fn stage(self, name: &'static str) -> Result<T, StageError>;
}

impl<T> InStage<T> for mirforge::Result<T> {
    fn stage(self, name: &'static str) -> Result<T, StageError> {
        self.map_err(|source| StageError {
            stage: name,
            source,
        })
    }
}

/// `--seed` beats the `MIRFORGE_SEED` environment variable; with neither,
/// the seed is 0.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, StageError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("MIRFORGE_SEED") {
        Ok(text) => text.trim().parse().map_err(|_| StageError {
            stage: "arguments",
            source: Error::Argument(format!(
                "MIRFORGE_SEED = {text:?} is not an unsigned integer"
            )),
        }),
        Err(_) => Ok(0),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version travel clap's error path too; only real
            // usage mistakes get the argument exit code.
            let code = if err.use_stderr() { 3 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let outcome = match cli.command {
        Command::Extract(args) => extract::run(&args),
        Command::Gradcheck(args) => gradcheck::run(&args),
        Command::Train(args) => train::run_train(&args),
        Command::Eval(args) => train::run_eval(&args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
