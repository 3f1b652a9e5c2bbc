use std::io;
use thiserror::Error;

/// Toolkit-wide error type.
///
/// The CLI maps these onto process exit codes, so the variants are grouped by
/// what the caller can do about them rather than by module: bad bytes
/// (`Parse`), unsupported-but-valid bytes (`Format`), caller mistakes
/// (`Argument`, `InputTooShort`), and runtime failures (`Reconstruction`,
/// `MissingGrad`, `Divergence`, `Build`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    /// Input bytes could not be decoded at all (truncated file, bad magic).
    #[error("parse error: {0}")]
    Parse(String),

    /// Input decoded cleanly but uses an encoding this toolkit does not
    /// support (e.g. 24-bit PCM, unknown container kind).
    #[error("unsupported format: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("input too short: {0}")]
    InputTooShort(String),

    /// Inverse transform could not reproduce a signal (degenerate window
    /// overlap).
    #[error("reconstruction failed: {0}")]
    Reconstruction(String),

    /// An optimizer step was requested for a parameter with no accumulated
    /// gradient (backward was never run, or the gradient was already
    /// consumed).
    #[error("missing gradient for parameter {0}")]
    MissingGrad(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    /// Model construction failed while walking the layer chain.
    #[error("model build failed at layer {layer}: {reason}")]
    Build { layer: String, reason: String },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
