//! mirforge: an audio time-frequency front-end plus a small reverse-mode
//! differentiable neural-network engine, sized for desk-scale music
//! information retrieval experiments.
//!
//! The crate is organized as a pipeline:
//!
//! - [`audio`] — WAV decoding, resampling, test-signal synthesis
//! - [`timefreq`] — STFT/iSTFT, mel spectrograms, constant-Q, chroma
//! - [`tensor`] — dynamic-tape reverse-mode automatic differentiation
//! - [`nn`] — dense / convolutional / recurrent layers and pooling
//! - [`optim`] — losses, SGD and Adam, the training loop
//! - [`zoo`] — declarative model specs, reference architectures, synthetic
//!   benchmark tasks
//! - [`mirf`] — the little-endian binary container for feature grids and
//!   model parameters

pub mod array;
pub mod audio;
pub mod check;
pub mod error;
mod fft;
pub mod mirf;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod timefreq;
pub mod zoo;

pub use error::{Error, Result};
