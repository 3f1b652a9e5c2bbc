//! Time-frequency representations: STFT and its inverse, mel spectrograms,
//! constant-Q transforms, chromagrams, and the pointwise post-processing
//! stages (log compression, standardization).
//!
//! All grids are `(frequency, time)` row-major: row `f` holds one bin's
//! trajectory across frames.

mod cqt;
mod mel;
mod stft;

pub use cqt::{chromagram, cqt, cqt_center_freqs, cqt_window_len, CqtConfig};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, melspectrogram, MelFilterbank};
pub use stft::{istft, magnitude, stft, ComplexSpectrogram};

use crate::array::Array;
use crate::error::{Error, Result};

/// Analysis window applied to every frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Periodic Hann: `0.5 * (1 - cos(2 pi n / N))`.
    Hann,
    /// All ones.
    Rect,
}

impl Window {
    pub(crate) fn samples(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => hann(n),
        }
    }
}

/// Periodic Hann window of length `n`.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// What a [`Spectrogram`]'s values mean. The discriminants double as the
/// on-disk kind codes of the binary container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    StftMag = 0,
    Mel = 1,
    Cqt = 2,
    Chroma = 3,
    /// Log-compressed or otherwise recentered values; the only kind allowed
    /// to hold negative numbers.
    Log = 4,
}

impl SpecKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<SpecKind> {
        Ok(match code {
            0 => SpecKind::StftMag,
            1 => SpecKind::Mel,
            2 => SpecKind::Cqt,
            3 => SpecKind::Chroma,
            4 => SpecKind::Log,
            other => return Err(Error::Format(format!("unknown spectrogram kind {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SpecKind::StftMag => "stft",
            SpecKind::Mel => "mel",
            SpecKind::Cqt => "cqt",
            SpecKind::Chroma => "chroma",
            SpecKind::Log => "log",
        }
    }
}

/// A real-valued `(F, T)` grid with per-row center frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Array,
    freqs: Vec<f64>,
    kind: SpecKind,
    sample_rate: u32,
}

impl Spectrogram {
    /// Validates the grid invariants: rank-2 finite values, one frequency per
    /// row, non-negative values for magnitude kinds, and strictly increasing
    /// frequencies for the frequency-resolved kinds.
    pub fn new(values: Array, freqs: Vec<f64>, kind: SpecKind, sample_rate: u32) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::arg(format!(
                "spectrogram values must be rank 2, got {:?}",
                values.shape()
            )));
        }
        if freqs.len() != values.shape()[0] {
            return Err(Error::arg(format!(
                "{} rows but {} frequencies",
                values.shape()[0],
                freqs.len()
            )));
        }
        if !values.all_finite() {
            return Err(Error::arg("spectrogram contains non-finite values"));
        }
        if kind != SpecKind::Log && values.data().iter().any(|&v| v < 0.0) {
            return Err(Error::arg(format!(
                "negative values in a {} spectrogram",
                kind.name()
            )));
        }
        if matches!(kind, SpecKind::StftMag | SpecKind::Mel | SpecKind::Cqt)
            && freqs.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::arg("frequencies must be strictly increasing"));
        }
        Ok(Spectrogram {
            values,
            freqs,
            kind,
            sample_rate,
        })
    }

    pub fn values(&self) -> &Array {
        &self.values
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn kind(&self) -> SpecKind {
        self.kind
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Frequency rows.
    pub fn f_bins(&self) -> usize {
        self.values.shape()[0]
    }

    /// Time frames.
    pub fn frames(&self) -> usize {
        self.values.shape()[1]
    }

    /// CSV rendering: one row per frequency bin, header row carrying frame
    /// indices.
    pub fn to_csv(&self) -> String {
        let (f_bins, frames) = (self.f_bins(), self.frames());
        let mut out = String::from("bin");
        for t in 0..frames {
            out.push(',');
            out.push_str(&t.to_string());
        }
        out.push('\n');
        for f in 0..f_bins {
            out.push_str(&f.to_string());
            for t in 0..frames {
                out.push(',');
                out.push_str(&format!("{:.6e}", self.values.at2(f, t)));
            }
            out.push('\n');
        }
        out
    }
}

/// Smallest standard deviation standardization will divide by; constant
/// inputs map to zero instead of infinity.
pub const STD_FLOOR: f64 = 1e-8;

/// Natural log with an additive floor: `ln(v + eps)`. The result uses the
/// [`SpecKind::Log`] kind since values may now be negative.
pub fn log_compress(spec: &Spectrogram, eps: f64) -> Result<Spectrogram> {
    if !(eps > 0.0) {
        return Err(Error::arg(format!("log floor eps = {eps} must be positive")));
    }
    if spec.values.data().iter().any(|&v| v < 0.0) {
        return Err(Error::arg("log compression expects non-negative input"));
    }
    Ok(Spectrogram {
        values: spec.values.map(|v| (v + eps).ln()),
        freqs: spec.freqs.clone(),
        kind: SpecKind::Log,
        sample_rate: spec.sample_rate,
    })
}

/// Removes the global mean and scales by the global standard deviation
/// (population variance, floored at [`STD_FLOOR`]). Returns the statistics so
/// the same transform can be replayed on held-out data with
/// [`standardize_with`].
pub fn standardize(spec: &Spectrogram) -> Result<(Spectrogram, f64, f64)> {
    let data = spec.values.data();
    if data.is_empty() {
        return Err(Error::arg("cannot standardize an empty spectrogram"));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(STD_FLOOR);
    Ok((standardize_with(spec, mean, std), mean, std))
}

/// Applies fixed standardization statistics: `(v - mean) / std`.
pub fn standardize_with(spec: &Spectrogram, mean: f64, std: f64) -> Spectrogram {
    Spectrogram {
        values: spec.values.map(|v| (v - mean) / std),
        freqs: spec.freqs.clone(),
        kind: SpecKind::Log,
        sample_rate: spec.sample_rate,
    }
}
