//! Constant-Q transform and the chromagram octave fold.
//!
//! The transform is computed directly: each bin correlates the signal with a
//! Hann-windowed complex exponential whose length shrinks as frequency grows,
//! keeping the frequency-to-bandwidth ratio Q constant across bins. This is
//! O(F * T * window) rather than FFT-based, which is fine at the signal
//! lengths this toolkit targets and keeps the per-bin geometry explicit.

use super::{hann, SpecKind, Spectrogram};
use crate::array::Array;
use crate::audio::Signal;
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Geometry of a constant-Q analysis.
#[derive(Debug, Clone, Copy)]
pub struct CqtConfig {
    /// Center frequency of the lowest bin, Hz.
    pub f_min: f64,
    /// Bins per octave (beta in the formulas below).
    pub bins_per_octave: usize,
    /// Octaves analyzed; total bins = `bins_per_octave * n_octaves`.
    pub n_octaves: usize,
    /// Frame advance in samples.
    pub hop: usize,
}

impl CqtConfig {
    pub fn new(f_min: f64, bins_per_octave: usize, n_octaves: usize, hop: usize) -> Result<Self> {
        if !(f_min > 0.0) {
            return Err(Error::arg(format!("f_min = {f_min} must be positive")));
        }
        if bins_per_octave == 0 || n_octaves == 0 {
            return Err(Error::arg("bins_per_octave and n_octaves must be positive"));
        }
        if hop == 0 {
            return Err(Error::arg("hop must be positive"));
        }
        Ok(CqtConfig {
            f_min,
            bins_per_octave,
            n_octaves,
            hop,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.bins_per_octave * self.n_octaves
    }

    /// Quality factor matching the bin spacing: `1 / (2^(1/beta) - 1)`.
    pub fn q(&self) -> f64 {
        1.0 / (2f64.powf(1.0 / self.bins_per_octave as f64) - 1.0)
    }
}

/// Geometric bin centers `f_min * 2^(k / beta)`, spanning `n_octaves`.
pub fn cqt_center_freqs(cfg: &CqtConfig) -> Vec<f64> {
    (0..cfg.n_bins())
        .map(|k| cfg.f_min * 2f64.powf(k as f64 / cfg.bins_per_octave as f64))
        .collect()
}

/// Analysis window length of bin `k`: `ceil(Q * sr / f_k)`, so every bin
/// covers the same number of cycles.
pub fn cqt_window_len(cfg: &CqtConfig, sample_rate: u32, k: usize) -> usize {
    let f_k = cfg.f_min * 2f64.powf(k as f64 / cfg.bins_per_octave as f64);
    (cfg.q() * sample_rate as f64 / f_k).ceil() as usize
}

/// Constant-Q magnitude spectrogram, `(beta * Z, T)`. Row `k` holds the
/// magnitude of the inner product between the signal and a Hann-windowed
/// complex exponential at `f_k`. Shorter high-frequency windows are centered
/// inside the longest one so all rows of a column describe the same instant.
pub fn cqt(s: &Signal, cfg: &CqtConfig) -> Result<Spectrogram> {
    let sr = s.sample_rate();
    let freqs = cqt_center_freqs(cfg);
    let f_max = *freqs.last().unwrap();
    if f_max >= sr as f64 / 2.0 {
        return Err(Error::arg(format!(
            "top bin {f_max:.2} Hz reaches Nyquist ({} Hz); reduce n_octaves or f_min",
            sr / 2
        )));
    }

    let n_bins = cfg.n_bins();
    let longest = cqt_window_len(cfg, sr, 0);
    if s.len() < longest {
        return Err(Error::InputTooShort(format!(
            "lowest bin needs a {longest}-sample window but the signal has {} samples",
            s.len()
        )));
    }
    let frames = (s.len() - longest) / cfg.hop + 1;

    // Precompute windowed kernels; magnitudes make the global phase
    // reference irrelevant.
    let kernels: Vec<Vec<Complex64>> = (0..n_bins)
        .map(|k| {
            let len = cqt_window_len(cfg, sr, k);
            let w = hann(len);
            (0..len)
                .map(|n| {
                    let ang = -2.0 * PI * freqs[k] * n as f64 / sr as f64;
                    Complex64::from_polar(w[n], ang)
                })
                .collect()
        })
        .collect();

    let x = s.samples();
    let mut values = Array::zeros(&[n_bins, frames]);
    for (k, kernel) in kernels.iter().enumerate() {
        let offset = (longest - kernel.len()) / 2;
        for t in 0..frames {
            let start = t * cfg.hop + offset;
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, &c) in kernel.iter().enumerate() {
                acc += x[start + n] * c;
            }
            values.set2(k, t, acc.norm());
        }
    }
    Spectrogram::new(values, freqs, SpecKind::Cqt, sr)
}

/// Folds a constant-Q spectrogram across octaves:
/// `chroma[b, t] = sum_z cqt[b + z * beta, t]`. The row count must be an
/// exact multiple of `bins_per_octave`. Rows keep the base-octave center
/// frequencies as their labels.
pub fn chromagram(cqt_spec: &Spectrogram, bins_per_octave: usize) -> Result<Spectrogram> {
    if cqt_spec.kind() != SpecKind::Cqt {
        return Err(Error::arg(format!(
            "chroma fold expects a constant-Q input, got {}",
            cqt_spec.kind().name()
        )));
    }
    let f_bins = cqt_spec.f_bins();
    if bins_per_octave == 0 || f_bins % bins_per_octave != 0 {
        return Err(Error::arg(format!(
            "{f_bins} rows is not a whole number of {bins_per_octave}-bin octaves"
        )));
    }
    let octaves = f_bins / bins_per_octave;
    let frames = cqt_spec.frames();
    let mut values = Array::zeros(&[bins_per_octave, frames]);
    for b in 0..bins_per_octave {
        for z in 0..octaves {
            for t in 0..frames {
                let v = values.at2(b, t) + cqt_spec.values().at2(b + z * bins_per_octave, t);
                values.set2(b, t, v);
            }
        }
    }
    let freqs = cqt_spec.freqs()[..bins_per_octave].to_vec();
    Spectrogram::new(values, freqs, SpecKind::Chroma, cqt_spec.sample_rate())
}
