//! Mel scale, triangular mel filterbanks, and mel spectrograms.

use super::{SpecKind, Spectrogram};
use crate::array::Array;
use crate::error::{Error, Result};

/// Mel value of a frequency in Hz: `2595 * log10(1 + f / 700)`.
pub fn hz_to_mel(f: f64) -> Result<f64> {
    if f < 0.0 {
        return Err(Error::arg(format!("negative frequency {f} has no mel value")));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

/// Inverse of [`hz_to_mel`].
pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// A bank of triangular filters over one-sided FFT bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `(n_mels, n_fft/2 + 1)` non-negative weights; every row with support
    /// is peak-normalized to max 1.
    pub weights: Array,
    /// Filter center frequencies in Hz, equally spaced on the mel scale.
    pub peak_freqs: Vec<f64>,
}

/// Builds `n_mels` triangles with peaks equally spaced in mel between
/// `hz_to_mel(f_lo)` and `hz_to_mel(f_hi)` (endpoints included). Each
/// triangle is linear in mel and spans one peak spacing to either side.
/// Rows whose support falls between FFT bins come out empty; that is allowed
/// (the bank is degenerate but usable) so resolution problems surface as
/// zeros rather than panics.
pub fn mel_filterbank(
    n_fft: usize,
    sample_rate: u32,
    n_mels: usize,
    f_lo: f64,
    f_hi: f64,
) -> Result<MelFilterbank> {
    if n_mels < 2 {
        return Err(Error::arg(format!("n_mels = {n_mels} must be at least 2")));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= nyquist) {
        return Err(Error::arg(format!(
            "mel band [{f_lo}, {f_hi}] must satisfy 0 <= f_lo < f_hi <= {nyquist}"
        )));
    }
    let m_lo = hz_to_mel(f_lo)?;
    let m_hi = hz_to_mel(f_hi)?;
    let spacing = (m_hi - m_lo) / (n_mels - 1) as f64;
    let peaks_mel: Vec<f64> = (0..n_mels).map(|i| m_lo + i as f64 * spacing).collect();
    let peak_freqs: Vec<f64> = peaks_mel.iter().map(|&m| mel_to_hz(m)).collect();

    let f_bins = n_fft / 2 + 1;
    let bin_mels: Vec<f64> = (0..f_bins)
        .map(|k| hz_to_mel(k as f64 * sample_rate as f64 / n_fft as f64))
        .collect::<Result<_>>()?;

    let mut weights = Array::zeros(&[n_mels, f_bins]);
    for (i, &peak) in peaks_mel.iter().enumerate() {
        let mut row_max = 0.0f64;
        for (k, &m) in bin_mels.iter().enumerate() {
            let w = (1.0 - (m - peak).abs() / spacing).max(0.0);
            weights.set2(i, k, w);
            row_max = row_max.max(w);
        }
        if row_max > 0.0 {
            for k in 0..f_bins {
                let w = weights.at2(i, k) / row_max;
                weights.set2(i, k, w);
            }
        }
    }
    Ok(MelFilterbank {
        weights,
        peak_freqs,
    })
}

/// Applies a filterbank to a magnitude STFT: `out = weights * mag`.
pub fn melspectrogram(mag: &Spectrogram, fb: &MelFilterbank) -> Result<Spectrogram> {
    if mag.kind() != SpecKind::StftMag {
        return Err(Error::arg(format!(
            "mel projection expects a magnitude STFT, got {}",
            mag.kind().name()
        )));
    }
    let f_bins = mag.f_bins();
    let n_mels = fb.weights.shape()[0];
    if fb.weights.shape()[1] != f_bins {
        return Err(Error::arg(format!(
            "filterbank covers {} bins but spectrogram has {}",
            fb.weights.shape()[1],
            f_bins
        )));
    }
    let frames = mag.frames();
    let mut values = Array::zeros(&[n_mels, frames]);
    for i in 0..n_mels {
        for k in 0..f_bins {
            let w = fb.weights.at2(i, k);
            if w == 0.0 {
                continue;
            }
            for t in 0..frames {
                let v = values.at2(i, t) + w * mag.values().at2(k, t);
                values.set2(i, t, v);
            }
        }
    }
    Spectrogram::new(values, fb.peak_freqs.clone(), SpecKind::Mel, mag.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Signal;
    use crate::timefreq::{magnitude, stft, Window};

    #[test]
    fn mel_scale_fixed_points() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
        // 1 + 6300/700 = 10, so the mel value is exactly 2595.
        assert_eq!(hz_to_mel(6300.0).unwrap(), 2595.0);
        // 2595 * log10(2)
        assert!((hz_to_mel(700.0).unwrap() - 781.17).abs() < 5e-3);
        assert!(hz_to_mel(-1.0).is_err());
    }

    #[test]
    fn mel_inverse_round_trips() {
        for f in [0.0, 55.0, 440.0, 4390.0, 7999.0] {
            let back = mel_to_hz(hz_to_mel(f).unwrap());
            assert!((back - f).abs() < 1e-9 * f.max(1.0));
        }
    }

    #[test]
    fn filterbank_shape_and_normalization() {
        let fb = mel_filterbank(2048, 16000, 40, 0.0, 8000.0).unwrap();
        assert_eq!(fb.weights.shape(), &[40, 1025]);
        for i in 0..40 {
            let mut row_max = 0.0f64;
            for k in 0..1025 {
                let w = fb.weights.at2(i, k);
                assert!(w >= 0.0);
                row_max = row_max.max(w);
            }
            assert!((row_max - 1.0).abs() < 1e-12, "row {i} max {row_max}");
        }
    }

    #[test]
    fn filterbank_peaks_equally_spaced_in_mel() {
        let fb = mel_filterbank(1024, 16000, 24, 50.0, 7000.0).unwrap();
        let mels: Vec<f64> = fb
            .peak_freqs
            .iter()
            .map(|&f| hz_to_mel(f).unwrap())
            .collect();
        let d = mels[1] - mels[0];
        for w in mels.windows(2) {
            assert!((w[1] - w[0] - d).abs() < 1e-9);
        }
        assert!((mels[0] - hz_to_mel(50.0).unwrap()).abs() < 1e-9);
        assert!((mels[23] - hz_to_mel(7000.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn oversized_bank_keeps_empty_rows() {
        // 600 mel filters over 65 bins: most triangles fall between bins.
        let fb = mel_filterbank(128, 8000, 600, 0.0, 4000.0).unwrap();
        let empty = (0..600)
            .filter(|&i| (0..65).all(|k| fb.weights.at2(i, k) == 0.0))
            .count();
        assert!(empty > 0, "expected some empty rows");
    }

    #[test]
    fn filterbank_rejects_bad_bands() {
        assert!(mel_filterbank(512, 16000, 1, 0.0, 8000.0).is_err());
        assert!(mel_filterbank(512, 16000, 40, 100.0, 100.0).is_err());
        assert!(mel_filterbank(512, 16000, 40, 0.0, 9000.0).is_err()); // above Nyquist
        assert!(mel_filterbank(512, 16000, 40, -5.0, 4000.0).is_err());
    }

    #[test]
    fn melspectrogram_projects_and_checks_shapes() {
        let s = Signal::new(vec![0.3; 4000], 16000).unwrap();
        let mag = magnitude(&stft(&s, 512, 256, Window::Hann).unwrap());
        let fb = mel_filterbank(512, 16000, 40, 0.0, 8000.0).unwrap();
        let mel = melspectrogram(&mag, &fb).unwrap();
        assert_eq!(mel.kind(), SpecKind::Mel);
        assert_eq!(mel.f_bins(), 40);
        assert_eq!(mel.frames(), mag.frames());
        assert_eq!(mel.freqs(), fb.peak_freqs.as_slice());

        let wrong = mel_filterbank(256, 16000, 40, 0.0, 8000.0).unwrap();
        assert!(melspectrogram(&mag, &wrong).is_err());
    }

    #[test]
    fn melspectrogram_of_single_bin_reads_filter_column() {
        // magnitude grid with one hot bin; projection must reproduce the
        // filter weights at that bin.
        let fb = mel_filterbank(64, 8000, 8, 0.0, 4000.0).unwrap();
        let mut values = Array::zeros(&[33, 1]);
        values.set2(10, 0, 1.0);
        let freqs: Vec<f64> = (0..33).map(|k| k as f64 * 8000.0 / 64.0).collect();
        let mag = Spectrogram::new(values, freqs, SpecKind::StftMag, 8000).unwrap();
        let mel = melspectrogram(&mag, &fb).unwrap();
        for i in 0..8 {
            assert!((mel.values().at2(i, 0) - fb.weights.at2(i, 10)).abs() < 1e-12);
        }
    }
}
