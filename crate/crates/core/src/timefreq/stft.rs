//! Short-time Fourier transform and its least-squares inverse.

use super::{SpecKind, Spectrogram, Window};
use crate::array::Array;
use crate::audio::Signal;
use crate::error::{Error, Result};
use crate::fft;
use num_complex::Complex64;

/// One-sided complex STFT grid, `(n_fft/2 + 1, T)`.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    bins: Vec<Complex64>, // row-major (F, T)
    f_bins: usize,
    frames: usize,
    sample_rate: u32,
    n_fft: usize,
    hop: usize,
    window: Window,
}

impl ComplexSpectrogram {
    pub fn f_bins(&self) -> usize {
        self.f_bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn bin(&self, f: usize, t: usize) -> Complex64 {
        self.bins[f * self.frames + t]
    }

    /// Pointwise scaling — handy for testing linearity of the transform pair.
    pub fn scaled(&self, c: f64) -> ComplexSpectrogram {
        let mut out = self.clone();
        for v in &mut out.bins {
            *v *= c;
        }
        out
    }

    /// Pointwise sum of two grids with identical geometry.
    pub fn add(&self, other: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
        if self.f_bins != other.f_bins
            || self.frames != other.frames
            || self.n_fft != other.n_fft
            || self.hop != other.hop
        {
            return Err(Error::arg("mismatched spectrogram geometry"));
        }
        let mut out = self.clone();
        for (v, o) in out.bins.iter_mut().zip(&other.bins) {
            *v += o;
        }
        Ok(out)
    }
}

/// Windowed one-sided DFT of every length-`n_fft` frame, frames starting at
/// multiples of `hop` with no padding: `T = (len - n_fft) / hop + 1`.
pub fn stft(s: &Signal, n_fft: usize, hop: usize, window: Window) -> Result<ComplexSpectrogram> {
    if !fft::is_power_of_two(n_fft) {
        return Err(Error::arg(format!("n_fft = {n_fft} must be a power of two")));
    }
    if hop == 0 || hop > n_fft {
        return Err(Error::arg(format!(
            "hop = {hop} must satisfy 0 < hop <= n_fft = {n_fft}"
        )));
    }
    if s.len() < n_fft {
        return Err(Error::InputTooShort(format!(
            "signal has {} samples, need at least n_fft = {n_fft}",
            s.len()
        )));
    }
    let frames = (s.len() - n_fft) / hop + 1;
    let f_bins = n_fft / 2 + 1;
    let w = window.samples(n_fft);
    let x = s.samples();

    let mut bins = vec![Complex64::new(0.0, 0.0); f_bins * frames];
    let mut frame = vec![0.0; n_fft];
    for t in 0..frames {
        let start = t * hop;
        for (i, f) in frame.iter_mut().enumerate() {
            *f = x[start + i] * w[i];
        }
        let spec = fft::rfft(&frame);
        for (f, &v) in spec.iter().enumerate() {
            bins[f * frames + t] = v;
        }
    }
    Ok(ComplexSpectrogram {
        bins,
        f_bins,
        frames,
        sample_rate: s.sample_rate(),
        n_fft,
        hop,
        window,
    })
}

/// Magnitude grid of a complex STFT, with bin center frequencies
/// `k * sr / n_fft`.
pub fn magnitude(c: &ComplexSpectrogram) -> Spectrogram {
    let mut values = Array::zeros(&[c.f_bins, c.frames]);
    for f in 0..c.f_bins {
        for t in 0..c.frames {
            values.set2(f, t, c.bin(f, t).norm());
        }
    }
    let freqs = (0..c.f_bins)
        .map(|k| k as f64 * c.sample_rate as f64 / c.n_fft as f64)
        .collect();
    Spectrogram::new(values, freqs, SpecKind::StftMag, c.sample_rate)
        .expect("magnitude grid is valid by construction")
}

/// Inverse STFT by overlap-add with least-squares window normalization:
/// each inverted frame is re-windowed, frames are summed, and every sample is
/// divided by the accumulated squared window. Fails when that denominator
/// vanishes somewhere in the fully-overlapped interior (e.g. a Hann window
/// with `hop = n_fft`); the edge taper region is instead zero-filled where
/// uncovered.
pub fn istft(c: &ComplexSpectrogram, window: Window) -> Result<Signal> {
    let n_fft = c.n_fft;
    let hop = c.hop;
    let frames = c.frames;
    let w = window.samples(n_fft);
    let out_len = (frames - 1) * hop + n_fft;

    let mut num = vec![0.0; out_len];
    let mut den = vec![0.0; out_len];
    let mut half = vec![Complex64::new(0.0, 0.0); c.f_bins];
    for t in 0..frames {
        for f in 0..c.f_bins {
            half[f] = c.bin(f, t);
        }
        let frame = fft::irfft(&half, n_fft);
        let start = t * hop;
        for i in 0..n_fft {
            num[start + i] += frame[i] * w[i];
            den[start + i] += w[i] * w[i];
        }
    }

    // Interior = the span where every window position contributes in full;
    // the first and last (n_fft - hop) samples only see partial overlap.
    let interior_lo = n_fft - hop;
    let interior_hi = frames * hop;
    const TINY: f64 = 1e-12;
    if interior_lo < interior_hi {
        for i in interior_lo..interior_hi {
            if den[i] <= TINY {
                return Err(Error::Reconstruction(format!(
                    "window overlap sum vanishes at sample {i}; \
                     this window/hop pair cannot be inverted"
                )));
            }
        }
    }

    let samples = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| if d > TINY { n / d } else { 0.0 })
        .collect();
    Signal::new(samples, c.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::synth_sine;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, sr: u32, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), sr).unwrap()
    }

    #[test]
    fn frame_count_and_shape() {
        let s = noise(2000, 8000, 1);
        let c = stft(&s, 256, 128, Window::Hann).unwrap();
        assert_eq!(c.f_bins(), 129);
        assert_eq!(c.frames(), (2000 - 256) / 128 + 1);
    }

    #[test]
    fn input_shorter_than_frame_is_rejected() {
        let s = noise(100, 8000, 1);
        match stft(&s, 256, 128, Window::Hann) {
            Err(Error::InputTooShort(_)) => {}
            other => panic!("want input-too-short, got {other:?}"),
        }
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let s = noise(1000, 8000, 1);
        assert!(stft(&s, 300, 128, Window::Hann).is_err()); // not a power of two
        assert!(stft(&s, 256, 0, Window::Hann).is_err());
        assert!(stft(&s, 256, 512, Window::Hann).is_err()); // hop > n_fft
    }

    #[test]
    fn constant_signal_rect_window_concentrates_at_dc() {
        let s = Signal::new(vec![1.0; 64], 8000).unwrap();
        let c = stft(&s, 8, 8, Window::Rect).unwrap();
        for t in 0..c.frames() {
            assert!((c.bin(0, t).norm() - 8.0).abs() < 1e-9);
            for f in 1..c.f_bins() {
                assert!(c.bin(f, t).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn bin_aligned_sinusoid_peaks_at_half_n() {
        // freq = k * sr / n_fft lands exactly on bin k with |X[k]| = amp * N/2.
        let n_fft = 64;
        let sr = 8000;
        let k = 5;
        let freq = k as f64 * sr as f64 / n_fft as f64;
        let s = synth_sine(freq, 0.5, sr, 1.0).unwrap();
        let c = stft(&s, n_fft, n_fft, Window::Rect).unwrap();
        for t in 0..c.frames() {
            assert!((c.bin(k, t).norm() - n_fft as f64 / 2.0).abs() < 1e-6);
            for f in 0..c.f_bins() {
                if f != k {
                    assert!(c.bin(f, t).norm() < 1e-6, "leakage at bin {f}");
                }
            }
        }
    }

    #[test]
    fn stft_is_linear() {
        let x = noise(1500, 8000, 2);
        let y = noise(1500, 8000, 3);
        let (a, b) = (0.7, -1.3);
        let combined = Signal::new(
            x.samples()
                .iter()
                .zip(y.samples())
                .map(|(&xv, &yv)| a * xv + b * yv)
                .collect(),
            8000,
        )
        .unwrap();
        let cx = stft(&x, 256, 64, Window::Hann).unwrap();
        let cy = stft(&y, 256, 64, Window::Hann).unwrap();
        let cc = stft(&combined, 256, 64, Window::Hann).unwrap();
        let want = cx.scaled(a).add(&cy.scaled(b)).unwrap();
        for f in 0..cc.f_bins() {
            for t in 0..cc.frames() {
                let diff = (cc.bin(f, t) - want.bin(f, t)).norm();
                let mag = cc.bin(f, t).norm().max(1.0);
                assert!(diff / mag < 1e-9, "nonlinear at ({f},{t})");
            }
        }
    }

    #[test]
    fn parseval_per_frame_with_rect_tiling() {
        // Rect window, hop = n_fft: frame energy equals (1/N) * two-sided
        // spectral energy. One-sided bins 1..N/2 count twice.
        let s = noise(1024, 8000, 4);
        let n = 128;
        let c = stft(&s, n, n, Window::Rect).unwrap();
        for t in 0..c.frames() {
            let time_energy: f64 = s.samples()[t * n..(t + 1) * n].iter().map(|v| v * v).sum();
            let mut spec_energy = c.bin(0, t).norm_sqr() + c.bin(n / 2, t).norm_sqr();
            for f in 1..n / 2 {
                spec_energy += 2.0 * c.bin(f, t).norm_sqr();
            }
            spec_energy /= n as f64;
            assert!(
                (time_energy - spec_energy).abs() / time_energy.max(1e-12) < 1e-6,
                "frame {t}: {time_energy} vs {spec_energy}"
            );
        }
    }

    #[test]
    fn round_trip_reconstructs_interior() {
        for seed in 0..3 {
            let s = noise(8000, 8000, 100 + seed);
            let c = stft(&s, 512, 128, Window::Hann).unwrap();
            let back = istft(&c, Window::Hann).unwrap();
            let lo = 512;
            let hi = back.len() - 512;
            let max_err = s.samples()[lo..hi]
                .iter()
                .zip(&back.samples()[lo..hi])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_err <= 1e-6, "seed {seed}: interior error {max_err}");
        }
    }

    #[test]
    fn round_trip_rect_full_hop_is_exact_everywhere() {
        let s = noise(1024, 8000, 7);
        let c = stft(&s, 128, 128, Window::Rect).unwrap();
        let back = istft(&c, Window::Rect).unwrap();
        assert_eq!(back.len(), 1024);
        for (a, b) in s.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_overlap_is_a_reconstruction_error() {
        // Hann with hop = n_fft: the window is zero at frame starts and no
        // neighbor covers them.
        let s = noise(1024, 8000, 8);
        let c = stft(&s, 128, 128, Window::Hann).unwrap();
        match istft(&c, Window::Hann) {
            Err(Error::Reconstruction(_)) => {}
            other => panic!("want reconstruction error, got {other:?}"),
        }
    }

    #[test]
    fn magnitude_grid_has_bin_frequencies() {
        let s = noise(1024, 8000, 9);
        let c = stft(&s, 256, 128, Window::Hann).unwrap();
        let m = magnitude(&c);
        assert_eq!(m.kind(), SpecKind::StftMag);
        assert_eq!(m.freqs().len(), 129);
        assert_eq!(m.freqs()[0], 0.0);
        assert!((m.freqs()[128] - 4000.0).abs() < 1e-9);
        assert!((m.freqs()[1] - 8000.0 / 256.0).abs() < 1e-9);
    }
}
