//! Iterative radix-2 FFT over `Complex64`, plus real-input helpers.
//!
//! Frame sizes in this toolkit are always powers of two, so plain
//! Cooley-Tukey is enough. Twiddles are computed from the angle at every
//! butterfly instead of by repeated multiplication; that keeps the rounding
//! error near machine epsilon, which the round-trip tolerances rely on.

use num_complex::Complex64;
use std::f64::consts::PI;

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// In-place FFT (or inverse FFT when `inverse`). `buf.len()` must be a power
/// of two. The inverse is unnormalized; callers divide by `n`.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(is_power_of_two(n));
    if n <= 1 {
        return;
    }

    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// One-sided spectrum of a real frame: bins `0..=n/2` of the DFT.
pub fn rfft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    debug_assert!(is_power_of_two(n));
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf, false);
    buf.truncate(n / 2 + 1);
    buf
}

/// Inverse of [`rfft`]: rebuilds the two-sided spectrum by conjugate
/// symmetry and returns the length-`n` real frame.
pub fn irfft(half: &[Complex64], n: usize) -> Vec<f64> {
    debug_assert!(is_power_of_two(n));
    debug_assert_eq!(half.len(), n / 2 + 1);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..half.len()].copy_from_slice(half);
    for k in half.len()..n {
        buf[k] = half[n - k].conj();
    }
    fft_in_place(&mut buf, true);
    buf.into_iter().map(|c| c.re / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(n^2) reference transform.
    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, &v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (k * i) as f64 / n as f64;
                    acc += v * Complex64::from_polar(1.0, ang);
                }
                acc
            })
            .collect()
    }

    fn lcg_signal(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for &n in &[2usize, 8, 64, 256] {
            let x: Vec<Complex64> = lcg_signal(n, 7)
                .into_iter()
                .zip(lcg_signal(n, 13))
                .map(|(re, im)| Complex64::new(re, im))
                .collect();
            let mut got = x.clone();
            fft_in_place(&mut got, false);
            let want = naive_dft(&x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).norm() < 1e-9 * n as f64, "n={n}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn rfft_irfft_round_trip() {
        let x = lcg_signal(512, 42);
        let spec = rfft(&x);
        assert_eq!(spec.len(), 257);
        let back = irfft(&spec, 512);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_input_concentrates_in_bin_zero() {
        let spec = rfft(&[1.0; 8]);
        assert!((spec[0].norm() - 8.0).abs() < 1e-12);
        for bin in &spec[1..] {
            assert!(bin.norm() < 1e-12);
        }
    }
}
