//! Audio input: WAV decoding, resampling, and test-signal synthesis.
//!
//! The WAV reader accepts the two encodings this toolkit cares about —
//! 16-bit PCM (format code 1) and 32-bit IEEE float (format code 3), mono or
//! stereo — and rejects everything else with a format error. Stereo is
//! downmixed by averaging channels. Everything is little-endian.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

/// A mono audio buffer with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Signal> {
        if sample_rate == 0 {
            return Err(Error::arg("sample rate must be positive"));
        }
        if !samples.iter().all(|v| v.is_finite()) {
            return Err(Error::arg("signal contains non-finite samples"));
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

// --- WAV ---

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse(format!(
                "truncated file: wanted {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decodes a RIFF/WAVE byte buffer. See [`load_wav`] for the accepted
/// encodings.
pub fn parse_wav(bytes: &[u8]) -> Result<Signal> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"RIFF" {
        return Err(Error::Parse("missing RIFF magic".into()));
    }
    let _riff_size = r.u32()?;
    if r.take(4)? != b"WAVE" {
        return Err(Error::Parse("missing WAVE tag".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (code, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while r.pos < bytes.len() {
        let id: [u8; 4] = r.take(4)?.try_into().unwrap();
        let size = r.u32()? as usize;
        let chunk = r.take(size)?;
        // Chunks are word-aligned; odd sizes carry a pad byte.
        if size % 2 == 1 && r.pos < bytes.len() {
            r.pos += 1;
        }
        match &id {
            b"fmt " => {
                if chunk.len() < 16 {
                    return Err(Error::Parse("fmt chunk shorter than 16 bytes".into()));
                }
                let code = u16::from_le_bytes([chunk[0], chunk[1]]);
                let channels = u16::from_le_bytes([chunk[2], chunk[3]]);
                let rate = u32::from_le_bytes([chunk[4], chunk[5], chunk[6], chunk[7]]);
                let bits = u16::from_le_bytes([chunk[14], chunk[15]]);
                fmt = Some((code, channels, rate, bits));
            }
            b"data" => data = Some(chunk),
            _ => {} // skip LIST, fact, cue, ...
        }
    }

    let (code, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Parse("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Parse("no data chunk".into()))?;
    if channels == 0 || channels > 2 {
        return Err(Error::Format(format!("{channels} channels (want mono or stereo)")));
    }
    if rate == 0 {
        return Err(Error::Parse("zero sample rate".into()));
    }
    let ch = channels as usize;

    let samples = match (code, bits) {
        (1, 16) => {
            let frame = 2 * ch;
            if data.len() % frame != 0 {
                return Err(Error::Parse("data chunk not a whole number of frames".into()));
            }
            data.chunks_exact(frame)
                .map(|f| {
                    let mut acc = 0.0;
                    for c in 0..ch {
                        let v = i16::from_le_bytes([f[2 * c], f[2 * c + 1]]);
                        acc += v as f64 / 32768.0;
                    }
                    acc / ch as f64
                })
                .collect()
        }
        (3, 32) => {
            let frame = 4 * ch;
            if data.len() % frame != 0 {
                return Err(Error::Parse("data chunk not a whole number of frames".into()));
            }
            data.chunks_exact(frame)
                .map(|f| {
                    let mut acc = 0.0;
                    for c in 0..ch {
                        let v = f32::from_le_bytes([
                            f[4 * c],
                            f[4 * c + 1],
                            f[4 * c + 2],
                            f[4 * c + 3],
                        ]);
                        acc += (v as f64).clamp(-1.0, 1.0);
                    }
                    acc / ch as f64
                })
                .collect()
        }
        (1, other) => {
            return Err(Error::Format(format!("{other}-bit PCM (want 16)")));
        }
        (3, other) => {
            return Err(Error::Format(format!("{other}-bit float (want 32)")));
        }
        (other, _) => {
            return Err(Error::Format(format!(
                "audio format code {other} (want 1 = PCM or 3 = IEEE float)"
            )));
        }
    };

    Signal::new(samples, rate)
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<Signal> {
    parse_wav(&fs::read(path)?)
}

/// Encodes `s` as mono 16-bit PCM. Samples are clamped to the representable
/// range, so a full-scale signal round-trips within one quantization step.
pub fn encode_wav(s: &Signal) -> Vec<u8> {
    let data_len = s.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&s.sample_rate().to_le_bytes());
    out.extend_from_slice(&(s.sample_rate() * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &v in s.samples() {
        let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, s: &Signal) -> Result<()> {
    fs::write(path, encode_wav(s))?;
    Ok(())
}

// --- Resampling ---

/// Zero crossings kept on each side of the interpolation kernel.
const SINC_ZERO_CROSSINGS: usize = 32;

/// Normalized sinc: sin(pi x) / (pi x), 1 at x = 0.
fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Sample-rate conversion by windowed-sinc interpolation (Hann window,
/// [`SINC_ZERO_CROSSINGS`] zero crossings per side). The kernel is
/// renormalized per output sample so constants pass through with unit gain.
/// Output length is `round(len * target / source)`. Same-rate calls return
/// the input unchanged, which also makes repeated conversion idempotent.
pub fn resample(s: &Signal, target_rate: u32) -> Result<Signal> {
    if target_rate == 0 {
        return Err(Error::arg("target sample rate must be positive"));
    }
    if target_rate == s.sample_rate() {
        return Ok(s.clone());
    }
    let src = s.sample_rate() as f64;
    let dst = target_rate as f64;
    let out_len = (s.len() as f64 * dst / src).round() as usize;
    let x = s.samples();

    // When downsampling, cut off at the target Nyquist; the kernel stretches
    // by 1/cutoff so it always spans the configured zero-crossing count.
    let cutoff = (dst / src).min(1.0);
    let half_width = SINC_ZERO_CROSSINGS as f64 / cutoff;

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let center = m as f64 * src / dst;
        let lo = ((center - half_width).ceil() as i64).max(0);
        let hi = ((center + half_width).floor() as i64).min(x.len() as i64 - 1);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for n in lo..=hi {
            let d = n as f64 - center;
            let hann = 0.5 * (1.0 + (PI * d / half_width).cos());
            let w = cutoff * sinc(cutoff * d) * hann;
            acc += x[n as usize] * w;
            norm += w;
        }
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    Signal::new(out, target_rate)
}

// --- Synthesis ---

/// `amp * sin(2 pi freq n / sr)` for `round(dur * sr)` samples.
pub fn synth_sine(freq: f64, dur: f64, sample_rate: u32, amp: f64) -> Result<Signal> {
    if !(freq > 0.0) {
        return Err(Error::arg(format!("frequency {freq} must be positive")));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if freq >= nyquist {
        return Err(Error::arg(format!(
            "frequency {freq} Hz aliases at sample rate {sample_rate} (Nyquist {nyquist})"
        )));
    }
    if !(dur > 0.0) {
        return Err(Error::arg("duration must be positive"));
    }
    let n = (dur * sample_rate as f64).round() as usize;
    let w = 2.0 * PI * freq / sample_rate as f64;
    let samples = (0..n).map(|i| amp * (w * i as f64).sin()).collect();
    Signal::new(samples, sample_rate)
}

/// Like [`synth_sine`] but with an initial phase, for corpus generation.
pub fn synth_sine_phase(
    freq: f64,
    dur: f64,
    sample_rate: u32,
    amp: f64,
    phase: f64,
) -> Result<Signal> {
    let base = synth_sine(freq, dur, sample_rate, 1.0)?;
    let w = 2.0 * PI * freq / sample_rate as f64;
    let samples = (0..base.len())
        .map(|i| amp * (w * i as f64 + phase).sin())
        .collect();
    Signal::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, sr: u32, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), sr).unwrap()
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let s = noise(2048, 16000, 3);
        let back = parse_wav(&encode_wav(&s)).unwrap();
        assert_eq!(back.sample_rate(), 16000);
        assert_eq!(back.len(), s.len());
        let max_err = s
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 1.0 / 32768.0, "max quantization error {max_err}");
    }

    #[test]
    fn pcm16_sample_scaling() {
        // Hand-built mono file holding the samples [0, 16384, -32768, 32767].
        let mut s = Signal::new(vec![0.0; 4], 8000).unwrap();
        s.samples = vec![0.0, 0.5, -1.0, 32767.0 / 32768.0];
        let decoded = parse_wav(&encode_wav(&s)).unwrap();
        let want = [0.0, 0.5, -1.0, 0.999969482421875];
        for (got, want) in decoded.samples().iter().zip(want) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn stereo_downmix_averages_channels() {
        // Stereo PCM16: left = 0.5, right = -0.25 everywhere.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 16).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        for _ in 0..4 {
            bytes.extend_from_slice(&16384i16.to_le_bytes());
            bytes.extend_from_slice(&(-8192i16).to_le_bytes());
        }
        let s = parse_wav(&bytes).unwrap();
        assert_eq!(s.len(), 4);
        for &v in s.samples() {
            assert!((v - 0.125).abs() < 1e-9);
        }
    }

    #[test]
    fn float32_wav_decodes_unscaled() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 12).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&3u16.to_le_bytes()); // IEEE float
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&64000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&32u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&12u32.to_le_bytes());
        for v in [0.25f32, -0.75, 1.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let s = parse_wav(&bytes).unwrap();
        assert_eq!(s.samples(), &[0.25, -0.75, 1.0]);
    }

    #[test]
    fn unsupported_encodings_are_format_errors() {
        // 8-bit PCM
        let mut bytes = encode_wav(&noise(4, 8000, 1));
        bytes[34] = 8; // bits-per-sample field
        match parse_wav(&bytes) {
            Err(Error::Format(_)) => {}
            other => panic!("want format error, got {other:?}"),
        }
        // mu-law (format code 7)
        let mut bytes = encode_wav(&noise(4, 8000, 1));
        bytes[20] = 7;
        match parse_wav(&bytes) {
            Err(Error::Format(_)) => {}
            other => panic!("want format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let bytes = encode_wav(&noise(16, 8000, 1));
        match parse_wav(&bytes[..bytes.len() - 3]) {
            Err(Error::Parse(_)) => {}
            other => panic!("want parse error, got {other:?}"),
        }
        match parse_wav(b"RIFX") {
            Err(Error::Parse(_)) => {}
            other => panic!("want parse error, got {other:?}"),
        }
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let s = noise(1000, 16000, 5);
        let r = resample(&s, 16000).unwrap();
        assert_eq!(s, r);
        // and therefore repeated conversion is idempotent
        let once = resample(&s, 8000).unwrap();
        let twice = resample(&once, 8000).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn resample_output_length_is_rounded_ratio() {
        let s = noise(44100, 44100, 8);
        let r = resample(&s, 16000).unwrap();
        assert_eq!(r.len(), 16000);
        let up = resample(&noise(999, 8000, 9), 12000).unwrap();
        assert_eq!(up.len(), (999.0f64 * 12000.0 / 8000.0).round() as usize);
    }

    #[test]
    fn resample_preserves_dc() {
        let s = Signal::new(vec![0.5; 44100], 44100).unwrap();
        let r = resample(&s, 16000).unwrap();
        // interior samples; edges see a truncated kernel
        for &v in &r.samples()[200..r.len() - 200] {
            assert!((v - 0.5).abs() < 1e-3, "dc drifted to {v}");
        }
    }

    #[test]
    fn resample_keeps_tone_at_its_frequency() {
        // 1 kHz tone at 44.1 kHz, resampled to 16 kHz; the strongest STFT bin
        // must stay within one bin of 1 kHz.
        let s = synth_sine(1000.0, 1.0, 44100, 0.8).unwrap();
        let r = resample(&s, 16000).unwrap();
        let spec = crate::timefreq::stft(&r, 512, 256, crate::timefreq::Window::Hann).unwrap();
        let mag = crate::timefreq::magnitude(&spec);
        let f_bins = mag.values().shape()[0];
        let frames = mag.values().shape()[1];
        let mut mean = vec![0.0; f_bins];
        for f in 0..f_bins {
            for t in 0..frames {
                mean[f] += mag.values().at2(f, t);
            }
        }
        let peak = mean
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let bin_hz = 16000.0 / 512.0;
        assert!(
            (peak as f64 * bin_hz - 1000.0).abs() <= bin_hz,
            "peak at bin {peak} ({} Hz)",
            peak as f64 * bin_hz
        );
    }

    #[test]
    fn synth_sine_quarter_period_values() {
        let s = synth_sine(2000.0, 1.0, 8000, 1.0).unwrap();
        // period is 4 samples: 0, 1, 0, -1, ...
        let want = [0.0, 1.0, 0.0, -1.0];
        for (i, &v) in s.samples().iter().take(16).enumerate() {
            assert!((v - want[i % 4]).abs() < 1e-12);
        }
    }

    #[test]
    fn synth_sine_rejects_aliasing_and_bad_args() {
        assert!(synth_sine(4000.0, 0.1, 8000, 1.0).is_err()); // at Nyquist
        assert!(synth_sine(4001.0, 0.1, 8000, 1.0).is_err());
        assert!(synth_sine(-5.0, 0.1, 8000, 1.0).is_err());
        assert!(synth_sine(3999.0, 0.1, 8000, 1.0).is_ok());
    }

    #[test]
    fn synth_sine_length_is_rounded() {
        let s = synth_sine(100.0, 0.25, 8001, 1.0).unwrap();
        assert_eq!(s.len(), (0.25f64 * 8001.0).round() as usize);
    }
}
