//! Synthetic corpora with known ground truth.
//!
//! Two generators: a pitch-class task (which of twelve tones is sounding)
//! and a voice-activity task (which frames of a clip contain a frequency-
//! modulated "voice" tone rather than the steady background). Both render
//! audio, run the real analysis front end, and hand back model-ready
//! samples, so everything from synthesis to features is exercised end to
//! end. All randomness comes from the caller's seed.

use crate::array::Array;
use crate::audio::{synth_sine_phase, Signal};
use crate::error::Result;
use crate::optim::Sample;
use crate::timefreq::{magnitude, mel_filterbank, melspectrogram, stft, Spectrogram, Window};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

// --- pitch task ---

pub const PITCH_CLASSES: usize = 12;
pub const PITCH_BASE_HZ: f64 = 440.0;
pub const PITCH_SAMPLE_RATE: u32 = 16_000;
pub const PITCH_N_FFT: usize = 1024;
pub const PITCH_HOP: usize = 512;
/// 0.32 s of audio; an odd frame count keeps dense context windows
/// centered on a middle frame.
const PITCH_SAMPLES: usize = 5120;
pub const PITCH_F_BINS: usize = PITCH_N_FFT / 2 + 1;
pub const PITCH_FRAMES: usize = (PITCH_SAMPLES - PITCH_N_FFT) / PITCH_HOP + 1;

/// Frequency of pitch class `p`: one equal-tempered semitone per step up
/// from the base.
pub fn pitch_class_freq(class: usize) -> f64 {
    PITCH_BASE_HZ * (class as f64 / 12.0).exp2()
}

/// Inputs are raw `(513, 9)` magnitude spectrograms; targets are one-hot
/// `(1, 12)` rows.
pub struct PitchTask {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn pitch_example(rng: &mut ChaCha8Rng, class: usize) -> Result<Sample> {
    let phase = rng.gen_range(0.0..2.0 * PI);
    let amp_db = rng.gen_range(-20.0..0.0);
    let amp = 10f64.powf(amp_db / 20.0);
    let dur = PITCH_SAMPLES as f64 / PITCH_SAMPLE_RATE as f64;
    let signal = synth_sine_phase(pitch_class_freq(class), dur, PITCH_SAMPLE_RATE, amp, phase)?;
    let mag = magnitude(&stft(&signal, PITCH_N_FFT, PITCH_HOP, Window::Hann)?);
    let mut target = Array::zeros(&[1, PITCH_CLASSES]);
    target.set2(0, class, 1.0);
    Ok(Sample {
        input: mag.values().clone(),
        target,
    })
}

/// Renders `per_class` training and test examples per pitch class. Tones
/// vary in phase and level (0 to -20 dB) but not frequency, so the class
/// is exactly recoverable from the spectrum.
pub fn make_pitch_task(seed: u64, train_per_class: usize, test_per_class: usize) -> Result<PitchTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let render = |n: usize, rng: &mut ChaCha8Rng| -> Result<Vec<Sample>> {
        let mut out = Vec::with_capacity(n * PITCH_CLASSES);
        for class in 0..PITCH_CLASSES {
            for _ in 0..n {
                out.push(pitch_example(rng, class)?);
            }
        }
        Ok(out)
    };
    Ok(PitchTask {
        train: render(train_per_class, &mut rng)?,
        test: render(test_per_class, &mut rng)?,
    })
}

// --- voice activity task ---

pub const VOICE_SAMPLE_RATE: u32 = 16_000;
pub const VOICE_N_FFT: usize = 512;
pub const VOICE_HOP: usize = 256;
pub const VOICE_FRAMES: usize = 64;
pub const VOICE_MELS: usize = 40;
/// The "voice" is a tone swinging around this carrier...
pub const VOICE_CARRIER_HZ: f64 = 1500.0;
/// ...by this much, several times a second.
pub const VOICE_SWEEP_HZ: f64 = 300.0;
pub const VOICE_VIBRATO_HZ: f64 = 5.0;
/// The background is a steady low tone plus noise.
pub const BACKGROUND_TONE_HZ: f64 = 300.0;
const VOICE_SAMPLES: usize = (VOICE_FRAMES - 1) * VOICE_HOP + VOICE_N_FFT;
/// Frame extent and hop of the sliding windows cut for patch models.
pub const VOICE_WINDOW: usize = 16;
pub const VOICE_WINDOW_HOP: usize = 8;

/// One rendered clip with per-frame ground truth. `mel` is `(40, 64)`;
/// `stft` keeps the raw magnitude for baselines that want exact bands.
pub struct VoiceClip {
    pub mel: Array,
    pub stft: Spectrogram,
    pub labels: Vec<f64>,
}

pub struct VoiceTask {
    pub train: Vec<VoiceClip>,
    pub test: Vec<VoiceClip>,
}

/// Per-sample voice/background mask: alternating segments of 0.1 to 0.3 s,
/// starting from a random kind.
fn segment_mask(rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut mask = Vec::with_capacity(VOICE_SAMPLES);
    let mut kind = rng.gen_bool(0.5);
    while mask.len() < VOICE_SAMPLES {
        let seg = rng.gen_range(1600..=4800);
        for _ in 0..seg {
            if mask.len() == VOICE_SAMPLES {
                break;
            }
            mask.push(kind);
        }
        kind = !kind;
    }
    mask
}

/// Renders the clip for a given mask: an FM tone where the mask is true,
/// a steady tone plus noise elsewhere.
fn render_clip(mask: &[bool], rng: &mut ChaCha8Rng) -> Result<VoiceClip> {
    let sr = VOICE_SAMPLE_RATE as f64;
    let mut voice_phase = 0.0f64;
    let mut samples = Vec::with_capacity(mask.len());
    for (n, &is_voice) in mask.iter().enumerate() {
        let t = n as f64 / sr;
        if is_voice {
            let f_inst = VOICE_CARRIER_HZ + VOICE_SWEEP_HZ * (2.0 * PI * VOICE_VIBRATO_HZ * t).sin();
            voice_phase += 2.0 * PI * f_inst / sr;
            samples.push(0.3 * voice_phase.sin());
        } else {
            let tone = 0.3 * (2.0 * PI * BACKGROUND_TONE_HZ * t).sin();
            samples.push(tone + rng.gen_range(-0.1..0.1));
        }
    }
    let signal = Signal::new(samples, VOICE_SAMPLE_RATE)?;
    let mag = magnitude(&stft(&signal, VOICE_N_FFT, VOICE_HOP, Window::Hann)?);
    let bank = mel_filterbank(VOICE_N_FFT, VOICE_SAMPLE_RATE, VOICE_MELS, 0.0, sr / 2.0)?;
    let mel = melspectrogram(&mag, &bank)?;
    // a frame is "voice" when its center sample is
    let labels = (0..VOICE_FRAMES)
        .map(|f| {
            let center = f * VOICE_HOP + VOICE_N_FFT / 2;
            if mask[center] {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(VoiceClip {
        mel: mel.values().clone(),
        stft: mag,
        labels,
    })
}

pub fn make_voice_task(seed: u64, n_train: usize, n_test: usize) -> Result<VoiceTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let render = |n: usize, rng: &mut ChaCha8Rng| -> Result<Vec<VoiceClip>> {
        (0..n)
            .map(|_| {
                let mask = segment_mask(rng);
                render_clip(&mask, rng)
            })
            .collect()
    };
    Ok(VoiceTask {
        train: render(n_train, &mut rng)?,
        test: render(n_test, &mut rng)?,
    })
}

/// Sequence-model view: inputs `(frames, mels)` (one row per frame),
/// targets `(frames, 1)`.
pub fn recurrent_voice_samples(clips: &[VoiceClip]) -> Vec<Sample> {
    clips
        .iter()
        .map(|clip| {
            let (mels, frames) = (clip.mel.shape()[0], clip.mel.shape()[1]);
            let mut input = Array::zeros(&[frames, mels]);
            for m in 0..mels {
                for f in 0..frames {
                    input.set2(f, m, clip.mel.at2(m, f));
                }
            }
            let target = Array::new(
                vec![frames, 1],
                clip.labels.clone(),
            )
            .expect("one label per frame");
            Sample { input, target }
        })
        .collect()
}

/// Patch-model view: sliding `(1, mels, window)` windows advancing by
/// `hop` frames, each labeled by its center frame.
pub fn window_voice_samples(clips: &[VoiceClip], window: usize, hop: usize) -> Vec<Sample> {
    assert!(window > 0 && hop > 0, "window geometry must be positive");
    let mut out = Vec::new();
    for clip in clips {
        let (mels, frames) = (clip.mel.shape()[0], clip.mel.shape()[1]);
        let mut start = 0;
        while start + window <= frames {
            let mut input = Array::zeros(&[1, mels, window]);
            for m in 0..mels {
                for w in 0..window {
                    input.data_mut()[m * window + w] = clip.mel.at2(m, start + w);
                }
            }
            let label = clip.labels[start + window / 2];
            out.push(Sample {
                input,
                target: Array::new(vec![1, 1], vec![label]).unwrap(),
            });
            start += hop;
        }
    }
    out
}
