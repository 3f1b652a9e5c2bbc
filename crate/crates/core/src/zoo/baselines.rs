//! Non-learned reference classifiers.
//!
//! These give a floor that any trained model must clear, and double as a
//! certificate that a synthetic task is solvable from its features at all:
//! if nearest-neighbor lookup cannot read the class off the spectrogram,
//! no amount of training will.

use crate::optim::Sample;
use crate::zoo::tasks::VoiceClip;

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn class_of(sample: &Sample) -> usize {
    let row = sample.target.data();
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of test samples whose nearest training sample (flattened
/// Euclidean distance over the inputs) shares their class.
pub fn nearest_neighbor_accuracy(train: &[Sample], test: &[Sample]) -> f64 {
    assert!(!train.is_empty() && !test.is_empty(), "empty split");
    let mut hits = 0usize;
    for probe in test {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, cand) in train.iter().enumerate() {
            let d = l2_distance(probe.input.data(), cand.input.data());
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        if class_of(&train[best]) == class_of(probe) {
            hits += 1;
        }
    }
    hits as f64 / test.len() as f64
}

/// Per-frame energy fraction inside `band` (Hz, inclusive), from the raw
/// magnitude spectrogram.
fn band_fractions(clip: &VoiceClip, band: (f64, f64)) -> Vec<f64> {
    let freqs = clip.stft.freqs();
    let bins: Vec<usize> = (0..clip.stft.f_bins())
        .filter(|&b| freqs[b] >= band.0 && freqs[b] <= band.1)
        .collect();
    (0..clip.stft.frames())
        .map(|t| {
            let total: f64 = (0..clip.stft.f_bins())
                .map(|b| clip.stft.values().at2(b, t).powi(2))
                .sum();
            let inside: f64 = bins
                .iter()
                .map(|&b| clip.stft.values().at2(b, t).powi(2))
                .sum();
            if total > 0.0 {
                inside / total
            } else {
                0.0
            }
        })
        .collect()
}

/// Frame-level voice detection by thresholding the energy fraction inside
/// `band`. The threshold is chosen on the training clips (best accuracy
/// over the observed fractions) and scored on the test clips.
pub fn band_energy_accuracy(train: &[VoiceClip], test: &[VoiceClip], band: (f64, f64)) -> f64 {
    let gather = |clips: &[VoiceClip]| -> (Vec<f64>, Vec<f64>) {
        let mut fracs = Vec::new();
        let mut labels = Vec::new();
        for clip in clips {
            fracs.extend(band_fractions(clip, band));
            labels.extend(clip.labels.iter().copied());
        }
        (fracs, labels)
    };
    let (train_fracs, train_labels) = gather(train);
    assert!(!train_fracs.is_empty(), "no training frames");

    // candidate thresholds: every observed fraction, plus the extremes
    let mut candidates = train_fracs.clone();
    candidates.push(0.0);
    candidates.push(1.0);
    let score = |fracs: &[f64], labels: &[f64], thr: f64| -> f64 {
        let hits = fracs
            .iter()
            .zip(labels)
            .filter(|&(&f, &l)| (f >= thr) == (l == 1.0))
            .count();
        hits as f64 / fracs.len() as f64
    };
    let mut best_thr = 0.5;
    let mut best_acc = -1.0;
    for &thr in &candidates {
        let acc = score(&train_fracs, &train_labels, thr);
        if acc > best_acc {
            best_acc = acc;
            best_thr = thr;
        }
    }

    let (test_fracs, test_labels) = gather(test);
    score(&test_fracs, &test_labels, best_thr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::tasks::{make_pitch_task, make_voice_task, VOICE_CARRIER_HZ, VOICE_SWEEP_HZ};

    #[test]
    fn nearest_neighbor_solves_the_pitch_task() {
        let task = make_pitch_task(17, 4, 2).unwrap();
        let acc = nearest_neighbor_accuracy(&task.train, &task.test);
        assert!(acc >= 0.9, "1-NN accuracy {acc} below certification bar");
    }

    #[test]
    fn band_energy_solves_the_voice_task() {
        let task = make_voice_task(17, 6, 3).unwrap();
        let band = (
            VOICE_CARRIER_HZ - 2.0 * VOICE_SWEEP_HZ,
            VOICE_CARRIER_HZ + 2.0 * VOICE_SWEEP_HZ,
        );
        let acc = band_energy_accuracy(&task.train, &task.test, band);
        assert!(acc >= 0.8, "band-energy accuracy {acc} below bar");
    }

    #[test]
    fn nearest_neighbor_is_perfect_on_its_own_training_set() {
        let task = make_pitch_task(3, 2, 1).unwrap();
        let acc = nearest_neighbor_accuracy(&task.train, &task.train);
        assert_eq!(acc, 1.0);
    }
}
