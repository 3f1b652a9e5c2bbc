//! Ready-made architectures for the bundled tasks.
//!
//! Each builder returns a [`ModelSpec`]; capacity knobs (hidden sizes,
//! channel counts) are parameters where a task plainly needs them varied.
//! All heads are logistic with binary cross entropy, so one-hot
//! classification and multi-label tagging train the same way.

use crate::nn::Activation;
use crate::optim::LossKind;
use crate::zoo::spec::{LayerSpec, ModelSpec};
use crate::zoo::tasks::{
    PITCH_CLASSES, PITCH_F_BINS, PITCH_FRAMES, VOICE_FRAMES, VOICE_MELS, VOICE_WINDOW,
};

fn dense(units: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense { units, activation }
}

fn conv2d(kernel: (usize, usize), channels: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        kernel,
        channels,
        stride: (1, 1),
        same_pad: true,
        activation: Activation::Relu,
    }
}

fn conv1d(width: usize, features: usize) -> LayerSpec {
    LayerSpec::Conv1d {
        width,
        features,
        stride: 1,
        activation: Activation::Relu,
    }
}

fn pool(pool: (usize, usize)) -> LayerSpec {
    LayerSpec::MaxPool { pool }
}

fn recurrent(hidden: usize, units: usize, bidirectional: bool, final_only: bool) -> LayerSpec {
    LayerSpec::Recurrent {
        hidden,
        units,
        state_activation: Activation::Tanh,
        activation: Activation::Tanh,
        bidirectional,
        final_only,
    }
}

/// Fully connected stack over a flattened spectrogram patch: three hidden
/// relu layers and a logistic head. The classic configuration is hidden
/// widths of 512 over an odd, centered frame context; both are knobs here
/// because the same family serves desk-scale tasks.
pub fn dense_stack(input: (usize, usize), hidden: [usize; 3], outputs: usize) -> ModelSpec {
    ModelSpec {
        name: "dense-stack".into(),
        input_shape: vec![input.0, input.1],
        layers: vec![
            LayerSpec::Flatten,
            dense(hidden[0], Activation::Relu),
            dense(hidden[1], Activation::Relu),
            dense(hidden[2], Activation::Relu),
            dense(outputs, Activation::Logistic),
        ],
        loss: LossKind::BinaryCrossEntropy,
    }
}

/// Frame-patch voice detector: two convolution pairs and a fifth
/// convolution, each pair followed by pooling over time only, then a dense
/// funnel to one probability. Input is a `(1, mel_bins, frames)` window
/// whose frame count must divide by 8.
pub fn conv2d_voice(input: (usize, usize, usize)) -> ModelSpec {
    ModelSpec {
        name: "conv2d-voice".into(),
        input_shape: vec![input.0, input.1, input.2],
        layers: vec![
            conv2d((3, 3), 16),
            conv2d((3, 3), 16),
            pool((1, 2)),
            conv2d((3, 3), 32),
            conv2d((3, 3), 32),
            pool((1, 2)),
            conv2d((3, 3), 64),
            pool((1, 2)),
            LayerSpec::Flatten,
            dense(64, Activation::Relu),
            dense(32, Activation::Relu),
            dense(1, Activation::Logistic),
        ],
        loss: LossKind::BinaryCrossEntropy,
    }
}

/// Per-frame voice detector over a `(frames, features)` sequence: two
/// stacked bidirectional recurrent layers and a per-frame logistic readout.
pub fn recurrent_voice(frames: usize, features: usize, hidden: usize) -> ModelSpec {
    ModelSpec {
        name: "recurrent-voice".into(),
        input_shape: vec![frames, features],
        layers: vec![
            recurrent(hidden, hidden, true, false),
            recurrent(hidden, hidden, true, false),
            dense(1, Activation::Logistic),
        ],
        loss: LossKind::BinaryCrossEntropy,
    }
}

/// Tagger over a `(features, frames)` spectrogram: two full-height
/// frame-axis convolutions with time pooling, then three dense layers.
/// The first kernel width is picked so the pooled frame count stays even;
/// the chain lands on a single final frame for 8- or 9-frame inputs.
pub fn conv1d_tagger(input: (usize, usize), tags: usize) -> ModelSpec {
    let first_width = if input.1 % 2 == 0 { 3 } else { 4 };
    ModelSpec {
        name: "conv1d-tagger".into(),
        input_shape: vec![input.0, input.1],
        layers: vec![
            conv1d(first_width, 16),
            pool((1, 2)),
            conv1d(2, 32),
            pool((1, 2)),
            LayerSpec::Flatten,
            dense(32, Activation::Relu),
            dense(32, Activation::Relu),
            dense(tags, Activation::Logistic),
        ],
        loss: LossKind::BinaryCrossEntropy,
    }
}

/// Fully convolutional tagger: three conv/pool stages that halve both axes
/// (so each input axis must divide by 8), flattened into a single dense
/// logistic head.
pub fn conv2d_tagger(input: (usize, usize, usize), tags: usize) -> ModelSpec {
    ModelSpec {
        name: "conv2d-tagger".into(),
        input_shape: vec![input.0, input.1, input.2],
        layers: vec![
            conv2d((3, 3), 8),
            pool((2, 2)),
            conv2d((3, 3), 16),
            pool((2, 2)),
            conv2d((3, 3), 32),
            pool((2, 2)),
            LayerSpec::Flatten,
            dense(tags, Activation::Logistic),
        ],
        loss: LossKind::BinaryCrossEntropy,
    }
}

/// Convolutional front end folded into a recurrent summary: two conv/pool
/// stages (axes must divide by 4), the maps refolded as a frame sequence,
/// a sequence layer into a final-state layer, then the head. Tolerates any
/// frame count the pooling accepts, emitting one prediction per clip.
pub fn conv_recurrent_tagger(input: (usize, usize, usize), tags: usize) -> ModelSpec {
    ModelSpec {
        name: "conv-recurrent-tagger".into(),
        input_shape: vec![input.0, input.1, input.2],
        layers: vec![
            conv2d((3, 3), 8),
            pool((2, 2)),
            conv2d((3, 3), 16),
            pool((2, 2)),
            LayerSpec::FoldToSequence,
            recurrent(32, 32, false, false),
            recurrent(32, 32, false, true),
            dense(tags, Activation::Logistic),
        ],
        loss: LossKind::BinaryCrossEntropy,
    }
}

/// Which bundled dataset view a stock model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskView {
    /// Raw magnitude spectrograms of the pitch task, one-hot targets.
    PitchSpectrogram,
    /// Sliding `(1, mels, window)` windows of voice clips, center labels.
    VoiceWindows,
    /// Whole `(frames, mels)` voice clips with per-frame labels.
    VoiceSequences,
}

/// The six stock models at the sizes the bundled tasks call for, each
/// bound to the dataset view it trains on.
pub fn stock_models() -> Vec<(ModelSpec, TaskView)> {
    vec![
        (
            dense_stack((PITCH_F_BINS, PITCH_FRAMES), [64, 64, 64], PITCH_CLASSES),
            TaskView::PitchSpectrogram,
        ),
        (
            conv1d_tagger((PITCH_F_BINS, PITCH_FRAMES), PITCH_CLASSES),
            TaskView::PitchSpectrogram,
        ),
        (
            conv2d_voice((1, VOICE_MELS, VOICE_WINDOW)),
            TaskView::VoiceWindows,
        ),
        (
            conv2d_tagger((1, VOICE_MELS, VOICE_WINDOW), 1),
            TaskView::VoiceWindows,
        ),
        (
            conv_recurrent_tagger((1, VOICE_MELS, VOICE_WINDOW), 1),
            TaskView::VoiceWindows,
        ),
        (
            recurrent_voice(VOICE_FRAMES, VOICE_MELS, 16),
            TaskView::VoiceSequences,
        ),
    ]
}
