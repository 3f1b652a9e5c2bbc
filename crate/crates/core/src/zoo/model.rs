//! Model assembly: a [`ModelSpec`] plus instantiated layers.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::mirf::{self, ParamBlock, ParamBlockKind};
use crate::nn::{
    global_avg_pool, Conv1dLayer, Conv2dLayer, DenseLayer, MaxPoolLayer, RecurrentLayer,
    RnnDirection, RnnMode,
};
use crate::optim::{Sample, Trainable};
use crate::tensor::{Padding, Param, Tape, Tensor};
use crate::zoo::spec::{LayerSpec, ModelSpec};
use rand::Rng;
use std::path::Path;

enum LayerInst {
    Flatten,
    Fold,
    GlobalAvgPool,
    Dense(DenseLayer),
    Conv2d(Conv2dLayer),
    Conv1d(Conv1dLayer),
    MaxPool(MaxPoolLayer),
    Recurrent(RecurrentLayer),
}

impl LayerInst {
    fn params(&self) -> Vec<Param> {
        match self {
            LayerInst::Dense(l) => l.params(),
            LayerInst::Conv2d(l) => l.params(),
            LayerInst::Conv1d(l) => l.params(),
            LayerInst::Recurrent(l) => l.params(),
            _ => Vec::new(),
        }
    }

    fn block_kind(&self) -> Option<ParamBlockKind> {
        match self {
            LayerInst::Dense(_) => Some(ParamBlockKind::Dense),
            LayerInst::Conv2d(_) | LayerInst::Conv1d(_) => Some(ParamBlockKind::Conv),
            LayerInst::Recurrent(_) => Some(ParamBlockKind::Recurrent),
            _ => None,
        }
    }
}

/// An instantiated network: weights allocated per the [`ModelSpec`]'s shape
/// chain, forwarded one sample at a time.
pub struct Model {
    spec: ModelSpec,
    layers: Vec<LayerInst>,
}

impl Model {
    /// Allocates weights for `spec`, drawing initial values from `rng`.
    /// The shape chain is validated first, so a `Build` error here names
    /// the offending layer.
    pub fn build(spec: ModelSpec, rng: &mut impl Rng) -> Result<Model> {
        let chain = spec.shape_chain()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (ls, in_shape) in spec.layers.iter().zip(&chain) {
            let inst = match ls {
                LayerSpec::Flatten => LayerInst::Flatten,
                LayerSpec::FoldToSequence => LayerInst::Fold,
                LayerSpec::GlobalAvgPool => LayerInst::GlobalAvgPool,
                LayerSpec::Dense { units, activation } => {
                    LayerInst::Dense(DenseLayer::new(in_shape[1], *units, *activation, rng)?)
                }
                LayerSpec::Conv2d {
                    kernel,
                    channels,
                    stride,
                    same_pad,
                    activation,
                } => LayerInst::Conv2d(Conv2dLayer::new(
                    *kernel,
                    in_shape[0],
                    *channels,
                    *stride,
                    if *same_pad { Padding::Same } else { Padding::Valid },
                    *activation,
                    rng,
                )?),
                LayerSpec::Conv1d {
                    width,
                    features,
                    stride,
                    activation,
                } => LayerInst::Conv1d(Conv1dLayer::new(
                    in_shape[0],
                    *width,
                    *features,
                    *stride,
                    Padding::Valid,
                    *activation,
                    rng,
                )?),
                LayerSpec::MaxPool { pool } => LayerInst::MaxPool(MaxPoolLayer::new(*pool)?),
                LayerSpec::Recurrent {
                    hidden,
                    units,
                    state_activation,
                    activation,
                    bidirectional,
                    final_only,
                } => LayerInst::Recurrent(RecurrentLayer::new(
                    in_shape[1],
                    *hidden,
                    *units,
                    *state_activation,
                    *activation,
                    if *final_only { RnnMode::Final } else { RnnMode::Sequence },
                    if *bidirectional {
                        RnnDirection::Bidirectional
                    } else {
                        RnnDirection::Forward
                    },
                    rng,
                )?),
            };
            layers.push(inst);
        }
        Ok(Model { spec, layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Trainable scalars actually allocated (agrees with
    /// [`ModelSpec::param_count`]).
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    pub fn forward<'t>(&self, tape: &'t Tape, x: Tensor<'t>) -> Result<Tensor<'t>> {
        let mut cur = x;
        for layer in &self.layers {
            cur = match layer {
                LayerInst::Flatten => cur.reshape(&[1, cur.numel()])?,
                LayerInst::Fold => {
                    let s = cur.shape();
                    let [j, f, t] = s[..] else {
                        return Err(Error::arg(format!(
                            "sequence folding needs (channels, F, T), got {s:?}"
                        )));
                    };
                    cur.reshape(&[j * f, t])?.transpose()?
                }
                LayerInst::GlobalAvgPool => global_avg_pool(cur)?,
                LayerInst::Dense(l) => l.forward(tape, cur)?,
                LayerInst::Conv2d(l) => l.forward(tape, cur)?,
                LayerInst::Conv1d(l) => l.forward(tape, cur)?,
                LayerInst::MaxPool(l) => l.forward(cur)?,
                LayerInst::Recurrent(l) => l.forward(tape, cur)?,
            };
        }
        Ok(cur)
    }

    /// Weight arrays in layer order, ready for the container format.
    pub fn param_blocks(&self) -> Vec<ParamBlock> {
        self.layers
            .iter()
            .filter_map(|l| {
                l.block_kind().map(|kind| ParamBlock {
                    kind,
                    arrays: l.params().iter().map(|p| p.value()).collect(),
                })
            })
            .collect()
    }

    /// Replaces this model's weights with `blocks`, which must line up with
    /// the parameterized layers one to one (as produced by
    /// [`Model::param_blocks`] for the same spec). Values pass through f32
    /// storage, so they are single-precision rounded.
    pub fn load_param_blocks(&self, blocks: &[ParamBlock]) -> Result<()> {
        let slots: Vec<&LayerInst> = self
            .layers
            .iter()
            .filter(|l| l.block_kind().is_some())
            .collect();
        if slots.len() != blocks.len() {
            return Err(Error::Format(format!(
                "model has {} parameterized layers, file holds {}",
                slots.len(),
                blocks.len()
            )));
        }
        for (layer, block) in slots.iter().zip(blocks) {
            let kind = layer.block_kind().unwrap();
            if kind != block.kind {
                return Err(Error::Format(format!(
                    "layer stores {kind:?} weights, file entry is {:?}",
                    block.kind
                )));
            }
            let params = layer.params();
            if params.len() != block.arrays.len() {
                return Err(Error::Format(format!(
                    "layer has {} weight arrays, file entry holds {}",
                    params.len(),
                    block.arrays.len()
                )));
            }
            for (p, a) in params.iter().zip(&block.arrays) {
                p.set_value(a.clone()).map_err(|e| {
                    Error::Format(format!("weight array does not fit its layer: {e}"))
                })?;
            }
        }
        Ok(())
    }

    pub fn save_params(&self, path: impl AsRef<Path>) -> Result<()> {
        mirf::write_params(path, &self.param_blocks())
    }

    pub fn load_params(&self, path: impl AsRef<Path>) -> Result<()> {
        self.load_param_blocks(&mirf::read_params(path)?)
    }
}

impl Trainable for Model {
    fn params(&self) -> Vec<Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn sample_loss<'t>(&self, tape: &'t Tape, sample: &Sample) -> Result<Tensor<'t>> {
        let pred = self.forward(tape, tape.leaf(sample.input.clone()))?;
        self.spec.loss.compute(tape, pred, &sample.target)
    }

    fn predict(&self, input: &Array) -> Result<Array> {
        let tape = Tape::new();
        Ok(self.forward(&tape, tape.leaf(input.clone()))?.to_array())
    }
}
