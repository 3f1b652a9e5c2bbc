//! Declarative model descriptions.
//!
//! A [`ModelSpec`] is an input shape plus an ordered layer list and a loss;
//! everything needed to rebuild a network is in the text form, so a trained
//! model ships as a spec file next to its weights. Shapes are validated by
//! walking the chain before any weights are allocated, and the walk also
//! yields parameter counts and time receptive fields.

use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::optim::LossKind;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

/// One layer in a model description. Sizes here are outputs; input sizes
/// come from the shape chain.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Reshape anything to a single `(1, numel)` row.
    Flatten,
    /// Turn `(channels, F, T)` feature maps into a `(T, channels * F)`
    /// frame sequence for a recurrent stage.
    FoldToSequence,
    /// Average each feature map: `(J, F, T)` to `(1, J)`.
    GlobalAvgPool,
    Dense {
        units: usize,
        activation: Activation,
    },
    Conv2d {
        kernel: (usize, usize),
        channels: usize,
        stride: (usize, usize),
        same_pad: bool,
        activation: Activation,
    },
    /// Convolution over frames only; the whole feature axis is consumed by
    /// each kernel.
    Conv1d {
        width: usize,
        features: usize,
        stride: usize,
        activation: Activation,
    },
    MaxPool {
        pool: (usize, usize),
    },
    Recurrent {
        hidden: usize,
        units: usize,
        state_activation: Activation,
        activation: Activation,
        bidirectional: bool,
        /// Emit only the final state's readout (one row) instead of one row
        /// per frame.
        final_only: bool,
    },
}

impl LayerSpec {
    /// Short kind token used in the text form and in error messages.
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Flatten => "flatten",
            LayerSpec::FoldToSequence => "fold",
            LayerSpec::GlobalAvgPool => "globalpool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Recurrent { .. } => "recurrent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub loss: LossKind,
}

fn build_err(index: usize, layer: &LayerSpec, reason: impl Into<String>) -> Error {
    Error::Build {
        layer: format!("layer {index} ({})", layer.kind()),
        reason: reason.into(),
    }
}

impl ModelSpec {
    /// The shape after every layer, starting with the input shape. Fails
    /// with the offending layer named when any step is inconsistent.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::arg(format!(
                "input shape {:?} must be non-empty and positive",
                self.input_shape
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::arg("a model needs at least one layer"));
        }
        let mut chain = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = chain.last().unwrap().clone();
            let next = match layer {
                LayerSpec::Flatten => vec![1, cur.iter().product()],
                LayerSpec::FoldToSequence => {
                    let [j, f, t] = cur[..] else {
                        return Err(build_err(i, layer, format!("needs (channels, F, T), has {cur:?}")));
                    };
                    vec![t, j * f]
                }
                LayerSpec::GlobalAvgPool => {
                    let [j, _, _] = cur[..] else {
                        return Err(build_err(i, layer, format!("needs (J, F, T), has {cur:?}")));
                    };
                    vec![1, j]
                }
                LayerSpec::Dense { units, .. } => {
                    let [rows, _] = cur[..] else {
                        return Err(build_err(i, layer, format!("needs (rows, features), has {cur:?}")));
                    };
                    if *units == 0 {
                        return Err(build_err(i, layer, "zero units"));
                    }
                    vec![rows, *units]
                }
                LayerSpec::Conv2d { kernel, channels, stride, same_pad, .. } => {
                    let [k, f, t] = cur[..] else {
                        return Err(build_err(i, layer, format!("needs (channels, F, T), has {cur:?}")));
                    };
                    let padding = if *same_pad { crate::tensor::Padding::Same } else { crate::tensor::Padding::Valid };
                    let (gm, _) = crate::tensor::conv_geometry(
                        &[k, f, t],
                        &[kernel.0, kernel.1, k, *channels],
                        *stride,
                        padding,
                    )
                    .map_err(|e| build_err(i, layer, e.to_string()))?;
                    if stride.0 > kernel.0 || stride.1 > kernel.1 {
                        return Err(build_err(i, layer, format!("stride {stride:?} exceeds kernel {kernel:?}")));
                    }
                    vec![*channels, gm.f_out, gm.t_out]
                }
                LayerSpec::Conv1d { width, features, stride, .. } => {
                    let [_, t] = cur[..] else {
                        return Err(build_err(i, layer, format!("needs (features, T), has {cur:?}")));
                    };
                    if *stride == 0 || *stride > *width {
                        return Err(build_err(i, layer, format!("stride {stride} exceeds kernel width {width}")));
                    }
                    if t < *width {
                        return Err(build_err(i, layer, format!("kernel width {width} exceeds {t} frames")));
                    }
                    vec![*features, (t - width) / stride + 1]
                }
                LayerSpec::MaxPool { pool } => {
                    if cur.len() < 2 {
                        return Err(build_err(i, layer, format!("needs at least rank 2, has {cur:?}")));
                    }
                    let f = cur[cur.len() - 2];
                    let t = cur[cur.len() - 1];
                    if pool.0 == 0 || pool.1 == 0 || f % pool.0 != 0 || t % pool.1 != 0 {
                        return Err(build_err(i, layer, format!("pool {pool:?} does not divide {f}x{t}")));
                    }
                    let mut next = cur.clone();
                    let n = next.len();
                    next[n - 2] = f / pool.0;
                    next[n - 1] = t / pool.1;
                    next
                }
                LayerSpec::Recurrent { hidden, units, final_only, .. } => {
                    let [t, _] = cur[..] else {
                        return Err(build_err(i, layer, format!("needs (T, features), has {cur:?}")));
                    };
                    if *hidden == 0 || *units == 0 {
                        return Err(build_err(i, layer, "zero hidden size or units"));
                    }
                    if *final_only {
                        vec![1, *units]
                    } else {
                        vec![t, *units]
                    }
                }
            };
            chain.push(next);
        }
        Ok(chain)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shape_chain()?.pop().unwrap())
    }

    /// Total trainable scalars, derived from the shape chain.
    pub fn param_count(&self) -> Result<usize> {
        let chain = self.shape_chain()?;
        let mut total = 0;
        for (layer, in_shape) in self.layers.iter().zip(&chain) {
            total += match layer {
                LayerSpec::Dense { units, .. } => units * in_shape[1] + units,
                LayerSpec::Conv2d { kernel, channels, .. } => {
                    kernel.0 * kernel.1 * in_shape[0] * channels + channels
                }
                LayerSpec::Conv1d { width, features, .. } => {
                    width * in_shape[0] * features + features
                }
                LayerSpec::Recurrent { hidden, units, bidirectional, .. } => {
                    let dirs = if *bidirectional { 2 } else { 1 };
                    dirs * (hidden * in_shape[1] + hidden * hidden) + units * dirs * hidden
                }
                _ => 0,
            };
        }
        Ok(total)
    }

    /// How many input frames influence one output frame along the time
    /// axis, or `None` once any layer mixes the whole sequence (dense
    /// heads, flattening, pooling over everything, recurrence).
    pub fn time_receptive_field(&self) -> Result<Option<usize>> {
        self.shape_chain()?; // shapes must be consistent for the walk to mean anything
        let mut rf = 1usize;
        let mut jump = 1usize;
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv2d { kernel, stride, .. } => {
                    rf += (kernel.1 - 1) * jump;
                    jump *= stride.1;
                }
                LayerSpec::Conv1d { width, stride, .. } => {
                    rf += (width - 1) * jump;
                    jump *= stride;
                }
                LayerSpec::MaxPool { pool } => {
                    rf += (pool.1 - 1) * jump;
                    jump *= pool.1;
                }
                LayerSpec::Flatten
                | LayerSpec::FoldToSequence
                | LayerSpec::GlobalAvgPool
                | LayerSpec::Dense { .. }
                | LayerSpec::Recurrent { .. } => return Ok(None),
            }
        }
        Ok(Some(rf))
    }
}

// --- text form ---

const HEADER: &str = "mirforge-model v1";

fn loss_token(loss: LossKind) -> &'static str {
    match loss {
        LossKind::MeanSquaredError => "mse",
        LossKind::CategoricalCrossEntropy => "categorical",
        LossKind::BinaryCrossEntropy => "binary",
    }
}

fn parse_loss(token: &str) -> Result<LossKind> {
    match token {
        "mse" => Ok(LossKind::MeanSquaredError),
        "categorical" => Ok(LossKind::CategoricalCrossEntropy),
        "binary" => Ok(LossKind::BinaryCrossEntropy),
        other => Err(Error::Parse(format!("unknown loss {other:?}"))),
    }
}

fn dims(v: &[usize]) -> String {
    v.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad dimension list {s:?}")))
        })
        .collect()
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    match parse_dims(s)?[..] {
        [a, b] => Ok((a, b)),
        _ => Err(Error::Parse(format!("expected AxB, got {s:?}"))),
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Flatten | LayerSpec::FoldToSequence | LayerSpec::GlobalAvgPool => {
                write!(f, "layer {}", self.kind())
            }
            LayerSpec::Dense { units, activation } => {
                write!(f, "layer dense units={units} act={activation}")
            }
            LayerSpec::Conv2d { kernel, channels, stride, same_pad, activation } => write!(
                f,
                "layer conv2d kernel={}x{} channels={channels} stride={}x{} pad={} act={activation}",
                kernel.0,
                kernel.1,
                stride.0,
                stride.1,
                if *same_pad { "same" } else { "valid" },
            ),
            LayerSpec::Conv1d { width, features, stride, activation } => write!(
                f,
                "layer conv1d width={width} features={features} stride={stride} act={activation}"
            ),
            LayerSpec::MaxPool { pool } => write!(f, "layer maxpool pool={}x{}", pool.0, pool.1),
            LayerSpec::Recurrent {
                hidden,
                units,
                state_activation,
                activation,
                bidirectional,
                final_only,
            } => write!(
                f,
                "layer recurrent hidden={hidden} units={units} state_act={state_activation} act={activation} dir={} out={}",
                if *bidirectional { "bi" } else { "fwd" },
                if *final_only { "final" } else { "seq" },
            ),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{HEADER}")?;
        writeln!(f, "name {}", self.name)?;
        writeln!(f, "input {}", dims(&self.input_shape))?;
        writeln!(f, "loss {}", loss_token(self.loss))?;
        for layer in &self.layers {
            writeln!(f, "{layer}")?;
        }
        Ok(())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<ModelSpec> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(HEADER) {
            return Err(Error::Parse(format!("missing {HEADER:?} header")));
        }
        let mut name = None;
        let mut input_shape = None;
        let mut loss = None;
        let mut layers = Vec::new();
        for line in lines {
            let line = line.trim();
            let (key, rest) = line
                .split_once(' ')
                .ok_or_else(|| Error::Parse(format!("bad line {line:?}")))?;
            match key {
                "name" => name = Some(rest.trim().to_string()),
                "input" => input_shape = Some(parse_dims(rest.trim())?),
                "loss" => loss = Some(parse_loss(rest.trim())?),
                "layer" => layers.push(parse_layer(rest.trim())?),
                other => return Err(Error::Parse(format!("unknown field {other:?}"))),
            }
        }
        Ok(ModelSpec {
            name: name.ok_or_else(|| Error::Parse("missing name".into()))?,
            input_shape: input_shape.ok_or_else(|| Error::Parse("missing input shape".into()))?,
            layers,
            loss: loss.ok_or_else(|| Error::Parse("missing loss".into()))?,
        })
    }
}

fn parse_layer(rest: &str) -> Result<LayerSpec> {
    let mut parts = rest.split_whitespace();
    let kind = parts
        .next()
        .ok_or_else(|| Error::Parse("empty layer line".into()))?;
    let mut kv = HashMap::new();
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad layer field {part:?}")))?;
        kv.insert(k, v);
    }
    let get = |key: &str| -> Result<&str> {
        kv.get(key)
            .copied()
            .ok_or_else(|| Error::Parse(format!("{kind} layer missing {key}=")))
    };
    let int = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Parse(format!("bad integer for {key}=")))
    };
    match kind {
        "flatten" => Ok(LayerSpec::Flatten),
        "fold" => Ok(LayerSpec::FoldToSequence),
        "globalpool" => Ok(LayerSpec::GlobalAvgPool),
        "dense" => Ok(LayerSpec::Dense {
            units: int("units")?,
            activation: get("act")?.parse()?,
        }),
        "conv2d" => Ok(LayerSpec::Conv2d {
            kernel: parse_pair(get("kernel")?)?,
            channels: int("channels")?,
            stride: parse_pair(get("stride")?)?,
            same_pad: match get("pad")? {
                "same" => true,
                "valid" => false,
                other => return Err(Error::Parse(format!("unknown padding {other:?}"))),
            },
            activation: get("act")?.parse()?,
        }),
        "conv1d" => Ok(LayerSpec::Conv1d {
            width: int("width")?,
            features: int("features")?,
            stride: int("stride")?,
            activation: get("act")?.parse()?,
        }),
        "maxpool" => Ok(LayerSpec::MaxPool {
            pool: parse_pair(get("pool")?)?,
        }),
        "recurrent" => Ok(LayerSpec::Recurrent {
            hidden: int("hidden")?,
            units: int("units")?,
            state_activation: get("state_act")?.parse()?,
            activation: get("act")?.parse()?,
            bidirectional: match get("dir")? {
                "bi" => true,
                "fwd" => false,
                other => return Err(Error::Parse(format!("unknown direction {other:?}"))),
            },
            final_only: match get("out")? {
                "final" => true,
                "seq" => false,
                other => return Err(Error::Parse(format!("unknown output mode {other:?}"))),
            },
        }),
        other => Err(Error::Parse(format!("unknown layer kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_spec() -> ModelSpec {
        ModelSpec {
            name: "demo".into(),
            input_shape: vec![1, 8, 16],
            layers: vec![
                LayerSpec::Conv2d {
                    kernel: (3, 3),
                    channels: 4,
                    stride: (1, 1),
                    same_pad: true,
                    activation: Activation::Relu,
                },
                LayerSpec::MaxPool { pool: (2, 2) },
                LayerSpec::FoldToSequence,
                LayerSpec::Recurrent {
                    hidden: 5,
                    units: 6,
                    state_activation: Activation::Tanh,
                    activation: Activation::Tanh,
                    bidirectional: true,
                    final_only: false,
                },
                LayerSpec::Dense {
                    units: 3,
                    activation: Activation::Softmax,
                },
            ],
            loss: LossKind::CategoricalCrossEntropy,
        }
    }

    #[test]
    fn text_form_round_trips() {
        let spec = demo_spec();
        let text = spec.to_string();
        let parsed: ModelSpec = text.parse().unwrap();
        assert_eq!(parsed, spec);

        // every layer kind survives, including the no-field ones
        let mut full = demo_spec();
        full.layers.push(LayerSpec::Flatten);
        full.layers.push(LayerSpec::GlobalAvgPool);
        full.layers.push(LayerSpec::Conv1d {
            width: 3,
            features: 8,
            stride: 1,
            activation: Activation::LeakyRelu(0.02),
        });
        let reparsed: ModelSpec = full.to_string().parse().unwrap();
        assert_eq!(reparsed.layers, full.layers);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!("not a model".parse::<ModelSpec>().is_err());
        let missing_loss = "mirforge-model v1\nname x\ninput 4x4\nlayer flatten\n";
        assert!(missing_loss.parse::<ModelSpec>().is_err());
        let bad_layer = "mirforge-model v1\nname x\ninput 4x4\nloss mse\nlayer warp\n";
        assert!(bad_layer.parse::<ModelSpec>().is_err());
        let bad_int = "mirforge-model v1\nname x\ninput 4x4\nloss mse\nlayer dense units=abc act=relu\n";
        assert!(bad_int.parse::<ModelSpec>().is_err());
    }

    #[test]
    fn shape_chain_tracks_every_stage() {
        let chain = demo_spec().shape_chain().unwrap();
        assert_eq!(
            chain,
            vec![
                vec![1, 8, 16],
                vec![4, 8, 16], // same padding keeps the map size
                vec![4, 4, 8],
                vec![8, 16], // (T to the front, channels * F wide)
                vec![8, 6],
                vec![8, 3],
            ]
        );
        assert_eq!(demo_spec().output_shape().unwrap(), vec![8, 3]);
    }

    #[test]
    fn inconsistent_chains_name_the_offending_layer() {
        let mut spec = demo_spec();
        spec.layers[1] = LayerSpec::MaxPool { pool: (3, 2) }; // 8 % 3 != 0
        match spec.shape_chain() {
            Err(Error::Build { layer, reason }) => {
                assert_eq!(layer, "layer 1 (maxpool)");
                assert!(reason.contains("does not divide"), "reason: {reason}");
            }
            other => panic!("want build error, got {other:?}"),
        }

        // dense after a rank-3 stage is also inconsistent
        let mut spec = demo_spec();
        spec.layers.truncate(1);
        spec.layers.push(LayerSpec::Dense {
            units: 3,
            activation: Activation::Identity,
        });
        match spec.shape_chain() {
            Err(Error::Build { layer, .. }) => assert_eq!(layer, "layer 1 (dense)"),
            other => panic!("want build error, got {other:?}"),
        }
    }

    #[test]
    fn parameter_count_sums_weights_and_biases() {
        let spec = ModelSpec {
            name: "count".into(),
            input_shape: vec![1, 4],
            layers: vec![
                LayerSpec::Dense {
                    units: 3,
                    activation: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::Softmax,
                },
            ],
            loss: LossKind::CategoricalCrossEntropy,
        };
        // (4*3 + 3) + (3*2 + 2)
        assert_eq!(spec.param_count().unwrap(), 23);
    }

    #[test]
    fn receptive_field_grows_through_conv_and_pool() {
        let spec = ModelSpec {
            name: "rf".into(),
            input_shape: vec![1, 8, 16],
            layers: vec![
                LayerSpec::Conv2d {
                    kernel: (3, 3),
                    channels: 2,
                    stride: (1, 1),
                    same_pad: true,
                    activation: Activation::Relu,
                },
                LayerSpec::MaxPool { pool: (1, 2) },
                LayerSpec::Conv2d {
                    kernel: (3, 3),
                    channels: 2,
                    stride: (1, 1),
                    same_pad: true,
                    activation: Activation::Relu,
                },
            ],
            loss: LossKind::BinaryCrossEntropy,
        };
        // kernel 3 -> rf 3; pool 2 -> rf 4, jump 2; kernel 3 -> rf 8
        assert_eq!(spec.time_receptive_field().unwrap(), Some(8));

        let global = demo_spec();
        assert_eq!(global.time_receptive_field().unwrap(), None);
    }
}
