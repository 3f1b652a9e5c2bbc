//! Convolution layers over time-frequency blocks.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, Activation};
use crate::tensor::{conv_geometry, Padding, Param, Tape, Tensor};
use rand::Rng;

/// 2-D convolution over `(channels, F, T)` maps (leading batch axis
/// optional), plus a per-output-channel bias and an activation.
///
/// Kernels are stored `(H, W, K, J)`: height x width x input channels x
/// output channels. Strides may not exceed the kernel extent, so every
/// output still sees a full window.
pub struct Conv2dLayer {
    kernels: Param,
    bias: Param,
    stride: (usize, usize),
    padding: Padding,
    activation: Activation,
}

impl Conv2dLayer {
    pub fn new(
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        stride: (usize, usize),
        padding: Padding,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Conv2dLayer> {
        let (h, w) = kernel;
        if h == 0 || w == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::arg("convolution dimensions must be positive"));
        }
        if stride.0 == 0 || stride.1 == 0 || stride.0 > h || stride.1 > w {
            return Err(Error::arg(format!(
                "stride {stride:?} must be within the {h}x{w} kernel"
            )));
        }
        let fan_in = h * w * in_channels;
        let fan_out = h * w * out_channels;
        let kernels = glorot_uniform(&[h, w, in_channels, out_channels], fan_in, fan_out, rng);
        Ok(Conv2dLayer {
            kernels: Param::new("conv2d.kernels", kernels),
            bias: Param::new("conv2d.bias", Array::zeros(&[out_channels])),
            stride,
            padding,
            activation,
        })
    }

    pub fn from_parts(
        kernels: Array,
        bias: Array,
        stride: (usize, usize),
        padding: Padding,
        activation: Activation,
    ) -> Result<Conv2dLayer> {
        if kernels.rank() != 4 || bias.rank() != 1 || bias.shape()[0] != kernels.shape()[3] {
            return Err(Error::arg(format!(
                "conv kernels want (H, W, K, J) + (J,), got {:?} + {:?}",
                kernels.shape(),
                bias.shape()
            )));
        }
        Ok(Conv2dLayer {
            kernels: Param::new("conv2d.kernels", kernels),
            bias: Param::new("conv2d.bias", bias),
            stride,
            padding,
            activation,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[3]
    }

    pub fn kernel(&self) -> (usize, usize) {
        let s = self.kernels.shape();
        (s[0], s[1])
    }

    pub fn params(&self) -> Vec<Param> {
        vec![self.kernels.clone(), self.bias.clone()]
    }

    /// Output `(J, F', T')` for an input `(K, F, T)`.
    pub fn output_shape(&self, in_shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (k, f, t) = in_shape;
        let (gm, _) = conv_geometry(
            &[k, f, t],
            &self.kernels.shape(),
            self.stride,
            self.padding,
        )?;
        Ok((self.out_channels(), gm.f_out, gm.t_out))
    }

    pub fn forward<'t>(&self, tape: &'t Tape, x: Tensor<'t>) -> Result<Tensor<'t>> {
        let k = tape.param(&self.kernels);
        let b = tape.param(&self.bias);
        let y = x.conv2d(k, self.stride, self.padding)?.add_channel_bias(b)?;
        Ok(self.activation.apply(y))
    }
}

/// 1-D convolution over frame sequences.
///
/// The input is `(features, T)` — a spectrogram column per time step — and
/// each of the `J` kernels spans all features and `width` consecutive
/// frames, collapsing the feature axis in one stroke. It runs as a 2-D
/// convolution whose kernel height equals the feature extent, so the two
/// operators agree bit for bit where they overlap.
pub struct Conv1dLayer {
    inner: Conv2dLayer,
}

impl Conv1dLayer {
    pub fn new(
        in_features: usize,
        width: usize,
        out_features: usize,
        stride: usize,
        padding: Padding,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Conv1dLayer> {
        if stride == 0 || stride > width {
            return Err(Error::arg(format!(
                "stride {stride} must be within the kernel width {width}"
            )));
        }
        if in_features == 0 || width == 0 || out_features == 0 {
            return Err(Error::arg("convolution dimensions must be positive"));
        }
        if padding == Padding::Same {
            return Err(Error::arg(
                "1-D convolution collapses the feature axis and supports only valid padding",
            ));
        }
        let fan_in = in_features * width;
        let fan_out = in_features * width * out_features;
        let kernels = glorot_uniform(
            &[in_features, width, 1, out_features],
            fan_in,
            fan_out,
            rng,
        );
        Ok(Conv1dLayer {
            inner: Conv2dLayer {
                kernels: Param::new("conv1d.kernels", kernels),
                bias: Param::new("conv1d.bias", Array::zeros(&[out_features])),
                stride: (1, stride),
                padding,
                activation,
            },
        })
    }

    pub fn from_parts(
        kernels: Array,
        bias: Array,
        stride: usize,
        padding: Padding,
        activation: Activation,
    ) -> Result<Conv1dLayer> {
        if kernels.rank() != 4 || kernels.shape()[2] != 1 {
            return Err(Error::arg(format!(
                "1-D kernels want (features, width, 1, J), got {:?}",
                kernels.shape()
            )));
        }
        if padding == Padding::Same {
            return Err(Error::arg(
                "1-D convolution collapses the feature axis and supports only valid padding",
            ));
        }
        Ok(Conv1dLayer {
            inner: Conv2dLayer::from_parts(kernels, bias, (1, stride), padding, activation)?,
        })
    }

    pub fn in_features(&self) -> usize {
        self.inner.kernel().0
    }

    pub fn out_features(&self) -> usize {
        self.inner.out_channels()
    }

    pub fn width(&self) -> usize {
        self.inner.kernel().1
    }

    pub fn params(&self) -> Vec<Param> {
        self.inner.params()
    }

    /// Output frame count for `t_in` input frames.
    pub fn output_frames(&self, t_in: usize) -> Result<usize> {
        let (_, _, t_out) = self.inner.output_shape((1, self.in_features(), t_in))?;
        Ok(t_out)
    }

    /// Maps `(features, T)` to `(out_features, T')`.
    pub fn forward<'t>(&self, tape: &'t Tape, x: Tensor<'t>) -> Result<Tensor<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[0] != self.in_features() {
            return Err(Error::arg(format!(
                "1-D convolution expects ({}, T), got {:?}",
                self.in_features(),
                shape
            )));
        }
        let (features, t) = (shape[0], shape[1]);
        let x3 = x.reshape(&[1, features, t])?;
        let y = self.inner.forward(tape, x3)?;
        let ys = y.shape();
        y.reshape(&[ys[0], ys[2]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, GRAD_CHECK_STEP, GRAD_CHECK_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arr(shape: &[usize], data: &[f64]) -> Array {
        Array::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn edge_detector_fires_at_the_boundary_column() {
        // rows of [1, 1, 0, 0] and a full-height horizontal-difference
        // kernel: the response is zero inside flat regions and peaks where
        // the step occurs
        let x = arr(&[1, 3, 4], &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let kernels = arr(&[3, 2, 1, 1], &[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        let layer = Conv2dLayer::from_parts(
            kernels,
            Array::zeros(&[1]),
            (1, 1),
            Padding::Valid,
            Activation::Identity,
        )
        .unwrap();
        let tape = Tape::new();
        let y = layer.forward(&tape, tape.leaf(x)).unwrap();
        assert_eq!(y.shape(), vec![1, 1, 3]);
        assert_eq!(y.data(), vec![0.0, 3.0, 0.0]);
    }

    #[test]
    fn bias_then_activation_order() {
        let layer = Conv2dLayer::from_parts(
            arr(&[1, 1, 1, 1], &[1.0]),
            arr(&[1], &[-1.5]),
            (1, 1),
            Padding::Valid,
            Activation::Relu,
        )
        .unwrap();
        let tape = Tape::new();
        let x = tape.leaf(arr(&[1, 1, 3], &[1.0, 2.0, 3.0]));
        let y = layer.forward(&tape, x).unwrap();
        assert_eq!(y.data(), vec![0.0, 0.5, 1.5]);
    }

    #[test]
    fn output_shapes_follow_stride_and_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let valid = Conv2dLayer::new((3, 3), 2, 4, (1, 1), Padding::Valid, Activation::Relu, &mut rng).unwrap();
        assert_eq!(valid.output_shape((2, 6, 8)).unwrap(), (4, 4, 6));
        let same = Conv2dLayer::new((3, 3), 2, 4, (2, 2), Padding::Same, Activation::Relu, &mut rng).unwrap();
        assert_eq!(same.output_shape((2, 6, 8)).unwrap(), (4, 3, 4));
        // channel mismatch is an input error
        assert!(valid.output_shape((3, 6, 8)).is_err());
    }

    #[test]
    fn strides_beyond_the_kernel_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Conv2dLayer::new((2, 2), 1, 1, (3, 1), Padding::Valid, Activation::Relu, &mut rng).is_err());
        assert!(Conv1dLayer::new(4, 3, 2, 4, Padding::Valid, Activation::Relu, &mut rng).is_err());
    }

    #[test]
    fn moving_sum_over_frames() {
        // two features, all-ones kernels of width 2: each output frame is
        // the sum of two consecutive columns
        let x = arr(&[2, 4], &[1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0]);
        let layer = Conv1dLayer::from_parts(
            arr(&[2, 2, 1, 1], &[1.0, 1.0, 1.0, 1.0]),
            Array::zeros(&[1]),
            1,
            Padding::Valid,
            Activation::Identity,
        )
        .unwrap();
        let tape = Tape::new();
        let y = layer.forward(&tape, tape.leaf(x)).unwrap();
        assert_eq!(y.shape(), vec![1, 3]);
        assert_eq!(y.data(), vec![33.0, 55.0, 77.0]);
        assert_eq!(layer.output_frames(4).unwrap(), 3);
    }

    #[test]
    fn one_hot_kernel_selects_a_feature_row() {
        // width-1 kernel that is 1 at feature row 2 and 0 elsewhere: the
        // output time series is exactly that input row
        let x = arr(&[3, 4], &(0..12).map(|i| i as f64).collect::<Vec<_>>());
        let layer = Conv1dLayer::from_parts(
            arr(&[3, 1, 1, 1], &[0.0, 0.0, 1.0]),
            Array::zeros(&[1]),
            1,
            Padding::Valid,
            Activation::Identity,
        )
        .unwrap();
        let tape = Tape::new();
        let y = layer.forward(&tape, tape.leaf(x)).unwrap();
        assert_eq!(y.shape(), vec![1, 4]);
        assert_eq!(y.data(), vec![8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn conv1d_is_bitwise_a_full_height_conv2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let kernels = crate::nn::uniform_init(&[4, 3, 1, 2], 1.0, &mut rng);
        let bias = crate::nn::uniform_init(&[2], 1.0, &mut rng);
        let x = crate::nn::uniform_init(&[4, 7], 1.0, &mut rng);

        let c1 = Conv1dLayer::from_parts(
            kernels.clone(),
            bias.clone(),
            1,
            Padding::Valid,
            Activation::Tanh,
        )
        .unwrap();
        let c2 = Conv2dLayer::from_parts(kernels, bias, (1, 1), Padding::Valid, Activation::Tanh)
            .unwrap();

        let tape = Tape::new();
        let y1 = c1.forward(&tape, tape.leaf(x.clone())).unwrap();
        let x3 = Array::new(vec![1, 4, 7], x.data().to_vec()).unwrap();
        let y2 = c2.forward(&tape, tape.leaf(x3)).unwrap();
        assert_eq!(y1.shape(), vec![2, 5]);
        assert_eq!(y2.shape(), vec![2, 1, 5]);
        let (d1, d2) = (y1.data(), y2.data());
        assert_eq!(d1.len(), d2.len());
        for (a, b) in d1.iter().zip(&d2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn conv1d_rejects_same_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Conv1dLayer::new(4, 3, 2, 1, Padding::Same, Activation::Relu, &mut rng).is_err());
    }

    #[test]
    fn conv1d_gradient_passes_numeric_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let layer = Conv1dLayer::new(3, 2, 2, 1, Padding::Valid, Activation::Tanh, &mut rng).unwrap();
        let x = arr(&[3, 5], &(0..15).map(|i| (i as f64 * 0.61).sin()).collect::<Vec<_>>());
        let err = grad_check(
            |tape, x| {
                let y = layer.forward(tape, x)?;
                y.mul(y)?.reduce_sum(None)
            },
            &x,
            GRAD_CHECK_STEP,
        )
        .unwrap();
        assert!(err < GRAD_CHECK_TOL, "conv1d gradient error {err}");
    }
}
