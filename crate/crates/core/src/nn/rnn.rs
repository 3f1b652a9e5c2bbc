//! Simple (Elman-style) recurrent layers over frame sequences.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, uniform_init, Activation};
use crate::tensor::{Param, Tape, Tensor};
use rand::Rng;

/// Whether the layer also runs a time-reversed pass whose states are
/// concatenated with the forward ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnnDirection {
    Forward,
    Bidirectional,
}

/// What the readout produces: one output row per frame, or a single row
/// from the final state(s).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnnMode {
    Sequence,
    Final,
}

/// `h_t = f_h(U x_t + W h_{t-1})`, read out as `y = f_out(V h)`.
///
/// Input is `(T, in_features)`, one frame per row, initial state zero. A
/// bidirectional layer owns a second `(U, W)` pair for the reversed pass and
/// a readout `V` that is `(out_features, 2 * hidden)`.
///
/// The recurrence carries no bias terms by default; [`with_biases`]
/// (RecurrentLayer::with_biases) opts into a `b_h` per scan direction and a
/// `b_out` on the readout.
pub struct RecurrentLayer {
    u_fwd: Param,
    w_fwd: Param,
    bwd: Option<(Param, Param)>,
    v: Param,
    b_h_fwd: Option<Param>,
    b_h_bwd: Option<Param>,
    b_out: Option<Param>,
    f_h: Activation,
    f_out: Activation,
    mode: RnnMode,
}

impl RecurrentLayer {
    pub fn new(
        in_features: usize,
        hidden: usize,
        out_features: usize,
        f_h: Activation,
        f_out: Activation,
        mode: RnnMode,
        direction: RnnDirection,
        rng: &mut impl Rng,
    ) -> Result<RecurrentLayer> {
        if in_features == 0 || hidden == 0 || out_features == 0 {
            return Err(Error::arg("recurrent layer dimensions must be positive"));
        }
        // state-to-state weights get the smaller +-1/sqrt(hidden) scale to
        // keep repeated application from blowing the state up
        let mut input_w = || glorot_uniform(&[hidden, in_features], in_features, hidden, rng);
        let u_fwd = input_w();
        let bwd = match direction {
            RnnDirection::Forward => None,
            RnnDirection::Bidirectional => {
                let u = input_w();
                let w = uniform_init(&[hidden, hidden], 1.0 / (hidden as f64).sqrt(), rng);
                Some((Param::new("rnn.u_bwd", u), Param::new("rnn.w_bwd", w)))
            }
        };
        let w_fwd = uniform_init(&[hidden, hidden], 1.0 / (hidden as f64).sqrt(), rng);
        let dirs = if bwd.is_some() { 2 } else { 1 };
        let v = glorot_uniform(&[out_features, dirs * hidden], dirs * hidden, out_features, rng);
        Ok(RecurrentLayer {
            u_fwd: Param::new("rnn.u_fwd", u_fwd),
            w_fwd: Param::new("rnn.w_fwd", w_fwd),
            bwd,
            v: Param::new("rnn.v", v),
            b_h_fwd: None,
            b_h_bwd: None,
            b_out: None,
            f_h,
            f_out,
            mode,
        })
    }

    /// Adds zero-initialized bias terms: one `b_h` per scan direction inside
    /// the recurrence and `b_out` on the readout.
    pub fn with_biases(mut self) -> RecurrentLayer {
        let hidden = self.hidden();
        self.b_h_fwd = Some(Param::new("rnn.b_h_fwd", Array::zeros(&[hidden])));
        if self.bwd.is_some() {
            self.b_h_bwd = Some(Param::new("rnn.b_h_bwd", Array::zeros(&[hidden])));
        }
        self.b_out = Some(Param::new("rnn.b_out", Array::zeros(&[self.out_features()])));
        self
    }

    pub fn from_parts(
        u_fwd: Array,
        w_fwd: Array,
        bwd: Option<(Array, Array)>,
        v: Array,
        f_h: Activation,
        f_out: Activation,
        mode: RnnMode,
    ) -> Result<RecurrentLayer> {
        if u_fwd.rank() != 2 || w_fwd.rank() != 2 {
            return Err(Error::arg("recurrent weights must be matrices"));
        }
        let hidden = u_fwd.shape()[0];
        if w_fwd.shape() != [hidden, hidden] {
            return Err(Error::arg(format!(
                "state weights want ({hidden}, {hidden}), got {:?}",
                w_fwd.shape()
            )));
        }
        if let Some((u, w)) = &bwd {
            if u.shape() != u_fwd.shape() || w.shape() != w_fwd.shape() {
                return Err(Error::arg("reverse-pass weights must mirror the forward pass"));
            }
        }
        let dirs = if bwd.is_some() { 2 } else { 1 };
        if v.rank() != 2 || v.shape()[1] != dirs * hidden {
            return Err(Error::arg(format!(
                "readout wants (out, {} * {hidden}), got {:?}",
                dirs,
                v.shape()
            )));
        }
        Ok(RecurrentLayer {
            u_fwd: Param::new("rnn.u_fwd", u_fwd),
            w_fwd: Param::new("rnn.w_fwd", w_fwd),
            bwd: bwd.map(|(u, w)| (Param::new("rnn.u_bwd", u), Param::new("rnn.w_bwd", w))),
            v: Param::new("rnn.v", v),
            b_h_fwd: None,
            b_h_bwd: None,
            b_out: None,
            f_h,
            f_out,
            mode,
        })
    }

    pub fn in_features(&self) -> usize {
        self.u_fwd.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.u_fwd.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.v.shape()[0]
    }

    pub fn direction(&self) -> RnnDirection {
        if self.bwd.is_some() {
            RnnDirection::Bidirectional
        } else {
            RnnDirection::Forward
        }
    }

    pub fn mode(&self) -> RnnMode {
        self.mode
    }

    pub fn params(&self) -> Vec<Param> {
        let mut ps = vec![self.u_fwd.clone(), self.w_fwd.clone()];
        if let Some((u, w)) = &self.bwd {
            ps.push(u.clone());
            ps.push(w.clone());
        }
        ps.push(self.v.clone());
        for b in [&self.b_h_fwd, &self.b_h_bwd, &self.b_out].into_iter().flatten() {
            ps.push(b.clone());
        }
        ps
    }

    /// One directional scan; returns the state row for every frame in time
    /// order regardless of scan direction.
    fn scan<'t>(
        &self,
        tape: &'t Tape,
        x: Tensor<'t>,
        u: &Param,
        w: &Param,
        b_h: Option<&Param>,
        frames: usize,
        reversed: bool,
    ) -> Result<Vec<Tensor<'t>>> {
        let ut = tape.param(u).transpose()?;
        let wt = tape.param(w).transpose()?;
        let bias = b_h.map(|b| tape.param(b));
        let mut h = tape.leaf(Array::zeros(&[1, self.hidden()]));
        let mut states = Vec::with_capacity(frames);
        for i in 0..frames {
            let t = if reversed { frames - 1 - i } else { i };
            let x_t = x.slice(0, t, 1)?;
            let mut z = x_t.matmul(ut)?.add(h.matmul(wt)?)?;
            if let Some(b) = bias {
                z = z.add(b)?;
            }
            h = self.f_h.apply(z);
            states.push(h);
        }
        if reversed {
            states.reverse();
        }
        Ok(states)
    }

    /// Maps `(T, in_features)` to `(T, out_features)` in sequence mode or
    /// `(1, out_features)` in final mode.
    pub fn forward<'t>(&self, tape: &'t Tape, x: Tensor<'t>) -> Result<Tensor<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.in_features() {
            return Err(Error::arg(format!(
                "recurrent layer expects (T, {}), got {:?}",
                self.in_features(),
                shape
            )));
        }
        let frames = shape[0];
        if frames == 0 {
            return Err(Error::InputTooShort(
                "recurrent layer needs at least one frame".into(),
            ));
        }
        let fwd = self.scan(
            tape,
            x,
            &self.u_fwd,
            &self.w_fwd,
            self.b_h_fwd.as_ref(),
            frames,
            false,
        )?;
        let states = match &self.bwd {
            None => match self.mode {
                RnnMode::Sequence => tape.concat(&fwd, 0)?,
                RnnMode::Final => fwd[frames - 1],
            },
            Some((u_bwd, w_bwd)) => {
                let bwd = self.scan(
                    tape,
                    x,
                    u_bwd,
                    w_bwd,
                    self.b_h_bwd.as_ref(),
                    frames,
                    true,
                )?;
                match self.mode {
                    RnnMode::Sequence => {
                        let f = tape.concat(&fwd, 0)?;
                        let b = tape.concat(&bwd, 0)?;
                        tape.concat(&[f, b], 1)?
                    }
                    // final state of each scan: last frame forward, first
                    // frame backward
                    RnnMode::Final => tape.concat(&[fwd[frames - 1], bwd[0]], 1)?,
                }
            }
        };
        let vt = tape.param(&self.v).transpose()?;
        let mut y = states.matmul(vt)?;
        if let Some(b) = &self.b_out {
            y = y.add(tape.param(b))?;
        }
        Ok(self.f_out.apply(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseLayer;
    use crate::tensor::{grad_check, GRAD_CHECK_STEP, GRAD_CHECK_TOL};

    fn arr(shape: &[usize], data: &[f64]) -> Array {
        Array::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn eye(n: usize) -> Array {
        let mut a = Array::zeros(&[n, n]);
        for i in 0..n {
            a.set2(i, i, 1.0);
        }
        a
    }

    #[test]
    fn unit_weights_accumulate_a_running_sum() {
        let layer = RecurrentLayer::from_parts(
            arr(&[1, 1], &[1.0]),
            arr(&[1, 1], &[1.0]),
            None,
            arr(&[1, 1], &[1.0]),
            Activation::Identity,
            Activation::Identity,
            RnnMode::Sequence,
        )
        .unwrap();
        let tape = Tape::new();
        let x = tape.leaf(arr(&[3, 1], &[1.0, 2.0, 3.0]));
        let y = layer.forward(&tape, x).unwrap();
        assert_eq!(y.shape(), vec![3, 1]);
        assert_eq!(y.data(), vec![1.0, 3.0, 6.0]);
    }

    #[test]
    fn zero_state_weights_reduce_to_a_per_frame_feedforward() {
        let u = arr(&[2, 3], &[0.3, -0.5, 0.2, 0.7, 0.1, -0.4]);
        let v = arr(&[2, 2], &[0.6, -0.2, 0.3, 0.9]);
        let rnn = RecurrentLayer::from_parts(
            u.clone(),
            Array::zeros(&[2, 2]),
            None,
            v.clone(),
            Activation::Tanh,
            Activation::Logistic,
            RnnMode::Sequence,
        )
        .unwrap();
        let hidden = DenseLayer::from_parts(u, Array::zeros(&[2]), Activation::Tanh).unwrap();
        let out = DenseLayer::from_parts(v, Array::zeros(&[2]), Activation::Logistic).unwrap();

        let x = arr(&[4, 3], &(0..12).map(|i| (i as f64 * 0.7).sin()).collect::<Vec<_>>());
        let tape = Tape::new();
        let y_rnn = rnn.forward(&tape, tape.leaf(x.clone())).unwrap().data();
        let tape2 = Tape::new();
        let h = hidden.forward(&tape2, tape2.leaf(x)).unwrap();
        let y_ff = out.forward(&tape2, h).unwrap().data();
        // with no recurrence the scan must be the frame-wise network, bit
        // for bit
        assert_eq!(y_rnn, y_ff);
    }

    #[test]
    fn forward_only_output_ignores_the_future() {
        let layer = RecurrentLayer::from_parts(
            arr(&[2, 1], &[0.5, -0.3]),
            arr(&[2, 2], &[0.2, 0.1, -0.4, 0.3]),
            None,
            arr(&[1, 2], &[1.0, 1.0]),
            Activation::Tanh,
            Activation::Identity,
            RnnMode::Sequence,
        )
        .unwrap();
        let x1 = arr(&[3, 1], &[0.5, -0.2, 0.8]);
        let x2 = arr(&[3, 1], &[0.5, -0.2, -9.0]);
        let tape = Tape::new();
        let y1 = layer.forward(&tape, tape.leaf(x1)).unwrap().data();
        let y2 = layer.forward(&tape, tape.leaf(x2)).unwrap().data();
        assert_eq!(y1[0], y2[0]);
        assert_eq!(y1[1], y2[1]);
        assert_ne!(y1[2], y2[2]);
    }

    #[test]
    fn bidirectional_output_sees_the_future() {
        let layer = RecurrentLayer::from_parts(
            arr(&[2, 1], &[0.5, -0.3]),
            arr(&[2, 2], &[0.2, 0.1, -0.4, 0.3]),
            Some((
                arr(&[2, 1], &[0.4, 0.6]),
                arr(&[2, 2], &[0.1, -0.2, 0.5, 0.2]),
            )),
            arr(&[1, 4], &[1.0, 1.0, 1.0, 1.0]),
            Activation::Tanh,
            Activation::Identity,
            RnnMode::Sequence,
        )
        .unwrap();
        let x1 = arr(&[3, 1], &[0.5, -0.2, 0.8]);
        let x2 = arr(&[3, 1], &[0.5, -0.2, -9.0]);
        let tape = Tape::new();
        let y1 = layer.forward(&tape, tape.leaf(x1)).unwrap().data();
        let y2 = layer.forward(&tape, tape.leaf(x2)).unwrap().data();
        // the reversed scan carries information from the last frame into
        // every earlier output
        assert_ne!(y1[0], y2[0]);
    }

    #[test]
    fn final_mode_concatenates_both_terminal_states() {
        // no recurrence and identity activations: forward terminal state is
        // x at the last frame, reverse terminal state is 2 * x at the first
        let layer = RecurrentLayer::from_parts(
            arr(&[1, 1], &[1.0]),
            Array::zeros(&[1, 1]),
            Some((arr(&[1, 1], &[2.0]), Array::zeros(&[1, 1]))),
            eye(2),
            Activation::Identity,
            Activation::Identity,
            RnnMode::Final,
        )
        .unwrap();
        let tape = Tape::new();
        let x = tape.leaf(arr(&[3, 1], &[10.0, 20.0, 30.0]));
        let y = layer.forward(&tape, x).unwrap();
        assert_eq!(y.shape(), vec![1, 2]);
        assert_eq!(y.data(), vec![30.0, 20.0]);
    }

    #[test]
    fn opt_in_biases_shift_state_and_readout() {
        // no recurrence, identity everywhere: y_t = (x_t + b_h) + b_out
        let layer = RecurrentLayer::from_parts(
            arr(&[1, 1], &[1.0]),
            Array::zeros(&[1, 1]),
            None,
            arr(&[1, 1], &[1.0]),
            Activation::Identity,
            Activation::Identity,
            RnnMode::Sequence,
        )
        .unwrap()
        .with_biases();
        assert_eq!(layer.params().len(), 5);
        layer.params()[3].set_value(arr(&[1], &[0.5])).unwrap();
        layer.params()[4].set_value(arr(&[1], &[2.0])).unwrap();
        let tape = Tape::new();
        let y = layer.forward(&tape, tape.leaf(arr(&[3, 1], &[1.0, 2.0, 3.0]))).unwrap();
        assert_eq!(y.data(), vec![3.5, 4.5, 5.5]);
    }

    #[test]
    fn biased_gradients_pass_numeric_check() {
        let layer = RecurrentLayer::from_parts(
            arr(&[2, 2], &[0.4, -0.3, 0.2, 0.6]),
            arr(&[2, 2], &[0.3, 0.1, -0.2, 0.4]),
            None,
            arr(&[1, 2], &[0.7, -0.5]),
            Activation::Tanh,
            Activation::Logistic,
            RnnMode::Final,
        )
        .unwrap()
        .with_biases();
        layer.params()[3].set_value(arr(&[2], &[0.3, -0.2])).unwrap();
        layer.params()[4].set_value(arr(&[1], &[0.4])).unwrap();
        let x = arr(&[4, 2], &(0..8).map(|i| (i as f64 * 1.1).sin()).collect::<Vec<_>>());
        let err = grad_check(
            |tape, x| layer.forward(tape, x)?.reduce_sum(None),
            &x,
            GRAD_CHECK_STEP,
        )
        .unwrap();
        assert!(err < GRAD_CHECK_TOL, "biased recurrent gradient error {err}");
    }

    #[test]
    fn empty_sequences_are_rejected() {
        let layer = RecurrentLayer::from_parts(
            arr(&[1, 1], &[1.0]),
            arr(&[1, 1], &[0.5]),
            None,
            arr(&[1, 1], &[1.0]),
            Activation::Tanh,
            Activation::Identity,
            RnnMode::Sequence,
        )
        .unwrap();
        let tape = Tape::new();
        let x = tape.leaf(Array::zeros(&[0, 1]));
        match layer.forward(&tape, x) {
            Err(Error::InputTooShort(_)) => {}
            other => panic!("want input-too-short, got {other:?}"),
        }
    }

    #[test]
    fn gradient_through_time_passes_numeric_check() {
        let layer = RecurrentLayer::from_parts(
            arr(&[2, 2], &[0.4, -0.3, 0.2, 0.6]),
            arr(&[2, 2], &[0.3, 0.1, -0.2, 0.4]),
            Some((
                arr(&[2, 2], &[0.1, 0.5, -0.3, 0.2]),
                arr(&[2, 2], &[-0.1, 0.3, 0.2, -0.4]),
            )),
            arr(&[1, 4], &[0.7, -0.5, 0.3, 0.4]),
            Activation::Tanh,
            Activation::Logistic,
            RnnMode::Sequence,
        )
        .unwrap();
        let x = arr(&[5, 2], &(0..10).map(|i| (i as f64 * 0.9).cos()).collect::<Vec<_>>());
        let err = grad_check(
            |tape, x| {
                let y = layer.forward(tape, x)?;
                y.mul(y)?.reduce_sum(None)
            },
            &x,
            GRAD_CHECK_STEP,
        )
        .unwrap();
        assert!(err < GRAD_CHECK_TOL, "recurrent gradient error {err}");
    }
}
