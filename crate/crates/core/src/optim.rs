//! Losses, gradient-descent optimizers, and the training loop.
//!
//! Models plug in through [`Trainable`]: one scalar loss per sample, built
//! on the caller's tape so a backward sweep reaches the model's parameters.
//! The loop accumulates mini-batch gradients by scaling each sample's loss
//! by `1 / batch_len` and letting the parameter cells sum the sweeps.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::tensor::{Param, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` inside the
/// log losses, which caps any one term at `-ln(PROB_FLOOR)` (about 16.12)
/// and keeps gradients finite on confident mistakes.
pub const PROB_FLOOR: f64 = 1e-7;

/// Mean squared error over all elements.
pub fn mean_squared_error<'t>(
    tape: &'t Tape,
    pred: Tensor<'t>,
    target: &Array,
) -> Result<Tensor<'t>> {
    if pred.shape() != target.shape() {
        return Err(Error::arg(format!(
            "prediction shape {:?} does not match target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let diff = pred.sub(tape.leaf(target.clone()))?;
    diff.mul(diff)?
        .reduce_sum(None)
        .map(|s| s.mul_scalar(1.0 / target.numel() as f64))
}

/// Cross entropy between probability rows and (one-hot or soft) target
/// rows, averaged over rows: `-mean_rows sum_c t ln p`.
pub fn categorical_cross_entropy<'t>(
    tape: &'t Tape,
    pred: Tensor<'t>,
    target: &Array,
) -> Result<Tensor<'t>> {
    let shape = pred.shape();
    if shape.len() != 2 || target.shape() != shape {
        return Err(Error::arg(format!(
            "cross entropy wants matching (rows, classes) pairs, got {:?} vs {:?}",
            shape,
            target.shape()
        )));
    }
    let rows = shape[0];
    let p = pred.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    tape.leaf(target.clone())
        .mul(p.log())?
        .reduce_sum(None)
        .map(|s| s.mul_scalar(-1.0 / rows as f64))
}

/// Cross entropy for independent binary outputs, averaged over all
/// elements. Targets must be exactly 0 or 1.
pub fn binary_cross_entropy<'t>(
    tape: &'t Tape,
    pred: Tensor<'t>,
    target: &Array,
) -> Result<Tensor<'t>> {
    if pred.shape() != target.shape() {
        return Err(Error::arg(format!(
            "prediction shape {:?} does not match target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if target.data().iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::arg("binary targets must be exactly 0 or 1"));
    }
    let n = target.numel();
    let p = pred.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let t = tape.leaf(target.clone());
    let not_t = tape.leaf(target.map(|v| 1.0 - v));
    let hit = t.mul(p.log())?;
    let miss = not_t.mul(p.neg().add_scalar(1.0).log())?;
    hit.add(miss)?
        .reduce_sum(None)
        .map(|s| s.mul_scalar(-1.0 / n as f64))
}

/// Which loss a model trains with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    MeanSquaredError,
    CategoricalCrossEntropy,
    BinaryCrossEntropy,
}

impl LossKind {
    pub fn compute<'t>(
        &self,
        tape: &'t Tape,
        pred: Tensor<'t>,
        target: &Array,
    ) -> Result<Tensor<'t>> {
        match self {
            LossKind::MeanSquaredError => mean_squared_error(tape, pred, target),
            LossKind::CategoricalCrossEntropy => categorical_cross_entropy(tape, pred, target),
            LossKind::BinaryCrossEntropy => binary_cross_entropy(tape, pred, target),
        }
    }
}

/// Plain gradient descent: `w -= lr * g`. Consumes and clears accumulated
/// gradients; a parameter without one is an error.
pub fn sgd_step(params: &[Param], lr: f64) -> Result<()> {
    for p in params {
        p.apply_step(|value, grad| {
            for (v, g) in value.iter_mut().zip(grad) {
                *v -= lr * g;
            }
        })?;
    }
    Ok(())
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for Adam, one pair per parameter.
/// The step count drives bias correction and increments once per call.
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Param]) -> AdamState {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &[Param], lr: f64) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::arg(format!(
                "optimizer state tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.t += 1;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for (i, p) in params.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            p.apply_step(|value, grad| {
                for j in 0..grad.len() {
                    m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * grad[j];
                    v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * grad[j] * grad[j];
                    let m_hat = m[j] / bias1;
                    let v_hat = v[j] / bias2;
                    value[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

enum OptState {
    Sgd,
    Adam(AdamState),
}

impl OptState {
    fn step(&mut self, params: &[Param], lr: f64) -> Result<()> {
        match self {
            OptState::Sgd => sgd_step(params, lr),
            OptState::Adam(state) => state.step(params, lr),
        }
    }
}

/// One training example: an input block and its target block, shaped for
/// the model at hand.
#[derive(Clone)]
pub struct Sample {
    pub input: Array,
    pub target: Array,
}

/// What `evaluate` scores beside the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Fraction of rows whose argmax matches the target's argmax.
    Accuracy,
    /// Fraction of outputs on the right side of 0.5.
    BinaryAccuracy,
}

/// Anything the loop can fit: a parameter list, a per-sample scalar loss,
/// and a plain-value prediction for scoring.
pub trait Trainable {
    fn params(&self) -> Vec<Param>;
    fn sample_loss<'t>(&self, tape: &'t Tape, sample: &Sample) -> Result<Tensor<'t>>;
    fn predict(&self, input: &Array) -> Result<Array>;
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Epoch mean loss above this (or any non-finite loss) aborts training
    /// with a divergence error.
    pub divergence_limit: f64,
    /// Score this metric on the train set (and validation set, if given)
    /// after each epoch.
    pub metric: Option<Metric>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            lr: 0.01,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
            divergence_limit: 1e6,
            metric: None,
        }
    }
}

/// Per-epoch record; metric and validation fields stay `None` when not
/// requested.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_metric: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    /// CSV with a header row; absent values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_metric,val_loss,val_metric\n");
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.6e},{},{},{}",
                e.epoch,
                e.train_loss,
                cell(e.train_metric),
                cell(e.val_loss),
                cell(e.val_metric),
            );
        }
        out
    }
}

/// Mean loss and metric score of `model` over `data`.
pub fn evaluate(model: &impl Trainable, data: &[Sample], metric: Metric) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty dataset"));
    }
    let mut loss_sum = 0.0;
    let mut hits = 0usize;
    let mut total = 0usize;
    for sample in data {
        let tape = Tape::new();
        loss_sum += model.sample_loss(&tape, sample)?.item()?;
        let pred = model.predict(&sample.input)?;
        if pred.shape() != sample.target.shape() {
            return Err(Error::arg(format!(
                "prediction shape {:?} does not match target {:?}",
                pred.shape(),
                sample.target.shape()
            )));
        }
        match metric {
            Metric::Accuracy => {
                let cols = *pred.shape().last().unwrap();
                for row in 0..pred.numel() / cols {
                    let argmax = |d: &[f64]| {
                        let r = &d[row * cols..(row + 1) * cols];
                        r.iter()
                            .enumerate()
                            .fold(0, |best, (i, &v)| if v > r[best] { i } else { best })
                    };
                    if argmax(pred.data()) == argmax(sample.target.data()) {
                        hits += 1;
                    }
                    total += 1;
                }
            }
            Metric::BinaryAccuracy => {
                for (p, t) in pred.data().iter().zip(sample.target.data()) {
                    if (*p >= 0.5) == (*t >= 0.5) {
                        hits += 1;
                    }
                    total += 1;
                }
            }
        }
    }
    Ok((loss_sum / data.len() as f64, hits as f64 / total as f64))
}

/// Mini-batch gradient descent over `train`, deterministically shuffled
/// from `cfg.seed`. Returns the per-epoch history, or a divergence error if
/// the loss explodes.
pub fn train(
    model: &impl Trainable,
    train: &[Sample],
    val: Option<&[Sample]>,
    cfg: &TrainConfig,
) -> Result<History> {
    if train.is_empty() {
        return Err(Error::arg("cannot train on an empty dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::arg("batch size must be positive"));
    }
    if !(cfg.lr >= 0.0) {
        return Err(Error::arg("learning rate must be non-negative"));
    }
    let params = model.params();
    for p in &params {
        p.clear_grad();
    }
    let mut opt = match cfg.optimizer {
        OptimizerKind::Sgd => OptState::Sgd,
        OptimizerKind::Adam => OptState::Adam(AdamState::new(&params)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let tape = Tape::new();
                let loss = model.sample_loss(&tape, &train[i])?;
                let value = loss.item()?;
                if !value.is_finite() {
                    return Err(Error::Divergence { epoch, loss: value });
                }
                loss_sum += value;
                tape.backward(loss.mul_scalar(scale))?;
            }
            opt.step(&params, cfg.lr)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() || train_loss > cfg.divergence_limit {
            return Err(Error::Divergence {
                epoch,
                loss: train_loss,
            });
        }
        let train_metric = match cfg.metric {
            Some(m) => Some(evaluate(model, train, m)?.1),
            None => None,
        };
        let (val_loss, val_metric) = match (val, cfg.metric) {
            (Some(v), Some(m)) => {
                let (l, s) = evaluate(model, v, m)?;
                (Some(l), Some(s))
            }
            (Some(v), None) => {
                let (l, _) = evaluate(model, v, Metric::Accuracy)?;
                (Some(l), None)
            }
            (None, _) => (None, None),
        };
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            train_metric,
            val_loss,
            val_metric,
        });
    }
    Ok(history)
}
