//! Named gradient-verification suite.
//!
//! Each component wires one layer or loss into a tiny scalar-valued graph
//! with fixed seeds, then compares every backpropagated gradient — inputs
//! and weights alike — against central differences. The components exist
//! so a build of this library can prove its backward pass wholesale (`ok`
//! on every line) rather than relying on spot checks.
//!
//! The `corrupt` flag is a self-test of the harness: it scales the analytic
//! gradients by 1% before comparison, and a sound suite must flag nearly
//! every component. A checker that stays green while being lied to by 1%
//! is too loose to trust.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::nn::{
    global_avg_pool, uniform_init, Activation, Conv1dLayer, Conv2dLayer, DenseLayer,
    MaxPoolLayer, RecurrentLayer, RnnDirection, RnnMode,
};
use crate::optim::{binary_cross_entropy, categorical_cross_entropy, mean_squared_error};
use crate::tensor::{grad_rel_err, Padding, Param, Tape, Tensor, GRAD_CHECK_STEP, GRAD_CHECK_TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of one named component.
#[derive(Clone, Debug)]
pub struct ComponentReport {
    pub name: &'static str,
    /// Worst relative error across all differentiated entries.
    pub max_rel_err: f64,
}

impl ComponentReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < GRAD_CHECK_TOL
    }
}

struct Component {
    name: &'static str,
    /// Everything differentiated: the input cell first, then any weights.
    params: Vec<Param>,
    run: Box<dyn for<'t> Fn(&'t Tape) -> Result<Tensor<'t>>>,
}

/// Analytic gradients from one backward sweep versus central differences
/// over every parameter entry; `grad_scale` is the corruption hook.
fn component_max_err(component: &Component, grad_scale: f64) -> Result<f64> {
    for p in &component.params {
        p.clear_grad();
    }
    let tape = Tape::new();
    let loss = (component.run)(&tape)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = component
        .params
        .iter()
        .map(|p| {
            p.grad()
                .ok_or_else(|| Error::MissingGrad(p.name().to_string()))
        })
        .collect::<Result<_>>()?;
    for p in &component.params {
        p.clear_grad();
    }

    let eval = || -> Result<f64> {
        let tape = Tape::new();
        (component.run)(&tape)?.item()
    };
    let mut worst = 0.0f64;
    for (p, grads) in component.params.iter().zip(&analytic) {
        let base = p.value();
        for i in 0..base.numel() {
            let mut probe = base.clone();
            probe.data_mut()[i] += GRAD_CHECK_STEP;
            p.set_value(probe)?;
            let fp = eval()?;
            let mut probe = base.clone();
            probe.data_mut()[i] -= GRAD_CHECK_STEP;
            p.set_value(probe)?;
            let fm = eval()?;
            p.set_value(base.clone())?;
            let numeric = (fp - fm) / (2.0 * GRAD_CHECK_STEP);
            worst = worst.max(grad_rel_err(grad_scale * grads[i], numeric));
        }
    }
    Ok(worst)
}

fn components() -> Result<Vec<Component>> {
    let mut out = Vec::new();

    {
        let mut rng = ChaCha8Rng::seed_from_u64(201);
        let layer = DenseLayer::new(7, 5, Activation::Tanh, &mut rng)?;
        let x = Param::new("x", uniform_init(&[2, 7], 1.0, &mut rng));
        let mut params = vec![x.clone()];
        params.extend(layer.params());
        out.push(Component {
            name: "dense_7_to_5",
            params,
            run: Box::new(move |tape| layer.forward(tape, tape.param(&x))?.reduce_sum(None)),
        });
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let layer = Conv1dLayer::new(5, 3, 4, 1, Padding::Valid, Activation::Tanh, &mut rng)?;
        let x = Param::new("x", uniform_init(&[5, 8], 1.0, &mut rng));
        let mut params = vec![x.clone()];
        params.extend(layer.params());
        out.push(Component {
            name: "conv1d_width3",
            params,
            run: Box::new(move |tape| layer.forward(tape, tape.param(&x))?.reduce_sum(None)),
        });
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(203);
        let layer = Conv2dLayer::new(
            (3, 3),
            2,
            4,
            (1, 1),
            Padding::Same,
            Activation::Tanh,
            &mut rng,
        )?;
        let x = Param::new("x", uniform_init(&[2, 6, 8], 1.0, &mut rng));
        let mut params = vec![x.clone()];
        params.extend(layer.params());
        out.push(Component {
            name: "conv2d_3x3x2x4",
            params,
            run: Box::new(move |tape| layer.forward(tape, tape.param(&x))?.reduce_sum(None)),
        });
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(204);
        let layer = MaxPoolLayer::new((2, 2))?;
        let x = Param::new("x", uniform_init(&[1, 4, 6], 1.0, &mut rng));
        // distinct downstream weights so misrouted pooling gradients show up
        let w = uniform_init(&[1, 2, 3], 1.0, &mut rng);
        out.push(Component {
            name: "maxpool_2x2",
            params: vec![x.clone()],
            run: Box::new(move |tape| {
                let y = layer.forward(tape.param(&x))?;
                y.mul(tape.leaf(w.clone()))?.reduce_sum(None)
            }),
        });
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(205);
        let x = Param::new("x", uniform_init(&[3, 4, 5], 1.0, &mut rng));
        let w = uniform_init(&[1, 3], 1.0, &mut rng);
        out.push(Component {
            name: "global_avg_pool",
            params: vec![x.clone()],
            run: Box::new(move |tape| {
                let y = global_avg_pool(tape.param(&x))?;
                y.mul(tape.leaf(w.clone()))?.reduce_sum(None)
            }),
        });
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(206);
        let layer = RecurrentLayer::new(
            3,
            4,
            2,
            Activation::Tanh,
            Activation::Identity,
            RnnMode::Sequence,
            RnnDirection::Forward,
            &mut rng,
        )?;
        let x = Param::new("x", uniform_init(&[5, 3], 1.0, &mut rng));
        let mut params = vec![x.clone()];
        params.extend(layer.params());
        out.push(Component {
            name: "recurrent_t5",
            params,
            run: Box::new(move |tape| layer.forward(tape, tape.param(&x))?.reduce_sum(None)),
        });
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(207);
        let layer = RecurrentLayer::new(
            3,
            4,
            2,
            Activation::Tanh,
            Activation::Logistic,
            RnnMode::Final,
            RnnDirection::Bidirectional,
            &mut rng,
        )?;
        let x = Param::new("x", uniform_init(&[5, 3], 1.0, &mut rng));
        let mut params = vec![x.clone()];
        params.extend(layer.params());
        out.push(Component {
            name: "bidirectional_recurrent",
            params,
            run: Box::new(move |tape| layer.forward(tape, tape.param(&x))?.reduce_sum(None)),
        });
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(208);
        let pred = Param::new("pred", uniform_init(&[2, 3], 2.0, &mut rng));
        let target = uniform_init(&[2, 3], 2.0, &mut rng);
        out.push(Component {
            name: "mean_squared_error",
            params: vec![pred.clone()],
            run: Box::new(move |tape| mean_squared_error(tape, tape.param(&pred), &target)),
        });
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(209);
        let logits = Param::new("logits", uniform_init(&[2, 4], 2.0, &mut rng));
        let mut target = Array::zeros(&[2, 4]);
        target.set2(0, 1, 1.0);
        target.set2(1, 3, 1.0);
        out.push(Component {
            name: "categorical_cross_entropy",
            params: vec![logits.clone()],
            run: Box::new(move |tape| {
                let p = tape.param(&logits).softmax();
                categorical_cross_entropy(tape, p, &target)
            }),
        });
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(210);
        let logits = Param::new("logits", uniform_init(&[1, 6], 2.0, &mut rng));
        let target = Array::new(vec![1, 6], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0])?;
        out.push(Component {
            name: "binary_cross_entropy",
            params: vec![logits.clone()],
            run: Box::new(move |tape| {
                let p = tape.param(&logits).logistic();
                binary_cross_entropy(tape, p, &target)
            }),
        });
    }

    Ok(out)
}

/// Runs every component and reports its worst relative error. With
/// `corrupt` set, analytic gradients are scaled by 1.01 first; the suite
/// is expected to fail almost everywhere, proving it can detect a 1% lie.
pub fn run_gradient_suite(corrupt: bool) -> Result<Vec<ComponentReport>> {
    let scale = if corrupt { 1.01 } else { 1.0 };
    components()?
        .iter()
        .map(|c| {
            Ok(ComponentReport {
                name: c.name,
                max_rel_err: component_max_err(c, scale)?,
            })
        })
        .collect()
}
