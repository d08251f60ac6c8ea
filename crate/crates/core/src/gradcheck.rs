//! Finite-difference checks of tape gradients.
//!
//! Each suite builds a scalar `L = Σ w ⊙ f(inputs)` with fixed random weights
//! `w`, takes analytic gradients from the tape and compares them with central
//! differences at sampled coordinates.

use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::ActivationKind;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::kernels::{Padding, PoolMode};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
/// Sampled inputs stay this far from activation kinks.
pub const KINK_MARGIN: f64 = 1e-3;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const BATCHNORM_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_POINTS: usize = 200;

/// `|a − n| / max(|a|, |n|, 1e-4)`; the floor keeps near-zero gradients from
/// amplifying finite-difference roundoff.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub component: String,
    pub points: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    /// Same result judged against a different tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<12} points={:<4} max_rel_err={:.3e} tol={:.0e} {}",
            self.component,
            self.points,
            self.max_rel_err,
            self.tolerance,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

type Graph = dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>;

/// Pins a closure to the higher-ranked signature of [`Graph`].
fn graph<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    f
}

fn weighted_loss<'t>(tape: &'t Tape, out: Var<'t>, w: &Tensor) -> Result<Var<'t>> {
    Ok(out.mul(tape.constant(w.clone()))?.sum())
}

fn eval(f: &Graph, inputs: &[Tensor], w: &Tensor) -> Result<f64> {
    let tape = Tape::no_grad();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&tape, &vars)?;
    out.mul(tape.constant(w.clone()))?.sum().value().item()
}

/// Compares tape gradients of `f` with central differences at `points`
/// coordinates spread over all inputs (all of them if there are fewer).
pub fn check_graph(
    component: &str,
    inputs: Vec<Tensor>,
    f: &Graph,
    points: usize,
    tolerance: f64,
    rng: &mut ChaCha8Rng,
) -> Result<CheckResult> {
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let w = Tensor::uniform(out.shape(), -1.0, 1.0, rng);
    let loss = weighted_loss(&tape, out, &w)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let total: usize = inputs.iter().map(Tensor::numel).sum();
    let picks = index::sample(rng, total, points.min(total)).into_vec();
    let mut inputs = inputs;
    let mut max_rel_err: f64 = 0.0;
    for flat in &picks {
        let (mut which, mut at) = (0, *flat);
        while at >= inputs[which].numel() {
            at -= inputs[which].numel();
            which += 1;
        }
        let orig = inputs[which].data()[at];
        inputs[which].data_mut()[at] = orig + FD_STEP;
        let up = eval(f, &inputs, &w)?;
        inputs[which].data_mut()[at] = orig - FD_STEP;
        let down = eval(f, &inputs, &w)?;
        inputs[which].data_mut()[at] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = relative_error(analytic[which].data()[at], numeric);
        if !err.is_finite() {
            return Err(Error::Contract(format!("{component}: non-finite gradient at {flat}")));
        }
        max_rel_err = max_rel_err.max(err);
    }
    Ok(CheckResult {
        component: component.to_string(),
        points: picks.len(),
        max_rel_err,
        tolerance,
    })
}

/// Uniform sample in `[-4, 4]` kept [`KINK_MARGIN`] away from 0 for piecewise kinds.
fn activation_inputs(kind: ActivationKind, n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..n)
        .map(|_| loop {
            let x: f64 = rng.gen_range(-4.0..4.0);
            if !kind.is_piecewise() || x.abs() > KINK_MARGIN {
                break x;
            }
        })
        .collect();
    Tensor::from_parts(vec![n], data)
}

pub fn check_activation(kind: ActivationKind, points: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = activation_inputs(kind, points, &mut rng);
    let act = kind.default_spec();
    match act.trainable_param() {
        None => {
            let f = graph(move |_, v| v[0].activation(act, None));
            check_graph(kind.name(), vec![x], &f, points, DEFAULT_TOLERANCE, &mut rng)
        }
        Some(_) => {
            let p: f64 = rng.gen_range(0.2..1.5);
            let f = graph(move |_, v| v[0].activation(act, Some(v[1])));
            let inputs = vec![x, Tensor::scalar(p)];
            // +1 so the budget also covers the parameter
            check_graph(kind.name(), inputs, &f, points + 1, DEFAULT_TOLERANCE, &mut rng)
        }
    }
}

pub fn check_dense(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::uniform([4, 12], -1.0, 1.0, &mut rng);
    let w = Tensor::uniform([12, 7], -1.0, 1.0, &mut rng);
    let b = Tensor::uniform([7], -1.0, 1.0, &mut rng);
    let f = graph(|_, v| v[0].matmul(v[1])?.bias_add(v[2]));
    check_graph("dense", vec![x, w, b], &f, DEFAULT_POINTS, DEFAULT_TOLERANCE, &mut rng)
}

pub fn check_conv2d(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = CheckResult {
        component: "conv2d".into(),
        points: 0,
        max_rel_err: 0.0,
        tolerance: DEFAULT_TOLERANCE,
    };
    for (padding, stride) in [(Padding::Same, 1), (Padding::Valid, 1), (Padding::Same, 2)] {
        let x = Tensor::uniform([2, 6, 5, 3], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform([3, 3, 3, 4], -1.0, 1.0, &mut rng);
        let b = Tensor::uniform([4], -1.0, 1.0, &mut rng);
        let f = graph(move |_, v| v[0].conv2d(v[1], v[2], padding, stride));
        let r = check_graph("conv2d", vec![x, k, b], &f, 100, DEFAULT_TOLERANCE, &mut rng)?;
        worst.points += r.points;
        worst.max_rel_err = worst.max_rel_err.max(r.max_rel_err);
    }
    Ok(worst)
}

/// Inputs are a shuffled grid with spacing far above the FD step, so no
/// perturbation can change which element wins a pooling window.
pub fn check_maxpool(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 6, 6, 3];
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 1.0).collect();
    rand::seq::SliceRandom::shuffle(values.as_mut_slice(), &mut rng);
    let x = Tensor::from_parts(shape.to_vec(), values);
    let f = graph(|_, v| v[0].maxpool2d(PoolMode::Strict));
    check_graph("maxpool", vec![x], &f, DEFAULT_POINTS, DEFAULT_TOLERANCE, &mut rng)
}

/// Three independent 4×2×2×3 draws; one draw has only 54 coordinates.
pub fn check_batchnorm(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = CheckResult {
        component: "batchnorm".into(),
        points: 0,
        max_rel_err: 0.0,
        tolerance: BATCHNORM_TOLERANCE,
    };
    for _ in 0..3 {
        let x = Tensor::uniform([4, 2, 2, 3], -2.0, 2.0, &mut rng);
        let gamma = Tensor::uniform([3], 0.5, 1.5, &mut rng);
        let beta = Tensor::uniform([3], -0.5, 0.5, &mut rng);
        let f = graph(|_, v| Ok(v[0].batch_norm_train(v[1], v[2], 1e-3)?.0));
        let r = check_graph("batchnorm", vec![x, gamma, beta], &f, DEFAULT_POINTS, BATCHNORM_TOLERANCE, &mut rng)?;
        worst.points += r.points;
        worst.max_rel_err = worst.max_rel_err.max(r.max_rel_err);
    }
    Ok(worst)
}

pub fn check_softmax_xent(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = Tensor::uniform([12, 10], -3.0, 3.0, &mut rng);
    let labels: Vec<usize> = (0..12).map(|_| rng.gen_range(0..10)).collect();
    let f = graph(move |_, v| v[0].softmax_cross_entropy(&labels));
    check_graph("softmax_xent", vec![logits], &f, DEFAULT_POINTS, DEFAULT_TOLERANCE, &mut rng)
}

/// Activation suites followed by conv2d, dense, maxpool, batchnorm and loss.
pub fn check_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (i, kind) in ActivationKind::ALL.into_iter().enumerate() {
        out.push(check_activation(kind, DEFAULT_POINTS, seed.wrapping_add(i as u64))?);
    }
    out.push(check_conv2d(seed)?);
    out.push(check_dense(seed)?);
    out.push(check_maxpool(seed)?);
    out.push(check_batchnorm(seed)?);
    out.push(check_softmax_xent(seed)?);
    Ok(out)
}
