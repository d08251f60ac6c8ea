//! Reverse-mode automatic differentiation on a creation-ordered tape.
//!
//! A [`Tape`] owns every tensor produced during one forward pass. Each
//! recorded node keeps the indices of its inputs and a closure mapping the
//! upstream gradient to one gradient per input. Because nodes can only refer
//! to earlier nodes, creation order is a topological order and
//! [`Tape::backward`] is a single reverse sweep.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::kernels::{self, Padding, PoolMode};
use crate::tensor::Tensor;

/// Upstream gradient and a per-input "needs gradient" mask in, one optional
/// gradient per input out.
type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Result<Vec<Option<Tensor>>>>;

struct Node {
    value: Rc<Tensor>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    record: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.len())
            .field("record", &self.record)
            .finish()
    }
}

/// Handle to a tensor living on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            record: true,
        }
    }

    /// A tape that keeps values but never records backward rules.
    pub fn no_grad() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            record: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input (parameter).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_node(value, Vec::new(), None, true)
    }

    /// A non-differentiable input (data, labels, fixed statistics).
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(value, Vec::new(), None, false)
    }

    fn push_node(&self, value: Tensor, parents: Vec<usize>, backward: Option<BackwardFn>, leaf_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = self.record
            && (leaf_grad || parents.iter().any(|&p| nodes[p].requires_grad));
        let backward = if requires_grad { backward } else { None };
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            parents,
            backward,
            requires_grad,
        });
        Var { tape: self, id }
    }

    fn record(&self, value: Tensor, parents: &[Var<'_>], backward: BackwardFn) -> Var<'_> {
        let ids = parents
            .iter()
            .map(|p| {
                debug_assert!(std::ptr::eq(p.tape, self), "mixing vars of different tapes");
                p.id
            })
            .collect();
        self.push_node(value, ids, Some(backward), false)
    }

    /// Reverse sweep from a scalar `loss`. Leaves the loss does not depend on
    /// get zero gradients.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::ones(root.value.shape().to_vec()));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let parent_grads = backward(&upstream, &needs)?;
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, g) in node.parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), nodes[p].value.shape(), "gradient shape for node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot => *slot = Some(g),
                }
            }
            // keep the root's own gradient readable
            if id == loss.id {
                grads[id] = Some(upstream);
            }
        }
        Ok(Gradients { grads })
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var` if the sweep reached it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient for `var`, zeros if it was not reached.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

fn only(g: Tensor) -> Result<Vec<Option<Tensor>>> {
    Ok(vec![Some(g)])
}

/// Per-channel batch statistics produced by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Tensor,
    pub var: Tensor,
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), rhs.value());
        let out = kernels::matmul(&a, &b)?;
        Ok(self.tape.record(
            out,
            &[self, rhs],
            Box::new(move |g, _| {
                let (da, db) = kernels::matmul_backward(&a, &b, g);
                Ok(vec![Some(da), Some(db)])
            }),
        ))
    }

    /// Elementwise sum of equally shaped operands.
    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().add(&rhs.value())?;
        Ok(self.tape.record(
            out,
            &[self, rhs],
            Box::new(|g, _| Ok(vec![Some(g.clone()), Some(g.clone())])),
        ))
    }

    /// Elementwise product of equally shaped operands.
    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), rhs.value());
        let out = a.zip_map(&b, "mul", |x, y| x * y)?;
        Ok(self.tape.record(
            out,
            &[self, rhs],
            Box::new(move |g, needs| {
                let da = needs[0].then(|| g.zip_map(&b, "mul", |u, y| u * y)).transpose()?;
                let db = needs[1].then(|| g.zip_map(&a, "mul", |u, x| u * x)).transpose()?;
                Ok(vec![da, db])
            }),
        ))
    }

    /// Adds a `[C]` bias along the last axis.
    pub fn bias_add(self, bias: Var<'t>) -> Result<Var<'t>> {
        let out = kernels::bias_add(&self.value(), &bias.value())?;
        Ok(self.tape.record(
            out,
            &[self, bias],
            Box::new(|g, needs| {
                let db = needs[1].then(|| kernels::sum_to_last_axis(g));
                Ok(vec![Some(g.clone()), db])
            }),
        ))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(self) -> Var<'t> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.tape.record(
            Tensor::scalar(x.sum()),
            &[self],
            Box::new(move |g, _| only(Tensor::full(shape.clone(), g.item()?))),
        )
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let x = self.value();
        let from = x.shape().to_vec();
        let out = (*x).clone().reshape(shape)?;
        Ok(self.tape.record(
            out,
            &[self],
            Box::new(move |g, _| only(g.clone().reshape(from.clone())?)),
        ))
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(self) -> Result<Var<'t>> {
        let shape = self.shape();
        let Some((&n, rest)) = shape.split_first() else {
            return Err(Error::shape("flatten", &shape, "needs a batch axis"));
        };
        let width = rest.iter().product::<usize>();
        self.reshape([n, width])
    }

    pub fn conv2d(self, kernel: Var<'t>, bias: Var<'t>, padding: Padding, stride: usize) -> Result<Var<'t>> {
        let (x, k) = (self.value(), kernel.value());
        let (out, geom) = kernels::conv2d(&x, &k, &bias.value(), padding, stride)?;
        Ok(self.tape.record(
            out,
            &[self, kernel, bias],
            Box::new(move |g, needs| {
                let grads = kernels::conv2d_backward(&geom, &x, &k, g, needs[0]);
                Ok(vec![grads.input, Some(grads.kernel), Some(grads.bias)])
            }),
        ))
    }

    pub fn maxpool2d(self, mode: PoolMode) -> Result<Var<'t>> {
        let x = self.value();
        let (out, argmax) = kernels::maxpool2d(&x, mode)?;
        let in_shape = x.shape().to_vec();
        Ok(self.tape.record(
            out,
            &[self],
            Box::new(move |g, _| only(kernels::maxpool2d_backward(&in_shape, &argmax, g))),
        ))
    }

    /// Applies `act` elementwise. Kinds with a trainable scalar take it from
    /// `param`, a one-element var; otherwise `param` must be `None`.
    pub fn activation(self, act: Activation, param: Option<Var<'t>>) -> Result<Var<'t>> {
        let x = self.value();
        match (act.trainable_param(), param) {
            (None, None) => {
                let out = act.forward(&x);
                Ok(self.tape.record(
                    out,
                    &[self],
                    Box::new(move |g, _| only(act.backward(&x, g)?.d_input)),
                ))
            }
            (Some(_), Some(p)) => {
                let act = act.with_trainable_param(p.value().item()?);
                let out = act.forward(&x);
                let p_shape = p.shape();
                Ok(self.tape.record(
                    out,
                    &[self, p],
                    Box::new(move |g, _| {
                        let grad = act.backward(&x, g)?;
                        let dp = Tensor::full(p_shape.clone(), grad.d_param.unwrap_or(0.0));
                        Ok(vec![Some(grad.d_input), Some(dp)])
                    }),
                ))
            }
            (Some(_), None) => Err(Error::Contract(format!(
                "{} needs its trainable parameter",
                act.kind().label()
            ))),
            (None, Some(_)) => Err(Error::Contract(format!(
                "{} has no trainable parameter",
                act.kind().label()
            ))),
        }
    }

    /// Training-mode batch normalization over every axis but the last.
    pub fn batch_norm_train(self, gamma: Var<'t>, beta: Var<'t>, eps: f64) -> Result<(Var<'t>, BatchStats)> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let c = *shape.last().ok_or_else(|| Error::shape("batch_norm", &shape, "scalar input"))?;
        let (gv, bv) = (gamma.value(), beta.value());
        if gv.shape() != [c] || bv.shape() != [c] {
            return Err(Error::dim("batch_norm", &shape, gv.shape()));
        }
        let m = x.numel() / c;
        if shape[0] < 2 || m < 2 {
            return Err(Error::Contract(format!(
                "training-mode batch norm needs at least 2 samples, got shape {shape:?}"
            )));
        }
        let mf = m as f64;
        let mut mean = vec![0.0; c];
        for row in x.data().chunks_exact(c) {
            for (a, v) in mean.iter_mut().zip(row) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= mf);
        let mut var = vec![0.0; c];
        for row in x.data().chunks_exact(c) {
            for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - mu;
                *a += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= mf);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; x.numel()];
        let mut out = vec![0.0; x.numel()];
        let (gd, bd) = (gv.data(), bv.data());
        for ((row, hrow), orow) in x
            .data()
            .chunks_exact(c)
            .zip(xhat.chunks_exact_mut(c))
            .zip(out.chunks_exact_mut(c))
        {
            for i in 0..c {
                let h = (row[i] - mean[i]) * inv_std[i];
                hrow[i] = h;
                orow[i] = gd[i] * h + bd[i];
            }
        }
        let stats = BatchStats {
            mean: Tensor::from_parts(vec![c], mean),
            var: Tensor::from_parts(vec![c], var),
        };
        let out = Tensor::from_parts(shape.clone(), out);
        let y = self.tape.record(
            out,
            &[self, gamma, beta],
            Box::new(move |g, _| {
                let mut dbeta = vec![0.0; c];
                let mut dgamma = vec![0.0; c];
                for (grow, hrow) in g.data().chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for i in 0..c {
                        dbeta[i] += grow[i];
                        dgamma[i] += grow[i] * hrow[i];
                    }
                }
                let k: Vec<f64> = gv.data().iter().zip(&inv_std).map(|(g, s)| g * s / mf).collect();
                let mut dx = vec![0.0; g.numel()];
                for ((grow, hrow), drow) in g
                    .data()
                    .chunks_exact(c)
                    .zip(xhat.chunks_exact(c))
                    .zip(dx.chunks_exact_mut(c))
                {
                    for i in 0..c {
                        drow[i] = k[i] * (mf * grow[i] - dbeta[i] - hrow[i] * dgamma[i]);
                    }
                }
                Ok(vec![
                    Some(Tensor::from_parts(shape.clone(), dx)),
                    Some(Tensor::from_parts(vec![c], dgamma)),
                    Some(Tensor::from_parts(vec![c], dbeta)),
                ])
            }),
        );
        Ok((y, stats))
    }

    /// Inference-mode batch normalization with fixed statistics.
    pub fn batch_norm_infer(self, gamma: Var<'t>, beta: Var<'t>, mean: &Tensor, var: &Tensor, eps: f64) -> Result<Var<'t>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let c = *shape.last().ok_or_else(|| Error::shape("batch_norm", &shape, "scalar input"))?;
        let (gv, bv) = (gamma.value(), beta.value());
        for t in [&*gv, &*bv, mean, var] {
            if t.shape() != [c] {
                return Err(Error::dim("batch_norm", &shape, t.shape()));
            }
        }
        let inv_std: Vec<f64> = var.data().iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mean = mean.data().to_vec();
        let (gd, bd) = (gv.data(), bv.data());
        let mut out = vec![0.0; x.numel()];
        for (row, orow) in x.data().chunks_exact(c).zip(out.chunks_exact_mut(c)) {
            for i in 0..c {
                orow[i] = gd[i] * ((row[i] - mean[i]) * inv_std[i]) + bd[i];
            }
        }
        let out = Tensor::from_parts(shape.clone(), out);
        Ok(self.tape.record(
            out,
            &[self, gamma, beta],
            Box::new(move |g, _| {
                let mut dgamma = vec![0.0; c];
                let mut dx = vec![0.0; g.numel()];
                let gd = gv.data();
                for ((grow, row), drow) in g
                    .data()
                    .chunks_exact(c)
                    .zip(x.data().chunks_exact(c))
                    .zip(dx.chunks_exact_mut(c))
                {
                    for i in 0..c {
                        dgamma[i] += grow[i] * ((row[i] - mean[i]) * inv_std[i]);
                        drow[i] = grow[i] * gd[i] * inv_std[i];
                    }
                }
                Ok(vec![
                    Some(Tensor::from_parts(shape.clone(), dx)),
                    Some(Tensor::from_parts(vec![c], dgamma)),
                    Some(kernels::sum_to_last_axis(g)),
                ])
            }),
        ))
    }

    /// Mean softmax cross-entropy of `[N, C]` logits against integer labels.
    pub fn softmax_cross_entropy(self, labels: &[usize]) -> Result<Var<'t>> {
        let logits = self.value();
        let &[n, c] = logits.shape() else {
            return Err(Error::shape("softmax_cross_entropy", logits.shape(), "logits must be [N, C]"));
        };
        if labels.len() != n {
            return Err(Error::dim("softmax_cross_entropy", logits.shape(), &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Data(format!("label {bad} out of range for {c} classes")));
        }
        let mut probs = Vec::with_capacity(n * c);
        let mut loss = 0.0;
        for (row, &label) in logits.data().chunks_exact(c).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = z.ln();
            loss -= row[label] - max - log_z;
            probs.extend(row.iter().map(|v| (v - max - log_z).exp()));
        }
        let labels = labels.to_vec();
        Ok(self.tape.record(
            Tensor::scalar(loss / n as f64),
            &[self],
            Box::new(move |g, _| {
                let scale = g.item()? / n as f64;
                let mut d = probs.clone();
                for (row, &label) in d.chunks_exact_mut(c).zip(&labels) {
                    row[label] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                only(Tensor::from_parts(vec![n, c], d))
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gives_ones() {
        let tape = Tape::new();
        let w = tape.leaf(t(&[3], &[1.0, -2.0, 5.0]));
        let loss = w.sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w).data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_of_squares() {
        let tape = Tape::new();
        let w = tape.leaf(t(&[2], &[1.0, 2.0]));
        let loss = w.mul(w).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w).data(), &[2.0, 4.0]);
    }

    #[test]
    fn unreached_leaf_gets_zeros() {
        let tape = Tape::new();
        let w = tape.leaf(t(&[2], &[1.0, 2.0]));
        let unused = tape.leaf(t(&[2, 2], &[1.0; 4]));
        let g = tape.backward(w.sum()).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused), Tensor::zeros([2, 2]));
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let tape = Tape::new();
        let w = tape.leaf(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn add_backward_passes_gradient_to_both() {
        let tape = Tape::new();
        let a = tape.leaf(t(&[2], &[1.0, 2.0]));
        let b = tape.leaf(t(&[2], &[0.0, 0.0]));
        let s = a.add(b).unwrap();
        assert_eq!(*s.value(), *a.value());
        let up = tape.constant(t(&[2], &[3.0, -4.0]));
        let g = tape.backward(s.mul(up).unwrap().sum()).unwrap();
        assert_eq!(g.wrt(a).data(), &[3.0, -4.0]);
        assert_eq!(g.wrt(b).data(), &[3.0, -4.0]);
    }

    #[test]
    fn add_rejects_broadcast() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::zeros([2, 3]));
        let b = tape.leaf(Tensor::zeros([3]));
        assert!(matches!(a.add(b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn flatten_keeps_batch_axis() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros([1, 4, 4, 128]));
        let f = x.flatten().unwrap();
        assert_eq!(f.shape(), vec![1, 2048]);
        let g = tape.backward(f.sum()).unwrap();
        assert_eq!(g.wrt(x).shape(), &[1, 4, 4, 128]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let x = tape.constant(t(&[1, 2], &[1.0, 2.0]));
        let w = tape.leaf(t(&[2, 1], &[3.0, 4.0]));
        let y = x.matmul(w).unwrap();
        assert!(!x.requires_grad());
        let g = tape.backward(y.sum()).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.wrt(w).data(), &[1.0, 2.0]);
    }

    #[test]
    fn no_grad_tape_records_nothing() {
        let tape = Tape::no_grad();
        let w = tape.leaf(t(&[2], &[1.0, 2.0]));
        let loss = w.mul(w).unwrap().sum();
        assert_eq!(loss.value().item().unwrap(), 5.0);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(w).is_none());
    }

    #[test]
    fn uniform_logits_give_ln_classes() {
        let tape = Tape::new();
        let logits = tape.leaf(Tensor::full([3, 10], 0.7));
        let loss = logits.softmax_cross_entropy(&[0, 4, 9]).unwrap();
        assert!((loss.value().item().unwrap() - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_give_small_loss() {
        let tape = Tape::new();
        let mut row = vec![0.0; 10];
        row[3] = 60.0;
        let logits = tape.leaf(t(&[1, 10], &row));
        let loss = logits.softmax_cross_entropy(&[3]).unwrap();
        assert!(loss.value().item().unwrap() < 1e-20);
    }

    #[test]
    fn xent_gradient_is_softmax_minus_onehot() {
        let tape = Tape::new();
        let logits = tape.leaf(t(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.0, 0.5]));
        let loss = logits.softmax_cross_entropy(&[2, 0]).unwrap();
        let g = tape.backward(loss).unwrap().wrt(logits);
        let lv = logits.value();
        for (r, label) in [(0usize, 2usize), (1, 0)] {
            let row = &lv.data()[r * 3..r * 3 + 3];
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            for j in 0..3 {
                let expect = (row[j].exp() / z - f64::from(u8::from(j == label))) / 2.0;
                assert!((g.data()[r * 3 + j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn out_of_range_label_is_data_error() {
        let tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros([1, 10]));
        assert!(matches!(logits.softmax_cross_entropy(&[10]), Err(Error::Data(_))));
    }

    #[test]
    fn batch_norm_needs_two_samples() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros([1, 4]));
        let g = tape.leaf(Tensor::ones([4]));
        let b = tape.leaf(Tensor::zeros([4]));
        assert!(matches!(x.batch_norm_train(g, b, 1e-3), Err(Error::Contract(_))));
    }

    #[test]
    fn activation_param_contract() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros([2]));
        assert!(x.activation(Activation::Talu { alpha: 1.0 }, None).is_err());
        let p = tape.leaf(Tensor::ones([1]));
        assert!(x.activation(Activation::Relu, Some(p)).is_err());
    }

    #[test]
    fn repeated_backward_is_bit_identical() {
        let tape = Tape::new();
        let x = tape.constant(t(&[2, 2, 2, 1], &[0.3, -1.2, 2.0, 0.1, -0.7, 0.9, 1.1, -0.4]));
        let k = tape.leaf(t(&[2, 2, 1, 2], &[0.5, -0.1, 0.2, 0.3, -0.4, 0.8, 0.6, -0.9]));
        let b = tape.leaf(t(&[2], &[0.01, -0.02]));
        let a = tape.leaf(t(&[1], &[1.0]));
        let y = x
            .conv2d(k, b, Padding::Same, 1)
            .unwrap()
            .activation(Activation::Talu { alpha: 1.0 }, Some(a))
            .unwrap();
        let loss = y.mul(y).unwrap().sum();
        let g1 = tape.backward(loss).unwrap();
        let g2 = tape.backward(loss).unwrap();
        for v in [k, b, a] {
            let (p, q) = (g1.wrt(v), g2.wrt(v));
            assert!(p.data().iter().zip(q.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
