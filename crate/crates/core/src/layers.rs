//! Learnable and structural layers with exact parameter accounting.

use std::iter::Sum;
use std::ops::Add;

use rand::Rng;

use crate::activations::Activation;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::kernels::{pool_output_hw, ConvGeometry, Padding, PoolMode};
use crate::tensor::Tensor;

/// A trainable tensor with its gradient and momentum slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        let velocity = grad.clone();
        Param {
            value,
            grad,
            velocity,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
}

impl ParamCount {
    pub fn trainable(n: usize) -> Self {
        ParamCount {
            total: n,
            trainable: n,
        }
    }

    pub fn non_trainable(&self) -> usize {
        self.total - self.trainable
    }
}

impl Add for ParamCount {
    type Output = ParamCount;

    fn add(self, rhs: Self) -> Self {
        ParamCount {
            total: self.total + rhs.total,
            trainable: self.trainable + rhs.trainable,
        }
    }
}

impl Sum for ParamCount {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ParamCount::default(), Add::add)
    }
}

/// Glorot-uniform: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(shape.to_vec(), -limit, limit, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2D {
    /// `[kh, kw, Cin, Cout]`
    pub kernel: Param,
    pub bias: Param,
    pub padding: Padding,
    pub stride: usize,
}

impl Conv2D {
    pub fn new<R: Rng + ?Sized>(kernel: (usize, usize), in_c: usize, out_c: usize, rng: &mut R) -> Self {
        let (kh, kw) = kernel;
        let shape = [kh, kw, in_c, out_c];
        Conv2D {
            kernel: Param::new(glorot_uniform(&shape, kh * kw * in_c, kh * kw * out_c, rng)),
            bias: Param::new(Tensor::zeros([out_c])),
            padding: Padding::Same,
            stride: 1,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.value.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.value.shape()[3]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[in, out]`
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Dense {
            weight: Param::new(glorot_uniform(&[inputs, outputs], inputs, outputs, rng)),
            bias: Param::new(Tensor::zeros([outputs])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormConfig {
    pub epsilon: f64,
    /// Weight of the old value in `m ← momentum·m + (1 − momentum)·batch_stat`.
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig {
            epsilon: 1e-3,
            momentum: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub moving_mean: Tensor,
    pub moving_var: Tensor,
    pub config: BatchNormConfig,
}

impl BatchNorm {
    pub fn new(channels: usize, config: BatchNormConfig) -> Self {
        BatchNorm {
            gamma: Param::new(Tensor::ones([channels])),
            beta: Param::new(Tensor::zeros([channels])),
            moving_mean: Tensor::zeros([channels]),
            moving_var: Tensor::ones([channels]),
            config,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    fn update_moving(&mut self, mean: &Tensor, var: &Tensor) {
        let m = self.config.momentum;
        for (acc, &b) in self.moving_mean.data_mut().iter_mut().zip(mean.data()) {
            *acc = m * *acc + (1.0 - m) * b;
        }
        for (acc, &b) in self.moving_var.data_mut().iter_mut().zip(var.data()) {
            *acc = m * *acc + (1.0 - m) * b;
        }
    }
}

/// An activation applied as its own layer; owns the trainable scalar if the
/// kind has one.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationLayer {
    pub activation: Activation,
    pub param: Option<Param>,
}

impl ActivationLayer {
    pub fn new(activation: Activation) -> Self {
        ActivationLayer {
            activation,
            param: activation
                .trainable_param()
                .map(|v| Param::new(Tensor::full([1], v))),
        }
    }

    /// The activation with its current trainable value.
    pub fn current(&self) -> Activation {
        match &self.param {
            Some(p) => self.activation.with_trainable_param(p.value.data()[0]),
            None => self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2D(Conv2D),
    Dense(Dense),
    BatchNorm(BatchNorm),
    Activation(ActivationLayer),
    MaxPool(PoolMode),
    Flatten,
    /// Elementwise sum of all inputs.
    Add,
    /// Several layers applied in sequence, reported as one summary row.
    Block(Vec<Layer>),
}

fn bind<'t>(tape: &'t Tape, p: &Param, bindings: &mut Vec<Var<'t>>) -> Var<'t> {
    let v = tape.leaf(p.value.clone());
    bindings.push(v);
    v
}

fn single<'a, 't>(inputs: &'a [Var<'t>], name: &str) -> Result<Var<'t>> {
    match inputs {
        [x] => Ok(*x),
        _ => Err(Error::Contract(format!(
            "{name} takes one input, got {}",
            inputs.len()
        ))),
    }
}

impl Layer {
    /// Keras-style type name used in summaries. Blocks report their first layer.
    pub fn type_name(&self) -> String {
        match self {
            Layer::Conv2D(_) => "Conv2D".into(),
            Layer::Dense(_) => "Dense".into(),
            Layer::BatchNorm(_) => "BatchNormalization".into(),
            Layer::Activation(a) => a.activation.kind().label().into(),
            Layer::MaxPool(_) => "MaxPooling2D".into(),
            Layer::Flatten => "Flatten".into(),
            Layer::Add => "Add".into(),
            Layer::Block(layers) => layers.first().map(Layer::type_name).unwrap_or_default(),
        }
    }

    pub fn param_count(&self) -> ParamCount {
        match self {
            Layer::Conv2D(c) => ParamCount::trainable(c.kernel.numel() + c.bias.numel()),
            Layer::Dense(d) => ParamCount::trainable(d.weight.numel() + d.bias.numel()),
            Layer::BatchNorm(b) => ParamCount {
                total: 4 * b.channels(),
                trainable: 2 * b.channels(),
            },
            Layer::Activation(a) => ParamCount::trainable(a.param.as_ref().map_or(0, Param::numel)),
            Layer::MaxPool(_) | Layer::Flatten | Layer::Add => ParamCount::default(),
            Layer::Block(layers) => layers.iter().map(Layer::param_count).sum(),
        }
    }

    /// Trainable parameters in binding order.
    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv2D(c) => vec![&c.kernel, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            Layer::Activation(a) => a.param.iter().collect(),
            Layer::MaxPool(_) | Layer::Flatten | Layer::Add => Vec::new(),
            Layer::Block(layers) => layers.iter().flat_map(Layer::params).collect(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv2D(c) => vec![&mut c.kernel, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Activation(a) => a.param.iter_mut().collect(),
            Layer::MaxPool(_) | Layer::Flatten | Layer::Add => Vec::new(),
            Layer::Block(layers) => layers.iter_mut().flat_map(Layer::params_mut).collect(),
        }
    }

    /// Per-sample output shape (no batch axis) for the given input shapes.
    pub fn output_shape(&self, inputs: &[Vec<usize>]) -> Result<Vec<usize>> {
        let one = || -> Result<&Vec<usize>> {
            match inputs {
                [x] => Ok(x),
                _ => Err(Error::Contract(format!(
                    "{} takes one input, got {}",
                    self.type_name(),
                    inputs.len()
                ))),
            }
        };
        match self {
            Layer::Conv2D(c) => {
                let x = one()?;
                let &[h, w, ch] = x.as_slice() else {
                    return Err(Error::shape("conv2d", x, "expected (H, W, C)"));
                };
                let k = c.kernel.value.shape();
                if ch != k[2] {
                    return Err(Error::dim("conv2d", x, k));
                }
                let (oh, ow) = ConvGeometry::output_hw((h, w), (k[0], k[1]), c.padding, c.stride)
                    .ok_or_else(|| Error::shape("conv2d", x, "kernel does not fit"))?;
                Ok(vec![oh, ow, k[3]])
            }
            Layer::Dense(d) => {
                let x = one()?;
                let w = d.weight.value.shape();
                if x.as_slice() != [w[0]] {
                    return Err(Error::dim("dense", x, w));
                }
                Ok(vec![w[1]])
            }
            Layer::BatchNorm(b) => {
                let x = one()?;
                if x.last() != Some(&b.channels()) {
                    return Err(Error::dim("batch_norm", x, &[b.channels()]));
                }
                Ok(x.clone())
            }
            Layer::Activation(_) => Ok(one()?.clone()),
            Layer::MaxPool(mode) => {
                let x = one()?;
                let &[h, w, ch] = x.as_slice() else {
                    return Err(Error::shape("maxpool2d", x, "expected (H, W, C)"));
                };
                let (oh, ow) = pool_output_hw(h, w, *mode)
                    .ok_or_else(|| Error::shape("maxpool2d", x, "cannot pool these spatial dims"))?;
                Ok(vec![oh, ow, ch])
            }
            Layer::Flatten => Ok(vec![one()?.iter().product()]),
            Layer::Add => {
                let first = inputs
                    .first()
                    .ok_or_else(|| Error::Contract("Add needs inputs".into()))?;
                if let Some(bad) = inputs.iter().find(|s| *s != first) {
                    return Err(Error::dim("add", first, bad));
                }
                Ok(first.clone())
            }
            Layer::Block(layers) => layers
                .iter()
                .try_fold(one()?.clone(), |s, l| l.output_shape(&[s])),
        }
    }

    /// Records this layer on `tape`. Trainable parameters become leaves and are
    /// appended to `bindings` in [`Layer::params`] order. Training-mode batch
    /// norm updates its moving statistics.
    pub fn forward<'t>(
        &mut self,
        tape: &'t Tape,
        inputs: &[Var<'t>],
        mode: Mode,
        bindings: &mut Vec<Var<'t>>,
    ) -> Result<Var<'t>> {
        match self {
            Layer::Conv2D(c) => {
                let x = single(inputs, "Conv2D")?;
                let k = bind(tape, &c.kernel, bindings);
                let b = bind(tape, &c.bias, bindings);
                x.conv2d(k, b, c.padding, c.stride)
            }
            Layer::Dense(d) => {
                let x = single(inputs, "Dense")?;
                let w = bind(tape, &d.weight, bindings);
                let b = bind(tape, &d.bias, bindings);
                x.matmul(w)?.bias_add(b)
            }
            Layer::BatchNorm(bn) => {
                let x = single(inputs, "BatchNormalization")?;
                let g = bind(tape, &bn.gamma, bindings);
                let b = bind(tape, &bn.beta, bindings);
                match mode {
                    Mode::Train => {
                        let (y, stats) = x.batch_norm_train(g, b, bn.config.epsilon)?;
                        bn.update_moving(&stats.mean, &stats.var);
                        Ok(y)
                    }
                    Mode::Infer => {
                        x.batch_norm_infer(g, b, &bn.moving_mean, &bn.moving_var, bn.config.epsilon)
                    }
                }
            }
            Layer::Activation(a) => {
                let x = single(inputs, "activation")?;
                let p = a.param.as_ref().map(|p| bind(tape, p, bindings));
                x.activation(a.activation, p)
            }
            Layer::MaxPool(mode) => single(inputs, "MaxPooling2D")?.maxpool2d(*mode),
            Layer::Flatten => single(inputs, "Flatten")?.flatten(),
            Layer::Add => {
                let (first, rest) = inputs
                    .split_first()
                    .ok_or_else(|| Error::Contract("Add needs inputs".into()))?;
                rest.iter().try_fold(*first, |acc, v| acc.add(*v))
            }
            Layer::Block(layers) => {
                let mut x = single(inputs, "block")?;
                for l in layers {
                    x = l.forward(tape, &[x], mode, bindings)?;
                }
                Ok(x)
            }
        }
    }
}
