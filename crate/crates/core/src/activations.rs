//! TaLU and the comparison activations.
//!
//! TaLU is the identity for `x > 0` and `α·tanh(x)` otherwise, with `α`
//! trainable (one scalar per activation layer, initialised to 1.0). Its
//! derivative is `1` for `x > 0` and `α·sech²(x)` otherwise, so `x = 0` takes
//! the tanh branch: value 0, slope `α`.
//!
//! Every kind comes with an exact analytic derivative. Kinds with a trainable
//! scalar (TaLU's `α`, PReLU's slope) also report the derivative with respect
//! to that scalar.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vmath;

pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
pub const SELU_SCALE: f64 = 1.050_700_987_355_480_5;
pub const DEFAULT_TALU_ALPHA: f64 = 1.0;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.3;
pub const DEFAULT_SWISH_BETA: f64 = 1.0;

/// `sqrt(2/π)` for the tanh form of GELU.
const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_K: f64 = 0.044_715;
/// Above this, softplus is evaluated as `x + ln(1 + e^-x)`.
const SOFTPLUS_SWITCH: f64 = 30.0;

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `tanh(x)` and `sech²(x)` for `x ≤ 0` from one exponential, several times
/// cheaper than `tanh` plus `cosh`. With `e = exp(2x)`:
/// `tanh = expm1(2x)/(e + 1)`, `sech² = 4e/(e + 1)²`.
#[inline(always)]
fn tanh_sech2_nonpositive(x: f64) -> (f64, f64) {
    let (e, m) = vmath::exp_expm1(2.0 * x);
    let r = 1.0 / (e + 1.0);
    (m * r, 4.0 * e * r * r)
}

// The loops below are only vectorised when inlined into the caller that
// `vmath::vectorized` compiles for the detected target; both branches are
// computed and selected so the body stays branch-free.

#[inline(always)]
fn talu_forward_into(out: &mut [f64], x: &[f64], alpha: f64) {
    for (o, &v) in out.iter_mut().zip(x) {
        let neg = alpha * tanh_sech2_nonpositive(v.min(0.0)).0 + 0.0;
        *o = if v > 0.0 { v } else { neg };
    }
}

#[inline(always)]
fn talu_backward_into(d: &mut [f64], d_alpha: &mut [f64], x: &[f64], upstream: &[f64], alpha: f64) {
    for (((o, a), &v), &g) in d.iter_mut().zip(d_alpha.iter_mut()).zip(x).zip(upstream) {
        let (t, s2) = tanh_sech2_nonpositive(v.min(0.0));
        let neg = v <= 0.0;
        *o = if neg { g * (alpha * s2 + 0.0) + 0.0 } else { g };
        *a = if neg { t * g } else { 0.0 };
    }
}

// `+ 0.0` folds -0.0 into +0.0, so alpha = 0 is bitwise ReLU.
#[inline(always)]
pub fn talu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * tanh_sech2_nonpositive(x).0 + 0.0
    }
}

pub fn sech2(x: f64) -> f64 {
    tanh_sech2_nonpositive(-x.abs()).1
}

#[inline(always)]
pub fn talu_grad(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        alpha * tanh_sech2_nonpositive(x).1 + 0.0
    }
}

/// `∂ talu / ∂α`.
pub fn talu_alpha_grad(x: f64) -> f64 {
    if x > 0.0 {
        0.0
    } else {
        tanh_sech2_nonpositive(x).0
    }
}

/// `max(0, x) + k·min(0, x)`: LeakyReLU for fixed `k`, PReLU for trainable `k`.
pub fn leaky_or_prelu(x: f64, k: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        k * x
    }
}

pub fn leaky_or_prelu_grad(x: f64, k: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        k
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_SCALE * x
    } else {
        SELU_SCALE * SELU_ALPHA * x.exp_m1()
    }
}

pub fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_SCALE
    } else {
        SELU_SCALE * SELU_ALPHA * x.exp()
    }
}

pub fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_K * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_K * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_K * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn swish(x: f64, beta: f64) -> f64 {
    x * sigmoid(beta * x)
}

pub fn swish_grad(x: f64, beta: f64) -> f64 {
    let s = sigmoid(beta * x);
    s + beta * x * s * (1.0 - s)
}

pub fn softplus(x: f64) -> f64 {
    if x > SOFTPLUS_SWITCH {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_grad(x: f64) -> f64 {
    sigmoid(x)
}

pub fn softsign(x: f64) -> f64 {
    x / (1.0 + x.abs())
}

pub fn softsign_grad(x: f64) -> f64 {
    let d = 1.0 + x.abs();
    1.0 / (d * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Talu,
    Relu,
    LeakyRelu,
    Prelu,
    Elu,
    Selu,
    Gelu,
    Swish,
    Softplus,
    Softsign,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 10] = [
        ActivationKind::Talu,
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Prelu,
        ActivationKind::Elu,
        ActivationKind::Selu,
        ActivationKind::Gelu,
        ActivationKind::Swish,
        ActivationKind::Softplus,
        ActivationKind::Softsign,
    ];

    /// Lowercase name used on the command line and in config files.
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Talu => "talu",
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leakyrelu",
            ActivationKind::Prelu => "prelu",
            ActivationKind::Elu => "elu",
            ActivationKind::Selu => "selu",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Swish => "swish",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Softsign => "softsign",
        }
    }

    /// Human-facing name for summaries and result tables.
    pub fn label(self) -> &'static str {
        match self {
            ActivationKind::Talu => "TaLU",
            ActivationKind::Relu => "ReLU",
            ActivationKind::LeakyRelu => "LeakyReLU",
            ActivationKind::Prelu => "PReLU",
            ActivationKind::Elu => "ELU",
            ActivationKind::Selu => "SELU",
            ActivationKind::Gelu => "GELU",
            ActivationKind::Swish => "Swish",
            ActivationKind::Softplus => "SoftPlus",
            ActivationKind::Softsign => "SoftSign",
        }
    }

    /// The kind with its default parameters.
    pub fn default_spec(self) -> Activation {
        match self {
            ActivationKind::Talu => Activation::Talu {
                alpha: DEFAULT_TALU_ALPHA,
            },
            ActivationKind::Relu => Activation::Relu,
            ActivationKind::LeakyRelu => Activation::LeakyRelu {
                slope: DEFAULT_LEAKY_SLOPE,
            },
            ActivationKind::Prelu => Activation::Prelu {
                slope: DEFAULT_LEAKY_SLOPE,
            },
            ActivationKind::Elu => Activation::Elu,
            ActivationKind::Selu => Activation::Selu {
                alpha: SELU_ALPHA,
                scale: SELU_SCALE,
            },
            ActivationKind::Gelu => Activation::Gelu,
            ActivationKind::Swish => Activation::Swish {
                beta: DEFAULT_SWISH_BETA,
            },
            ActivationKind::Softplus => Activation::Softplus,
            ActivationKind::Softsign => Activation::Softsign,
        }
    }

    /// Whether the function is piecewise with a seam at 0.
    pub fn is_piecewise(self) -> bool {
        !matches!(
            self,
            ActivationKind::Gelu | ActivationKind::Swish | ActivationKind::Softplus
        )
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| {
                let names: Vec<_> = ActivationKind::ALL.iter().map(|k| k.name()).collect();
                Error::Contract(format!(
                    "unknown activation {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// An activation kind together with exactly the parameters it uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// `α` is trainable.
    Talu { alpha: f64 },
    Relu,
    LeakyRelu { slope: f64 },
    /// `slope` is trainable.
    Prelu { slope: f64 },
    Elu,
    Selu { alpha: f64, scale: f64 },
    Gelu,
    Swish { beta: f64 },
    Softplus,
    Softsign,
}

/// Gradients of an activation applied elementwise to `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationGrad {
    pub d_input: Tensor,
    /// Gradient of the trainable scalar (TaLU `α`, PReLU slope); `None` for
    /// kinds without one.
    pub d_param: Option<f64>,
}

impl Activation {
    pub fn kind(&self) -> ActivationKind {
        match self {
            Activation::Talu { .. } => ActivationKind::Talu,
            Activation::Relu => ActivationKind::Relu,
            Activation::LeakyRelu { .. } => ActivationKind::LeakyRelu,
            Activation::Prelu { .. } => ActivationKind::Prelu,
            Activation::Elu => ActivationKind::Elu,
            Activation::Selu { .. } => ActivationKind::Selu,
            Activation::Gelu => ActivationKind::Gelu,
            Activation::Swish { .. } => ActivationKind::Swish,
            Activation::Softplus => ActivationKind::Softplus,
            Activation::Softsign => ActivationKind::Softsign,
        }
    }

    pub fn trainable_param(&self) -> Option<f64> {
        match *self {
            Activation::Talu { alpha } => Some(alpha),
            Activation::Prelu { slope } => Some(slope),
            _ => None,
        }
    }

    /// Number of trainable scalars one layer of this activation owns.
    pub fn param_count(&self) -> usize {
        usize::from(self.trainable_param().is_some())
    }

    /// Replaces the trainable scalar; no-op for kinds without one.
    pub fn with_trainable_param(self, v: f64) -> Self {
        match self {
            Activation::Talu { .. } => Activation::Talu { alpha: v },
            Activation::Prelu { .. } => Activation::Prelu { slope: v },
            other => other,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Activation::Talu { alpha } => talu(x, alpha),
            Activation::Relu => relu(x),
            Activation::LeakyRelu { slope } | Activation::Prelu { slope } => leaky_or_prelu(x, slope),
            Activation::Elu => elu(x),
            Activation::Selu { alpha, scale } => {
                if x > 0.0 {
                    scale * x
                } else {
                    scale * alpha * x.exp_m1()
                }
            }
            Activation::Gelu => gelu(x),
            Activation::Swish { beta } => swish(x, beta),
            Activation::Softplus => softplus(x),
            Activation::Softsign => softsign(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Talu { alpha } => talu_grad(x, alpha),
            Activation::Relu => relu_grad(x),
            Activation::LeakyRelu { slope } | Activation::Prelu { slope } => {
                leaky_or_prelu_grad(x, slope)
            }
            Activation::Elu => elu_grad(x),
            Activation::Selu { alpha, scale } => {
                if x > 0.0 {
                    scale
                } else {
                    scale * alpha * x.exp()
                }
            }
            Activation::Gelu => gelu_grad(x),
            Activation::Swish { beta } => swish_grad(x, beta),
            Activation::Softplus => softplus_grad(x),
            Activation::Softsign => softsign_grad(x),
        }
    }

    /// Derivative with respect to the trainable scalar (zero if there is none).
    pub fn param_derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Talu { .. } => talu_alpha_grad(x),
            Activation::Prelu { .. } => x.min(0.0),
            _ => 0.0,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        // one match per tensor so each loop body is monomorphic
        match *self {
            Activation::Talu { alpha } => {
                let mut out = vec![0.0; x.numel()];
                vmath::vectorized(#[inline(always)] || talu_forward_into(&mut out, x.data(), alpha));
                Tensor::from_parts(x.shape().to_vec(), out)
            }
            Activation::Relu => x.map(relu),
            Activation::LeakyRelu { slope } | Activation::Prelu { slope } => x.map(|v| leaky_or_prelu(v, slope)),
            Activation::Elu => x.map(elu),
            Activation::Gelu => x.map(gelu),
            Activation::Softplus => x.map(softplus),
            Activation::Softsign => x.map(softsign),
            act @ (Activation::Selu { .. } | Activation::Swish { .. }) => x.map(|v| act.value(v)),
        }
    }

    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<ActivationGrad> {
        if x.shape() != upstream.shape() {
            return Err(Error::dim("activation backward", x.shape(), upstream.shape()));
        }
        // `+ 0.0` keeps signed zeros out of the gradient (see `talu`).
        let pairs = x.data().iter().zip(upstream.data());
        let (d_input, d_param) = match *self {
            Activation::Talu { alpha } => {
                let mut d = vec![0.0; x.numel()];
                // per-element α contributions, summed in order afterwards so
                // the loop carries no floating-point reduction
                let mut da = vec![0.0; x.numel()];
                vmath::vectorized(#[inline(always)] || talu_backward_into(&mut d, &mut da, x.data(), upstream.data(), alpha));
                (d, Some(da.iter().sum()))
            }
            Activation::Relu => (pairs.map(|(&v, &g)| g * relu_grad(v) + 0.0).collect(), None),
            act => {
                let d = pairs.map(|(&v, &g)| g * act.derivative(v) + 0.0).collect();
                let dp = act.trainable_param().map(|_| {
                    x.data()
                        .iter()
                        .zip(upstream.data())
                        .map(|(&v, &g)| act.param_derivative(v) * g)
                        .sum()
                });
                (d, dp)
            }
        };
        Ok(ActivationGrad {
            d_input: Tensor::from_parts(x.shape().to_vec(), d_input),
            d_param,
        })
    }
}

impl Default for Activation {
    fn default() -> Self {
        ActivationKind::Talu.default_spec()
    }
}

pub fn talu_forward(x: &Tensor, alpha: f64) -> Tensor {
    Activation::Talu { alpha }.forward(x)
}

pub fn talu_backward(x: &Tensor, alpha: f64, upstream: &Tensor) -> Result<ActivationGrad> {
    Activation::Talu { alpha }.backward(x, upstream)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    Activation::Relu.forward(x)
}
