//! A small CPU deep-learning library built around the TaLU activation
//! (identity for positive inputs, trainable `α·tanh(x)` otherwise).
//!
//! Layout: [`tensor`] and [`kernels`] hold dense storage and raw compute,
//! [`autodiff`] records operations on a tape for reverse-mode gradients,
//! [`activations`], [`layers`] and [`models`] build the networks, and
//! [`training`] and [`datasets`] run them on MNIST / CIFAR-10.

pub mod activations;
pub mod autodiff;
pub mod datasets;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod layers;
pub mod models;
pub mod tensor;
pub mod training;
mod vmath;

pub use activations::{Activation, ActivationGrad, ActivationKind};
pub use autodiff::{Gradients, Tape, Var};
pub use datasets::{Dataset, DatasetName, Split};
pub use error::{Error, Result};
pub use layers::{Layer, Mode, Param, ParamCount};
pub use models::{Architecture, Model, ModelConfig};
pub use tensor::{set_precision, with_precision, Precision, Tensor};
pub use training::{RunRecord, TrainConfig, TrainReport};
