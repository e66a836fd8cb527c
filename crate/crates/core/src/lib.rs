//! Neural network micro-framework built around the SwishReLU activation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod bench;
pub mod data;
pub mod error;
pub mod nn;
pub mod optim;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod train;

pub use activations::{ActivationKind, ActivationParams};
pub use error::{Error, Result};
pub use tensor::{Precision, Scalar, Tensor};
