//! Layers, loss, model passes and gradient checking.

pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod model;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, TensorCheck};
pub use layer::{Activation, Conv2d, Dense, Flatten, Layer, LayerGrads, MaxPool2d, Softmax};
pub use loss::{softmax_ce_backward, softmax_forward, sparse_ce_loss, sparse_ce_sum, PROB_FLOOR};
pub use model::{GradientSet, Model, ParamKey, ParamName};
