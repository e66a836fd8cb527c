//! Forward and derivative kernels for the six compared activations.
//!
//! SwishReLU is `x * sigmoid(x)` for negative inputs and the identity for
//! `x >= 0`. Its derivative jumps from 0.5 to 1 at the origin; the identity
//! branch owns `x = 0`, so `f'(0) = 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Elu,
    Selu,
    Tanh,
    Swish,
    SwishRelu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 6] = [
        ActivationKind::Relu,
        ActivationKind::Elu,
        ActivationKind::Selu,
        ActivationKind::Tanh,
        ActivationKind::Swish,
        ActivationKind::SwishRelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Elu => "elu",
            ActivationKind::Selu => "selu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Swish => "swish",
            ActivationKind::SwishRelu => "swishrelu",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ActivationKind::Relu => "ReLU",
            ActivationKind::Elu => "ELU",
            ActivationKind::Selu => "SeLU",
            ActivationKind::Tanh => "Tanh",
            ActivationKind::Swish => "Swish",
            ActivationKind::SwishRelu => "SwishReLU",
        }
    }

    /// True when the derivative may be discontinuous at zero, so finite
    /// differences straddling the origin are not trustworthy.
    pub fn has_kink(self) -> bool {
        matches!(
            self,
            ActivationKind::Relu | ActivationKind::Elu | ActivationKind::Selu | ActivationKind::SwishRelu
        )
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
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
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::Validation(format!("unknown activation '{s}' (valid: {})", Self::valid_names())))
    }
}

/// Constants for ELU and SeLU.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationParams {
    pub elu_alpha: f64,
    pub selu_alpha: f64,
    pub selu_lambda: f64,
}

impl Default for ActivationParams {
    fn default() -> Self {
        Self {
            elu_alpha: 1.0,
            selu_alpha: 1.67326324,
            selu_lambda: 1.05070098,
        }
    }
}

impl ActivationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("elu_alpha", self.elu_alpha),
            ("selu_alpha", self.selu_alpha),
            ("selu_lambda", self.selu_lambda),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Logistic sigmoid, evaluated on the branch that cannot overflow.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn swish<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
fn swish_derivative<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

pub fn act_forward<T: Scalar>(kind: ActivationKind, x: T, params: &ActivationParams) -> T {
    let zero = T::zero();
    match kind {
        ActivationKind::Relu => {
            if x <= zero {
                zero
            } else {
                x
            }
        }
        ActivationKind::Elu => {
            if x > zero {
                x
            } else {
                T::from_f64_lossy(params.elu_alpha) * x.exp_m1()
            }
        }
        ActivationKind::Selu => {
            let lambda = T::from_f64_lossy(params.selu_lambda);
            if x > zero {
                lambda * x
            } else {
                lambda * T::from_f64_lossy(params.selu_alpha) * x.exp_m1()
            }
        }
        ActivationKind::Tanh => x.tanh(),
        ActivationKind::Swish => swish(x),
        ActivationKind::SwishRelu => {
            if x < zero {
                swish(x)
            } else {
                x
            }
        }
    }
}

pub fn act_derivative<T: Scalar>(kind: ActivationKind, x: T, params: &ActivationParams) -> T {
    let zero = T::zero();
    let one = T::one();
    match kind {
        ActivationKind::Relu => {
            if x > zero {
                one
            } else {
                zero
            }
        }
        ActivationKind::Elu => {
            if x > zero {
                one
            } else {
                T::from_f64_lossy(params.elu_alpha) * x.exp()
            }
        }
        ActivationKind::Selu => {
            let lambda = T::from_f64_lossy(params.selu_lambda);
            if x > zero {
                lambda
            } else {
                lambda * T::from_f64_lossy(params.selu_alpha) * x.exp()
            }
        }
        ActivationKind::Tanh => {
            let t = x.tanh();
            one - t * t
        }
        ActivationKind::Swish => swish_derivative(x),
        ActivationKind::SwishRelu => {
            if x < zero {
                swish_derivative(x)
            } else {
                one
            }
        }
    }
}

const CHUNK: usize = 8;

/// Slice kernel behind [`act_forward_tensor`] and the activation layer.
///
/// SwishReLU copies whole chunks that are entirely non-negative, so runs of
/// identity-branch inputs never touch the exponential.
pub fn forward_slice<T: Scalar>(kind: ActivationKind, input: &[T], output: &mut [T], params: &ActivationParams) {
    assert_eq!(input.len(), output.len(), "forward_slice: length mismatch");
    match kind {
        ActivationKind::Relu => {
            for (o, &x) in output.iter_mut().zip(input) {
                *o = if x <= T::zero() { T::zero() } else { x };
            }
        }
        ActivationKind::SwishRelu => {
            let mut ins = input.chunks_exact(CHUNK);
            let mut outs = output.chunks_exact_mut(CHUNK);
            for (i, o) in (&mut ins).zip(&mut outs) {
                if i.iter().all(|&x| x >= T::zero()) {
                    o.copy_from_slice(i);
                } else {
                    for (o, &x) in o.iter_mut().zip(i) {
                        *o = if x < T::zero() { swish(x) } else { x };
                    }
                }
            }
            for (o, &x) in outs.into_remainder().iter_mut().zip(ins.remainder()) {
                *o = if x < T::zero() { swish(x) } else { x };
            }
        }
        _ => {
            for (o, &x) in output.iter_mut().zip(input) {
                *o = act_forward(kind, x, params);
            }
        }
    }
}

/// Elementwise activation; shape is preserved.
pub fn act_forward_tensor<T: Scalar>(kind: ActivationKind, t: &Tensor<T>, params: &ActivationParams) -> Tensor<T> {
    let mut out = Tensor::zeros(t.shape().to_vec());
    forward_slice(kind, t.data(), out.data_mut(), params);
    out
}

/// Minimizer of `x * sigmoid(x)` and its value.
///
/// The stationary condition is `1 + x (1 - sigmoid(x)) = 0`; Newton steps on
/// it are safeguarded by a bracket on `[-5, 0]`.
pub fn swish_global_min() -> (f64, f64) {
    let stationary = |x: f64| 1.0 + x * (1.0 - sigmoid(x));
    let slope = |x: f64| {
        let s = sigmoid(x);
        (1.0 - s) - x * s * (1.0 - s)
    };
    let (mut lo, mut hi) = (-5.0f64, 0.0f64);
    let mut x = -1.0;
    for _ in 0..200 {
        let g = stationary(x);
        if g.abs() < 1e-15 {
            break;
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = x - g / slope(x);
        x = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-16 {
            break;
        }
    }
    (x, swish(x))
}
