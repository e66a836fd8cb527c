use std::fmt;

use crate::error::{Error, Result};
use crate::nn::layer::Layer;
use crate::nn::loss::softmax_ce_backward;
use crate::tensor::{Precision, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamName {
    Weight,
    Bias,
}

impl ParamName {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Weight => "weight",
            ParamName::Bias => "bias",
        }
    }
}

/// Identifies one parameter tensor: layer index plus weight/bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamKey {
    pub layer: usize,
    pub name: ParamName,
}

impl ParamKey {
    pub fn weight(layer: usize) -> Self {
        Self {
            layer,
            name: ParamName::Weight,
        }
    }

    pub fn bias(layer: usize) -> Self {
        Self {
            layer,
            name: ParamName::Bias,
        }
    }
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer{}.{}", self.layer, self.name.as_str())
    }
}

impl std::str::FromStr for ParamKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad parameter name '{s}'"));
        let rest = s.strip_prefix("layer").ok_or_else(bad)?;
        let (idx, name) = rest.split_once('.').ok_or_else(bad)?;
        let layer = idx.parse().map_err(|_| bad())?;
        let name = match name {
            "weight" => ParamName::Weight,
            "bias" => ParamName::Bias,
            _ => return Err(bad()),
        };
        Ok(Self { layer, name })
    }
}

/// Gradients for every parameter tensor, ordered by [`ParamKey`].
#[derive(Clone, Debug, Default)]
pub struct GradientSet<T> {
    entries: Vec<(ParamKey, Tensor<T>)>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn from_entries(mut entries: Vec<(ParamKey, Tensor<T>)>) -> Self {
        entries.sort_by_key(|(k, _)| *k);
        Self { entries }
    }

    pub fn get(&self, key: ParamKey) -> Option<&Tensor<T>> {
        self.entries
            .binary_search_by_key(&key, |(k, _)| *k)
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamKey, &Tensor<T>)> {
        self.entries.iter().map(|(k, t)| (*k, t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    pub fn all_zero(&self) -> bool {
        self.entries
            .iter()
            .all(|(_, t)| t.data().iter().all(|v| *v == T::zero()))
    }
}

/// Ordered layer stack with a declared per-sample input shape.
#[derive(Clone, Debug)]
pub struct Model<T> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Model<T> {
    /// Validates that every adjacent layer pair conforms, starting from
    /// `input_shape` (per sample, without the batch axis).
    pub fn new(input_shape: impl Into<Vec<usize>>, layers: Vec<Layer<T>>) -> Result<Self> {
        let input_shape = input_shape.into();
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|e| e.at_layer(i))?;
        }
        Ok(Self { input_shape, layers })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> Vec<usize> {
        self.layers.iter().fold(self.input_shape.clone(), |s, l| {
            l.output_shape(&s).expect("validated at construction")
        })
    }

    /// Per-sample input shape of layer `index`.
    pub fn shape_before(&self, index: usize) -> Vec<usize> {
        self.layers[..index].iter().fold(self.input_shape.clone(), |s, l| {
            l.output_shape(&s).expect("validated at construction")
        })
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<(ParamKey, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some((w, b)) = layer.params() {
                out.push((ParamKey::weight(i), w));
                out.push((ParamKey::bias(i), b));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(ParamKey, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Some((w, b)) = layer.params_mut() {
                out.push((ParamKey::weight(i), w));
                out.push((ParamKey::bias(i), b));
            }
        }
        out
    }

    pub fn param_mut(&mut self, key: ParamKey) -> Option<&mut Tensor<T>> {
        let (w, b) = self.layers.get_mut(key.layer)?.params_mut()?;
        Some(match key.name {
            ParamName::Weight => w,
            ParamName::Bias => b,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn conv_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_conv()).count()
    }

    pub fn dense_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_dense()).count()
    }

    pub fn clear_caches(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    /// Applies every layer in order to a `[batch, ...input_shape]` tensor.
    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            let mut expected = vec![x.shape()[0]];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::dim("model_forward", x.shape(), &expected));
        }
        self.layers
            .iter_mut()
            .enumerate()
            .try_fold(x, |a, (i, layer)| layer.forward(a).map_err(|e| e.at_layer(i)))
    }

    /// Reverse pass from the fused softmax + cross-entropy gradient.
    ///
    /// `probs` must be the output of the most recent forward.
    pub fn backward(&mut self, probs: &Tensor<T>, labels: &[usize]) -> Result<GradientSet<T>> {
        let last = self
            .layers
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::State("model_backward on a model without layers".into()))?;
        match &self.layers[last] {
            Layer::Softmax(s) => match s.cached_output() {
                Some(cached) if cached == probs => {}
                Some(_) => {
                    return Err(Error::State(
                        "probabilities do not match the cached forward output".into(),
                    ))
                }
                None => return Err(Error::State("model_backward before any forward".into())),
            },
            _ => return Err(Error::Config("model_backward requires a final Softmax layer".into())),
        }
        let mut grad = softmax_ce_backward(probs, labels)?;
        let mut entries = Vec::new();
        for i in (0..last).rev() {
            let lg = self.layers[i].backward(&grad).map_err(|e| e.at_layer(i))?;
            if let Some((dw, db)) = lg.params {
                entries.push((ParamKey::weight(i), dw));
                entries.push((ParamKey::bias(i), db));
            }
            grad = lg.grad_input;
        }
        Ok(GradientSet::from_entries(entries))
    }
}

impl<T: Scalar> fmt::Display for Model<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input {:?}", self.input_shape)?;
        for (i, l) in self.layers.iter().enumerate() {
            writeln!(f, "  [{i:2}] {l}")?;
        }
        write!(f, "parameters: {}", self.param_count())
    }
}
