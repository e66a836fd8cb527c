//! Central-difference gradient checking of a whole model.
//!
//! Each checked parameter entry is nudged by `±h`; the loss difference over
//! `2h` is compared with the analytic gradient. When the nudge moves any
//! kinked activation input across zero, or changes which element a max-pool
//! window selects, the finite difference straddles a non-differentiable
//! point. Those entries are counted per layer and, with the kink guard on,
//! left out of the pass/fail decision.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::Result;
use crate::nn::layer::Layer;
use crate::nn::loss::sparse_ce_loss;
use crate::nn::model::{Model, ParamKey};
use crate::rng::{mix_seed, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tol: f64,
    /// Entries checked per parameter tensor; larger tensors are sampled.
    pub max_entries: usize,
    pub seed: u64,
    pub kink_guard: bool,
    /// Denominator floor of the relative error.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            max_entries: 200,
            seed: 0,
            kink_guard: true,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub key: ParamKey,
    pub shape: Vec<usize>,
    pub checked: usize,
    pub kink_skipped: usize,
    pub max_rel_error: f64,
    /// `(flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, f64, f64)>,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    /// Layer index to the number of perturbations that crossed a kink there.
    pub kink_crossings: BTreeMap<usize, usize>,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tensors {
            writeln!(
                f,
                "{:<16} {:>22} checked {:>4} kink-skipped {:>3} max rel err {:.3e} {}",
                t.key.to_string(),
                format!("{:?}", t.shape),
                t.checked,
                t.kink_skipped,
                t.max_rel_error,
                if t.passed { "ok" } else { "FAIL" }
            )?;
        }
        for (layer, n) in &self.kink_crossings {
            writeln!(f, "kink crossings at layer {layer}: {n}")?;
        }
        write!(f, "{} (tol {:e})", if self.passed { "PASS" } else { "FAIL" }, self.tol)
    }
}

/// Branch pattern of every kinked layer for the cached forward.
#[derive(PartialEq)]
enum Pattern {
    Signs(Vec<i8>),
    Argmax(Vec<usize>),
}

fn kink_patterns(model: &Model<f64>) -> Vec<(usize, Pattern)> {
    model
        .layers()
        .iter()
        .enumerate()
        .filter_map(|(i, layer)| match layer {
            Layer::Activation(a) if a.kind.has_kink() => a.cached_input().map(|z| {
                let signs = z.data().iter().map(|&v| (v > 0.0) as i8 - (v < 0.0) as i8).collect();
                (i, Pattern::Signs(signs))
            }),
            Layer::MaxPool2d(p) => p.cached_argmax().map(|a| (i, Pattern::Argmax(a.to_vec()))),
            _ => None,
        })
        .collect()
}

fn first_change(base: &[(usize, Pattern)], other: &[(usize, Pattern)]) -> Option<usize> {
    base.iter()
        .zip(other)
        .find(|((_, a), (_, b))| a != b)
        .map(|((i, _), _)| *i)
}

fn loss_at(model: &mut Model<f64>, x: &Tensor<f64>, labels: &[usize]) -> Result<f64> {
    let probs = model.forward(x.clone())?;
    sparse_ce_loss(&probs, labels)
}

/// Compares analytic and central-difference gradients for every parameter
/// tensor of a double-precision model.
pub fn grad_check(
    model: &mut Model<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let probs = model.forward(x.clone())?;
    let grads = model.backward(&probs, labels)?;
    let baseline = kink_patterns(model);

    let keys: Vec<(ParamKey, usize)> = model.params().iter().map(|(k, t)| (*k, t.len())).collect();
    let mut tensors = Vec::with_capacity(keys.len());
    let mut kink_crossings = BTreeMap::new();

    for (key, len) in keys {
        let analytic = grads.get(key).expect("gradient for every parameter");
        let entries = if len <= opts.max_entries {
            (0..len).collect()
        } else {
            Rng::new(mix_seed(opts.seed, (key.layer as u64) << 1 | key.name as u64))
                .sample_indices(len, opts.max_entries)
        };
        let mut check = TensorCheck {
            key,
            shape: analytic.shape().to_vec(),
            checked: 0,
            kink_skipped: 0,
            max_rel_error: 0.0,
            worst: None,
            passed: true,
        };
        for idx in entries {
            let original = model.param_mut(key).expect("param").data()[idx];

            model.param_mut(key).expect("param").data_mut()[idx] = original + opts.h;
            let plus = loss_at(model, x, labels)?;
            let crossed_plus = first_change(&baseline, &kink_patterns(model));

            model.param_mut(key).expect("param").data_mut()[idx] = original - opts.h;
            let minus = loss_at(model, x, labels)?;
            let crossed_minus = first_change(&baseline, &kink_patterns(model));

            model.param_mut(key).expect("param").data_mut()[idx] = original;

            if let Some(layer) = crossed_plus.or(crossed_minus) {
                *kink_crossings.entry(layer).or_insert(0) += 1;
                if opts.kink_guard {
                    check.kink_skipped += 1;
                    continue;
                }
            }
            let numeric = (plus - minus) / (2.0 * opts.h);
            let a = analytic.data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.abs_floor);
            check.checked += 1;
            if rel >= check.max_rel_error {
                check.max_rel_error = rel;
                check.worst = Some((idx, a, numeric));
            }
        }
        check.passed = check.max_rel_error <= opts.tol && check.max_rel_error.is_finite();
        tensors.push(check);
    }
    // leave caches consistent with the unperturbed parameters
    model.forward(x.clone())?;

    let passed = tensors.iter().all(|t| t.passed);
    Ok(GradCheckReport {
        tensors,
        kink_crossings,
        tol: opts.tol,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;
    use crate::nn::layer::Dense;

    fn relu_net(shift: f64) -> (Model<f64>, Tensor<f64>) {
        let mut rng = Rng::new(5);
        let mut d1 = Dense::<f64>::new(3, 4);
        // positive weights and inputs keep every pre-activation well above 0
        d1.weight = Tensor::new([3, 4], (0..12).map(|_| rng.uniform(0.1, 1.0)).collect()).unwrap();
        let mut d2 = Dense::<f64>::new(4, 3);
        d2.weight = Tensor::new([4, 3], (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let model = Model::new(
            [3],
            vec![
                Layer::Dense(d1),
                Layer::activation(ActivationKind::Relu),
                Layer::Dense(d2),
                Layer::softmax(),
            ],
        )
        .unwrap();
        let x = Tensor::new([4, 3], (0..12).map(|_| rng.uniform(-1.0, 1.0) + shift).collect()).unwrap();
        (model, x)
    }

    #[test]
    fn shifted_relu_passes_without_guard() {
        let (mut model, x) = relu_net(2.0);
        let opts = GradCheckOptions {
            kink_guard: false,
            ..Default::default()
        };
        let report = grad_check(&mut model, &x, &[0, 1, 2, 0], &opts).unwrap();
        assert!(report.passed, "{report}");
        assert!(report.kink_crossings.is_empty());
    }

    #[test]
    fn kink_crossing_is_attributed_to_its_layer() {
        // zero input row makes the first-layer pre-activations equal the
        // biases (0), so every bias nudge crosses the ReLU kink
        let (mut model, _) = relu_net(0.0);
        let x = Tensor::zeros([2, 3]);
        let opts = GradCheckOptions {
            kink_guard: false,
            ..Default::default()
        };
        let report = grad_check(&mut model, &x, &[0, 1], &opts).unwrap();
        assert!(report.kink_crossings.contains_key(&1), "{report}");
        let bias = report.tensors.iter().find(|t| t.key == ParamKey::bias(0)).unwrap();
        assert!(!bias.passed, "{report}");

        let guarded = grad_check(&mut model, &x, &[0, 1], &GradCheckOptions::default()).unwrap();
        assert!(guarded.passed, "{guarded}");
        assert!(guarded.tensors.iter().any(|t| t.kink_skipped > 0));
    }

    #[test]
    fn zero_tolerance_fails() {
        let (mut model, x) = relu_net(2.0);
        let opts = GradCheckOptions {
            tol: 0.0,
            ..Default::default()
        };
        let report = grad_check(&mut model, &x, &[0, 1, 2, 0], &opts).unwrap();
        assert!(!report.passed);
        assert!(report.worst().unwrap().max_rel_error > 0.0);
    }
}
