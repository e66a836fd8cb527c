//! Architecture builders, parameter initialization, the training loop,
//! evaluation, the activation experiment matrix, and feature-map capture.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::data::{plan_batches, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{sparse_ce_loss, sparse_ce_sum, Layer, Model};
use crate::optim::{EarlyStopping, OptimizerConfig, StopDecision};
use crate::rng::{mix_seed, Rng};
use crate::tensor::{argmax_rows, Precision, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Fcnn,
    Cnn5,
    /// cnn5 topology with filters 4,4,8,8,8 and a 16-unit dense layer.
    Cnn5Small,
    Vgg16,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Fcnn, Arch::Cnn5, Arch::Cnn5Small, Arch::Vgg16];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Fcnn => "fcnn",
            Arch::Cnn5 => "cnn5",
            Arch::Cnn5Small => "cnn5-small",
            Arch::Vgg16 => "vgg16",
        }
    }

    pub fn default_optimizer(self) -> OptimizerConfig {
        match self {
            Arch::Vgg16 => OptimizerConfig::sgd_default(),
            _ => OptimizerConfig::adam_default(),
        }
    }

    pub fn default_epochs(self) -> usize {
        match self {
            Arch::Fcnn => 30,
            Arch::Cnn5 | Arch::Cnn5Small => 50,
            Arch::Vgg16 => 100,
        }
    }

    pub fn default_patience(self) -> Option<usize> {
        match self {
            Arch::Vgg16 => Some(5),
            _ => None,
        }
    }

    pub fn uses_conv_activation(self) -> bool {
        self != Arch::Fcnn
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let names: Vec<_> = Arch::ALL.iter().map(|a| a.name()).collect();
            Error::Config(format!(
                "unknown architecture {s:?}; expected one of {}",
                names.join(", ")
            ))
        })
    }
}

/// Everything needed to rebuild a model's layer stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub arch: Arch,
    pub conv_activation: ActivationKind,
    pub dense_activation: ActivationKind,
    pub class_count: usize,
    /// `[channels, height, width]`.
    pub input_shape: [usize; 3],
}

impl ArchSpec {
    pub const MNIST_INPUT: [usize; 3] = [1, 28, 28];
    pub const CIFAR_INPUT: [usize; 3] = [3, 32, 32];

    pub fn new(arch: Arch, conv: ActivationKind, dense: ActivationKind, class_count: usize) -> Self {
        let input_shape = match arch {
            Arch::Fcnn => Self::MNIST_INPUT,
            _ => Self::CIFAR_INPUT,
        };
        Self {
            arch,
            conv_activation: conv,
            dense_activation: dense,
            class_count,
            input_shape,
        }
    }

    pub fn with_input(mut self, input_shape: [usize; 3]) -> Self {
        self.input_shape = input_shape;
        self
    }

    /// Zero-initialized layer stack.
    pub fn build_uninit<T: Scalar>(&self) -> Result<Model<T>> {
        if self.class_count == 0 {
            return Err(Error::Config("class count must be at least 1".into()));
        }
        let (c, d, k, input) = (
            self.conv_activation,
            self.dense_activation,
            self.class_count,
            self.input_shape,
        );
        match self.arch {
            Arch::Fcnn => fcnn_model(input, d, k),
            Arch::Cnn5 => cnn5_model(input, Cnn5Widths::FULL, c, d, k),
            Arch::Cnn5Small => cnn5_model(input, Cnn5Widths::SMALL, c, d, k),
            Arch::Vgg16 => vgg16_model(input, c, d, k),
        }
    }

    pub fn build<T: Scalar>(&self, seed: u64) -> Result<Model<T>> {
        let mut model = self.build_uninit()?;
        init_parameters(&mut model, seed);
        Ok(model)
    }
}

fn fcnn_model<T: Scalar>(input: [usize; 3], act: ActivationKind, classes: usize) -> Result<Model<T>> {
    let pixels = input.iter().product();
    Model::new(
        input,
        vec![
            Layer::flatten(),
            Layer::dense(pixels, 300),
            Layer::activation(act),
            Layer::dense(300, 100),
            Layer::activation(act),
            Layer::dense(100, classes),
            Layer::softmax(),
        ],
    )
}

/// Flatten, 784→300→100→`class_count`, softmax head. Weights are zero until
/// [`init_parameters`] runs.
pub fn build_fcnn<T: Scalar>(dense_activation: ActivationKind, class_count: usize) -> Result<Model<T>> {
    fcnn_model(ArchSpec::MNIST_INPUT, dense_activation, class_count)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cnn5Widths {
    pub filters: [usize; 5],
    pub hidden: usize,
}

impl Cnn5Widths {
    pub const FULL: Cnn5Widths = Cnn5Widths {
        filters: [32, 32, 64, 64, 128],
        hidden: 256,
    };
    pub const SMALL: Cnn5Widths = Cnn5Widths {
        filters: [4, 4, 8, 8, 8],
        hidden: 16,
    };
}

fn cnn5_model<T: Scalar>(
    input: [usize; 3],
    widths: Cnn5Widths,
    conv: ActivationKind,
    dense: ActivationKind,
    classes: usize,
) -> Result<Model<T>> {
    let [f1, f2, f3, f4, f5] = widths.filters;
    let flat = f5 * (input[1] / 8) * (input[2] / 8);
    Model::new(
        input,
        vec![
            Layer::conv(input[0], f1, 3, 1, 1),
            Layer::activation(conv),
            Layer::conv(f1, f2, 3, 1, 1),
            Layer::activation(conv),
            Layer::max_pool(2, 2),
            Layer::conv(f2, f3, 3, 1, 1),
            Layer::activation(conv),
            Layer::conv(f3, f4, 3, 1, 1),
            Layer::activation(conv),
            Layer::max_pool(2, 2),
            Layer::conv(f4, f5, 3, 1, 1),
            Layer::activation(conv),
            Layer::max_pool(2, 2),
            Layer::flatten(),
            Layer::dense(flat, widths.hidden),
            Layer::activation(dense),
            Layer::dense(widths.hidden, classes),
            Layer::softmax(),
        ],
    )
}

pub fn build_cnn5<T: Scalar>(
    conv_activation: ActivationKind,
    dense_activation: ActivationKind,
    class_count: usize,
) -> Result<Model<T>> {
    cnn5_model(
        ArchSpec::CIFAR_INPUT,
        Cnn5Widths::FULL,
        conv_activation,
        dense_activation,
        class_count,
    )
}

/// Reduced-width cnn5 on an arbitrary input whose sides are multiples of 8.
pub fn build_cnn5_small<T: Scalar>(
    input_shape: [usize; 3],
    conv_activation: ActivationKind,
    dense_activation: ActivationKind,
    class_count: usize,
) -> Result<Model<T>> {
    cnn5_model(
        input_shape,
        Cnn5Widths::SMALL,
        conv_activation,
        dense_activation,
        class_count,
    )
}

const VGG16_BLOCKS: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];

fn vgg16_model<T: Scalar>(
    input: [usize; 3],
    conv: ActivationKind,
    dense: ActivationKind,
    classes: usize,
) -> Result<Model<T>> {
    let mut layers = Vec::new();
    let mut channels = input[0];
    for (width, count) in VGG16_BLOCKS {
        for _ in 0..count {
            layers.push(Layer::conv(channels, width, 3, 1, 1));
            layers.push(Layer::activation(conv));
            channels = width;
        }
        layers.push(Layer::max_pool(2, 2));
    }
    let flat = channels * (input[1] / 32) * (input[2] / 32);
    layers.extend([
        Layer::flatten(),
        Layer::dense(flat, 512),
        Layer::activation(dense),
        Layer::dense(512, 512),
        Layer::activation(dense),
        Layer::dense(512, classes),
        Layer::softmax(),
    ]);
    Model::new(input, layers)
}

/// 13 conv layers in five pooled blocks, then a 512-512-`class_count` head.
pub fn build_vgg16<T: Scalar>(activation: ActivationKind, class_count: usize) -> Result<Model<T>> {
    vgg16_model(ArchSpec::CIFAR_INPUT, activation, activation, class_count)
}

/// Initialization scheme chosen from the activation that follows a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    /// Uniform in `±sqrt(6 / fan_in)`.
    HeUniform,
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    GlorotUniform,
}

impl InitScheme {
    pub fn bound(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            InitScheme::HeUniform => (6.0 / fan_in as f64).sqrt(),
            InitScheme::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        }
    }
}

/// Scheme for the parameterized layer at `index`: Glorot when the next
/// nonlinearity is Tanh or the softmax head, He otherwise.
pub fn init_scheme_for<T: Scalar>(layers: &[Layer<T>], index: usize) -> InitScheme {
    for layer in &layers[index + 1..] {
        match layer {
            Layer::Activation(a) if a.kind == ActivationKind::Tanh => return InitScheme::GlorotUniform,
            Layer::Activation(_) => return InitScheme::HeUniform,
            Layer::Softmax(_) => return InitScheme::GlorotUniform,
            Layer::Dense(_) | Layer::Conv2d(_) => break,
            _ => {}
        }
    }
    InitScheme::HeUniform
}

/// Redraws every weight from one seeded stream in layer order; biases are
/// set to zero.
pub fn init_parameters<T: Scalar>(model: &mut Model<T>, seed: u64) {
    let mut rng = Rng::new(seed);
    let schemes: Vec<InitScheme> = (0..model.layers().len())
        .map(|i| init_scheme_for(model.layers(), i))
        .collect();
    for (i, layer) in model.layers_mut().iter_mut().enumerate() {
        let (fan_in, fan_out) = match layer {
            Layer::Dense(d) => (d.inputs(), d.outputs()),
            Layer::Conv2d(c) => {
                let (kh, kw) = c.kernel();
                (c.in_channels() * kh * kw, c.out_channels() * kh * kw)
            }
            _ => continue,
        };
        let bound = schemes[i].bound(fan_in, fan_out);
        let (w, b) = layer.params_mut().expect("dense and conv layers have parameters");
        for v in w.data_mut() {
            *v = T::from_f64_lossy(rng.uniform(-bound, bound));
        }
        b.data_mut().iter_mut().for_each(|v| *v = T::zero());
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Patience of the validation-loss monitor; `None` trains every epoch.
    pub early_stopping: Option<usize>,
    pub precision: Precision,
}

impl TrainConfig {
    pub fn for_arch(arch: Arch) -> Self {
        Self {
            optimizer: arch.default_optimizer(),
            epochs: arch.default_epochs(),
            batch_size: 64,
            seed: 42,
            early_stopping: arch.default_patience(),
            precision: Precision::Single,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be at least 1".into()));
        }
        if self.early_stopping == Some(0) {
            return Err(Error::Validation("early-stopping patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// One-based.
    pub epoch: usize,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub wall_time_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    EarlyStopped {
        epoch: usize,
    },
    /// Non-finite loss seen during `epoch` (one-based).
    Diverged {
        epoch: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub status: TrainStatus,
}

impl TrainOutcome {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.metrics.last()
    }
}

fn check_head<T: Scalar>(model: &Model<T>, ds: &LabeledDataset<T>) -> Result<()> {
    if model.output_shape() != [ds.class_count] {
        return Err(Error::Config(format!(
            "model head has shape {:?} but the dataset has {} classes",
            model.output_shape(),
            ds.class_count
        )));
    }
    if model.input_shape() != ds.sample_shape() {
        return Err(Error::dim("dataset", ds.sample_shape(), model.input_shape()));
    }
    Ok(())
}

/// Accuracy and mean cross-entropy over the whole dataset, visited in order.
pub fn evaluate<T: Scalar>(model: &mut Model<T>, ds: &LabeledDataset<T>, batch_size: usize) -> Result<(f64, f64)> {
    check_head(model, ds)?;
    if ds.is_empty() {
        return Err(Error::Validation("cannot evaluate on an empty dataset".into()));
    }
    let plan = plan_batches(ds.len(), batch_size, 0, false)?;
    let (mut correct, mut loss) = (0usize, 0.0);
    for idx in plan.batches() {
        let (x, labels) = ds.batch(idx);
        let probs = model.forward(x)?;
        correct += argmax_rows(&probs)?.iter().zip(&labels).filter(|(p, l)| p == l).count();
        loss += sparse_ce_sum(&probs, &labels)?;
    }
    model.clear_caches();
    let n = ds.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Mini-batch training with per-epoch evaluation on both sets.
///
/// Batch order for epoch `e` is drawn from `mix_seed(seed, e)`, so the
/// metrics are a pure function of the seed, config, data and initial model.
pub fn train_model<T: Scalar>(
    model: &mut Model<T>,
    train: &LabeledDataset<T>,
    test: &LabeledDataset<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_model_with(model, train, test, config, &mut |_| {})
}

/// [`train_model`] with a callback invoked after each completed epoch.
pub fn train_model_with<T: Scalar>(
    model: &mut Model<T>,
    train: &LabeledDataset<T>,
    test: &LabeledDataset<T>,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    check_head(model, train)?;
    check_head(model, test)?;
    let mut optimizer = config.optimizer.build::<T>()?;
    let mut stopper = config.early_stopping.map(EarlyStopping::new).transpose()?;
    let start = Instant::now();
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let plan = plan_batches(
            train.len(),
            config.batch_size,
            mix_seed(config.seed, epoch as u64),
            true,
        )?;
        for idx in plan.batches() {
            let (x, labels) = train.batch(idx);
            let probs = model.forward(x)?;
            if !sparse_ce_loss(&probs, &labels)?.is_finite() {
                model.clear_caches();
                return Ok(TrainOutcome {
                    metrics,
                    status: TrainStatus::Diverged { epoch },
                });
            }
            let grads = model.backward(&probs, &labels)?;
            optimizer.step_model(model, &grads)?;
        }
        let (train_accuracy, train_loss) = evaluate(model, train, config.batch_size)?;
        let (test_accuracy, test_loss) = evaluate(model, test, config.batch_size)?;
        if !train_loss.is_finite() || !test_loss.is_finite() {
            return Ok(TrainOutcome {
                metrics,
                status: TrainStatus::Diverged { epoch },
            });
        }
        metrics.push(EpochMetrics {
            epoch,
            train_accuracy,
            train_loss,
            test_accuracy,
            test_loss,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        });
        on_epoch(metrics.last().expect("just pushed"));
        if let Some(stopper) = stopper.as_mut() {
            match stopper.update(test_loss) {
                StopDecision::Continue => {}
                StopDecision::Stop => {
                    return Ok(TrainOutcome {
                        metrics,
                        status: TrainStatus::EarlyStopped { epoch },
                    })
                }
                StopDecision::Diverged => {
                    return Ok(TrainOutcome {
                        metrics,
                        status: TrainStatus::Diverged { epoch },
                    })
                }
            }
        }
    }
    Ok(TrainOutcome {
        metrics,
        status: TrainStatus::Completed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverfitReport {
    pub steps: usize,
    pub accuracy: f64,
    pub loss: f64,
}

/// Full-batch steps on a fixed batch until its accuracy reaches `target`
/// or `max_steps` is spent. Accuracy is measured on the forward pass that
/// precedes each step.
pub fn overfit_batch<T: Scalar>(
    model: &mut Model<T>,
    x: &Tensor<T>,
    labels: &[usize],
    optimizer: &OptimizerConfig,
    max_steps: usize,
    target: f64,
) -> Result<OverfitReport> {
    let mut opt = optimizer.build::<T>()?;
    let mut report = OverfitReport {
        steps: 0,
        accuracy: 0.0,
        loss: f64::INFINITY,
    };
    loop {
        let probs = model.forward(x.clone())?;
        let hits = argmax_rows(&probs)?.iter().zip(labels).filter(|(p, l)| p == l).count();
        report.accuracy = hits as f64 / labels.len().max(1) as f64;
        report.loss = sparse_ce_loss(&probs, labels)?;
        if report.accuracy >= target || report.steps == max_steps || !report.loss.is_finite() {
            model.clear_caches();
            return Ok(report);
        }
        let grads = model.backward(&probs, labels)?;
        opt.step_model(model, &grads)?;
        report.steps += 1;
    }
}

/// One row of the activation matrix: conv-layer kind and dense-layer kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationRow {
    pub conv: ActivationKind,
    pub dense: ActivationKind,
}

impl fmt::Display for ActivationRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.conv.name(), self.dense.name())
    }
}

impl FromStr for ActivationRow {
    type Err = Error;

    /// `conv:dense`, or a single name used for both groups.
    fn from_str(s: &str) -> Result<Self> {
        let (conv, dense) = s.split_once(':').unwrap_or((s, s));
        Ok(Self {
            conv: conv.trim().parse()?,
            dense: dense.trim().parse()?,
        })
    }
}

/// Comma-separated [`ActivationRow`]s.
pub fn parse_rows(spec: &str) -> Result<Vec<ActivationRow>> {
    let rows = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::Config("no activation rows given".into()));
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct MatrixRow<T> {
    pub row: ActivationRow,
    pub outcome: TrainOutcome,
    pub model: Model<T>,
}

/// Trains one model per row with the same seed and config. Rows are spread
/// over up to `threads` workers; results come back in row order.
pub fn run_experiment_matrix<T: Scalar>(
    base: &ArchSpec,
    train: &LabeledDataset<T>,
    test: &LabeledDataset<T>,
    rows: &[ActivationRow],
    config: &TrainConfig,
    threads: usize,
) -> Result<Vec<MatrixRow<T>>> {
    config.validate()?;
    let run_row = |row: ActivationRow| -> Result<MatrixRow<T>> {
        let spec = ArchSpec {
            conv_activation: row.conv,
            dense_activation: row.dense,
            ..base.clone()
        };
        let mut model = spec.build::<T>(config.seed)?;
        let outcome = train_model(&mut model, train, test, config)?;
        Ok(MatrixRow { row, outcome, model })
    };
    let threads = threads.clamp(1, rows.len().max(1));
    if threads == 1 {
        return rows.iter().map(|&r| run_row(r)).collect();
    }
    let mut results: Vec<Option<Result<MatrixRow<T>>>> = (0..rows.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let run_row = &run_row;
                scope.spawn(move || {
                    (w..rows.len())
                        .step_by(threads)
                        .map(|i| (i, run_row(rows[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("matrix worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every row ran")).collect()
}

/// Post-activation output of every convolution for a single image, as
/// `(conv layer index, [channels, h, w])`. A convolution without a following
/// activation contributes its raw output.
pub fn extract_feature_maps<T: Scalar>(model: &mut Model<T>, image: &Tensor<T>) -> Result<Vec<(usize, Tensor<T>)>> {
    let mut expected = vec![1];
    expected.extend_from_slice(model.input_shape());
    if image.shape() != expected.as_slice() {
        return Err(Error::dim("extract_feature_maps", image.shape(), &expected));
    }
    let mut maps = Vec::new();
    let mut a = image.clone();
    let layers = model.layers_mut();
    let mut pending: Option<usize> = None;
    for (i, layer) in layers.iter_mut().enumerate() {
        if let Some(conv) = pending.take() {
            let paired = matches!(layer, Layer::Activation(_));
            if !paired {
                maps.push((conv, drop_batch(&a)?));
            }
            a = layer.forward(a).map_err(|e| e.at_layer(i))?;
            if paired {
                maps.push((conv, drop_batch(&a)?));
            }
        } else {
            a = layer.forward(a).map_err(|e| e.at_layer(i))?;
        }
        if layer.is_conv() {
            pending = Some(i);
        }
    }
    if let Some(conv) = pending {
        maps.push((conv, drop_batch(&a)?));
    }
    model.clear_caches();
    Ok(maps)
}

fn drop_batch<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<T>> {
    t.clone().reshape(t.shape()[1..].to_vec())
}
