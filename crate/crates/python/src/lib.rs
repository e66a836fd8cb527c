//! Python bindings for the `swishnet` core crate.
//!
//! Models run in single precision. Images cross the boundary as flat lists
//! in `[n, c, h, w]` order.

#![allow(clippy::useless_conversion)]

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use swishnet::activations::{act_derivative, act_forward, ActivationParams};
use swishnet::bench::{bench_compare, BenchConfig};
use swishnet::data::{
    load_cifar100_dir, load_cifar10_dir, load_mnist_dir, make_synthetic_split, LabeledDataset, SyntheticSpec,
};
use swishnet::nn::{grad_check, GradCheckOptions};
use swishnet::optim::OptimizerConfig;
use swishnet::report::{decode_swnn, encode_swnn, load_params};
use swishnet::train::{evaluate, train_model, Arch, ArchSpec, TrainConfig, TrainStatus};
use swishnet::{ActivationKind, Error, Tensor};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn kind(name: &str) -> PyResult<ActivationKind> {
    name.parse().map_err(py_err)
}

fn arch(name: &str) -> PyResult<Arch> {
    name.parse().map_err(py_err)
}

/// Applies an activation elementwise in double precision.
#[pyfunction]
fn activate(name: &str, xs: Vec<f64>) -> PyResult<Vec<f64>> {
    let k = kind(name)?;
    let p = ActivationParams::default();
    Ok(xs.into_iter().map(|x| act_forward(k, x, &p)).collect())
}

#[pyfunction]
fn derivative(name: &str, xs: Vec<f64>) -> PyResult<Vec<f64>> {
    let k = kind(name)?;
    let p = ActivationParams::default();
    Ok(xs.into_iter().map(|x| act_derivative(k, x, &p)).collect())
}

#[pyfunction]
fn activation_names() -> Vec<&'static str> {
    ActivationKind::ALL.iter().map(|k| k.name()).collect()
}

/// A labeled image set held in single precision.
#[pyclass(name = "Dataset")]
#[derive(Clone)]
struct PyDataset {
    inner: LabeledDataset<f32>,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(images: Vec<f32>, shape: [usize; 4], labels: Vec<usize>, class_count: usize) -> PyResult<Self> {
        let images = Tensor::new(shape.to_vec(), images).map_err(py_err)?;
        let inner = LabeledDataset::new(images, labels, class_count).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    /// Returns a (train, test) pair of learnable synthetic data.
    #[staticmethod]
    #[pyo3(signature = (n, test_n, shape=[3, 32, 32], class_count=10, seed=42))]
    fn synthetic(n: usize, test_n: usize, shape: [usize; 3], class_count: usize, seed: u64) -> PyResult<(Self, Self)> {
        let spec = SyntheticSpec {
            n,
            shape,
            class_count,
            seed,
            separable: true,
        };
        let (train, test) = make_synthetic_split(&spec, test_n).map_err(py_err)?;
        Ok((PyDataset { inner: train }, PyDataset { inner: test }))
    }

    /// Loads (train, test) from a directory of IDX or CIFAR binary files.
    #[staticmethod]
    fn load(dataset: &str, dir: PathBuf) -> PyResult<(Self, Self)> {
        let (train, test) = match dataset {
            "mnist" => load_mnist_dir(&dir),
            "cifar10" => load_cifar10_dir(&dir),
            "cifar100" => load_cifar100_dir(&dir),
            other => return Err(PyValueError::new_err(format!("unknown dataset {other:?}"))),
        }
        .map_err(py_err)?;
        Ok((PyDataset { inner: train }, PyDataset { inner: test }))
    }

    fn head(&self, n: usize) -> Self {
        PyDataset {
            inner: self.inner.head(n),
        }
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.images.shape().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count
    }

    fn images(&self) -> Vec<f32> {
        self.inner.images.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(shape={:?}, classes={})",
            self.inner.images.shape(),
            self.inner.class_count
        )
    }
}

#[pyclass(name = "Model")]
struct PyModel {
    spec: ArchSpec,
    inner: swishnet::nn::Model<f32>,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (arch="fcnn", act="swishrelu", conv_act=None, dense_act=None, class_count=10, input_shape=None, seed=42))]
    fn new(
        arch: &str,
        act: &str,
        conv_act: Option<&str>,
        dense_act: Option<&str>,
        class_count: usize,
        input_shape: Option<[usize; 3]>,
        seed: u64,
    ) -> PyResult<Self> {
        let conv = kind(conv_act.unwrap_or(act))?;
        let dense = kind(dense_act.unwrap_or(act))?;
        let mut spec = ArchSpec::new(self::arch(arch)?, conv, dense, class_count);
        if let Some(shape) = input_shape {
            spec = spec.with_input(shape);
        }
        let inner = spec.build::<f32>(seed).map_err(py_err)?;
        Ok(PyModel { spec, inner })
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    #[getter]
    fn conv_count(&self) -> usize {
        self.inner.conv_count()
    }

    #[getter]
    fn dense_count(&self) -> usize {
        self.inner.dense_count()
    }

    #[getter]
    fn input_shape(&self) -> Vec<usize> {
        self.inner.input_shape().to_vec()
    }

    /// Softmax probabilities for a flat `[n, c, h, w]` batch, one row per image.
    fn predict(&mut self, images: Vec<f32>, n: usize) -> PyResult<Vec<Vec<f32>>> {
        let mut shape = vec![n];
        shape.extend_from_slice(self.inner.input_shape());
        let x = Tensor::new(shape, images).map_err(py_err)?;
        let probs = self.inner.forward(x).map_err(py_err)?;
        self.inner.clear_caches();
        let k = probs.shape()[1];
        Ok(probs.data().chunks(k).map(<[f32]>::to_vec).collect())
    }

    /// Returns (accuracy, mean cross-entropy).
    #[pyo3(signature = (data, batch_size=64))]
    fn evaluate(&mut self, data: &PyDataset, batch_size: usize) -> PyResult<(f64, f64)> {
        evaluate(&mut self.inner, &data.inner, batch_size).map_err(py_err)
    }

    /// Trains in place and returns per-epoch metrics as dicts plus the
    /// final status ("completed", "early_stopped" or "diverged").
    #[pyo3(signature = (train, test, epochs=None, batch_size=64, seed=42, optimizer=None, learning_rate=None, patience=None))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        train: &PyDataset,
        test: &PyDataset,
        epochs: Option<usize>,
        batch_size: usize,
        seed: u64,
        optimizer: Option<&str>,
        learning_rate: Option<f64>,
        patience: Option<usize>,
    ) -> PyResult<(Vec<Bound<'py, PyDict>>, String)> {
        let mut config = TrainConfig::for_arch(self.spec.arch);
        config.batch_size = batch_size;
        config.seed = seed;
        if let Some(e) = epochs {
            config.epochs = e;
        }
        if patience.is_some() {
            config.early_stopping = patience;
        }
        config.optimizer = match optimizer {
            None => config.optimizer,
            Some("adam") => OptimizerConfig::adam_default(),
            Some("sgd") => OptimizerConfig::sgd_default(),
            Some(other) => return Err(PyValueError::new_err(format!("unknown optimizer {other:?}"))),
        };
        if let Some(lr) = learning_rate {
            match &mut config.optimizer {
                OptimizerConfig::Adam { learning_rate, .. } | OptimizerConfig::SgdMomentum { learning_rate, .. } => {
                    *learning_rate = lr
                }
            }
        }
        let model = &mut self.inner;
        let outcome = py
            .allow_threads(|| train_model(model, &train.inner, &test.inner, &config))
            .map_err(py_err)?;
        let rows = outcome
            .metrics
            .iter()
            .map(|m| {
                let d = PyDict::new_bound(py);
                d.set_item("epoch", m.epoch)?;
                d.set_item("train_accuracy", m.train_accuracy)?;
                d.set_item("train_loss", m.train_loss)?;
                d.set_item("test_accuracy", m.test_accuracy)?;
                d.set_item("test_loss", m.test_loss)?;
                d.set_item("wall_time_seconds", m.wall_time_seconds)?;
                Ok(d)
            })
            .collect::<PyResult<Vec<_>>>()?;
        let status = match outcome.status {
            TrainStatus::Completed => "completed",
            TrainStatus::EarlyStopped { .. } => "early_stopped",
            TrainStatus::Diverged { .. } => "diverged",
        };
        Ok((rows, status.to_string()))
    }

    /// Writes parameters in the SWNN container format.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::write(&path, encode_swnn(&self.inner))
            .map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))
    }

    /// Replaces parameters with those in an SWNN file of matching layout.
    fn load(&mut self, path: PathBuf) -> PyResult<()> {
        let bytes = std::fs::read(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        let tensors = decode_swnn::<f32>(&bytes).map_err(py_err)?;
        load_params(&mut self.inner, tensors).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(arch={}, conv={}, dense={}, params={})",
            self.spec.arch.name(),
            self.spec.conv_activation.name(),
            self.spec.dense_activation.name(),
            self.inner.param_count()
        )
    }
}

/// Finite-difference gradient check in double precision on a small random
/// batch. Returns (passed, largest relative error).
#[pyfunction]
#[pyo3(signature = (arch="fcnn", act="swishrelu", seed=42, tol=1e-4, max_entries=None))]
fn gradcheck(arch: &str, act: &str, seed: u64, tol: f64, max_entries: Option<usize>) -> PyResult<(bool, f64)> {
    let a = self::arch(arch)?;
    let k = kind(act)?;
    let spec = ArchSpec::new(a, k, k, 10);
    let mut model = spec.build::<f64>(seed).map_err(py_err)?;
    let batch = swishnet::data::make_synthetic::<f64>(&SyntheticSpec {
        n: 2,
        shape: spec.input_shape,
        class_count: 10,
        seed,
        separable: false,
    })
    .map_err(py_err)?;
    let opts = GradCheckOptions {
        tol,
        max_entries: max_entries.unwrap_or(if a == Arch::Vgg16 { 2 } else { 200 }),
        seed,
        ..GradCheckOptions::default()
    };
    let report = grad_check(&mut model, &batch.images, &batch.labels, &opts).map_err(py_err)?;
    let worst = report.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok((report.passed, worst))
}

/// Times activation kernels; returns one dict per requested kind.
#[pyfunction]
#[pyo3(name = "bench", signature = (kinds, elements=10_000_000, reps=9, sign_mix=0.5, seed=42))]
fn bench_kernels<'py>(
    py: Python<'py>,
    kinds: Vec<String>,
    elements: usize,
    reps: usize,
    sign_mix: f64,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let kinds = kinds.iter().map(|k| kind(k)).collect::<PyResult<Vec<_>>>()?;
    let config = BenchConfig {
        elements,
        sign_mix,
        reps,
        seed,
    };
    let report = py.allow_threads(|| bench_compare(&kinds, &config)).map_err(py_err)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new_bound(py);
            d.set_item("kind", r.result.kind.name())?;
            d.set_item("ns_per_element", r.result.ns_per_element)?;
            d.set_item("throughput_gelem_s", r.result.throughput_gelem_s)?;
            d.set_item("ratio_vs_relu", r.ratio_vs_relu)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn swishnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(activate, m)?)?;
    m.add_function(wrap_pyfunction!(derivative, m)?)?;
    m.add_function(wrap_pyfunction!(activation_names, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(bench_kernels, m)?)?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}
