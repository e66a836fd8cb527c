//! Dataset loaders for the MNIST IDX and CIFAR binary formats, synthetic
//! fixtures, and seeded batch planning.
//!
//! Pixels are scaled by `1/255` and nothing else. Paths ending in `.gz` are
//! decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

pub const MNIST_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const MNIST_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR10_RECORD: usize = 1 + 3072;
pub const CIFAR100_RECORD: usize = 2 + 3072;

/// Images `[n, channels, height, width]` with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(images: Tensor<T>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::dim("LabeledDataset", images.shape(), &[0, 0, 0, 0]));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Validation(format!("label {bad} outside [0, {class_count})")));
        }
        Ok(Self {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[channels, height, width]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// Gathers the listed samples into a batch tensor and label list.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let stride = self.images.stride0();
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * stride..(i + 1) * stride]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        let images = Tensor::new(shape, data).expect("gathered batch has consistent length");
        (images, indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let (images, labels) = self.batch(indices);
        Self {
            images,
            labels,
            class_count: self.class_count,
        }
    }

    /// First `n` samples (or all, if fewer).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

/// Reads a file, gunzipping when the name ends in `.gz`.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

fn scale<T: Scalar>(b: u8) -> T {
    T::from_u8(b).expect("u8 fits") / T::from_u8(255).expect("u8 fits")
}

/// Parses in-memory IDX image and label files.
pub fn parse_mnist_idx<T: Scalar>(images: &[u8], labels: &[u8]) -> Result<LabeledDataset<T>> {
    let magic = be_u32(images, 0, "IDX images")?;
    if magic != MNIST_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "IDX images: expected magic 0x{MNIST_IMAGES_MAGIC:08x}, found bytes {:02x?}",
            &images[..4]
        )));
    }
    let count = be_u32(images, 4, "IDX images")? as usize;
    let rows = be_u32(images, 8, "IDX images")? as usize;
    let cols = be_u32(images, 12, "IDX images")? as usize;
    let pixels = &images[16..];
    let expected = count * rows * cols;
    if pixels.len() != expected {
        return Err(Error::Format(format!(
            "IDX images: header declares {count}x{rows}x{cols} = {expected} pixel bytes, file has {}",
            pixels.len()
        )));
    }

    let magic = be_u32(labels, 0, "IDX labels")?;
    if magic != MNIST_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "IDX labels: expected magic 0x{MNIST_LABELS_MAGIC:08x}, found bytes {:02x?}",
            &labels[..4]
        )));
    }
    let label_count = be_u32(labels, 4, "IDX labels")? as usize;
    let label_bytes = &labels[8..];
    if label_bytes.len() != label_count {
        return Err(Error::Format(format!(
            "IDX labels: header declares {label_count} labels, file has {}",
            label_bytes.len()
        )));
    }
    if label_count != count {
        return Err(Error::Consistency(format!("{count} images but {label_count} labels")));
    }

    let data = pixels.iter().map(|&b| scale::<T>(b)).collect();
    let images = Tensor::new([count, 1, rows, cols], data)?;
    LabeledDataset::new(images, label_bytes.iter().map(|&b| b as usize).collect(), 10)
}

pub fn load_mnist_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset<T>> {
    let images = read_bytes(images_path)?;
    let labels = read_bytes(labels_path)?;
    parse_mnist_idx(&images, &labels)
}

/// CIFAR record layout: label byte count before the 3072 pixel bytes, the
/// index of the label byte used, and the class count.
#[derive(Clone, Copy, Debug)]
struct CifarLayout {
    label_bytes: usize,
    label_at: usize,
    classes: usize,
}

const CIFAR10: CifarLayout = CifarLayout {
    label_bytes: 1,
    label_at: 0,
    classes: 10,
};

/// Fine label, the second byte.
const CIFAR100: CifarLayout = CifarLayout {
    label_bytes: 2,
    label_at: 1,
    classes: 100,
};

fn parse_cifar<T: Scalar>(files: &[&[u8]], layout: CifarLayout) -> Result<LabeledDataset<T>> {
    let record = layout.label_bytes + 3072;
    for (i, bytes) in files.iter().enumerate() {
        if bytes.len() % record != 0 {
            return Err(Error::Format(format!(
                "CIFAR file #{i}: length {} is not a multiple of {record}",
                bytes.len()
            )));
        }
    }
    let n: usize = files.iter().map(|b| b.len() / record).sum();
    let mut data = Vec::with_capacity(n * 3072);
    let mut labels = Vec::with_capacity(n);
    for bytes in files {
        for rec in bytes.chunks_exact(record) {
            labels.push(rec[layout.label_at] as usize);
            data.extend(rec[layout.label_bytes..].iter().map(|&b| scale::<T>(b)));
        }
    }
    let images = Tensor::new([n, 3, 32, 32], data)?;
    LabeledDataset::new(images, labels, layout.classes)
}

pub fn parse_cifar10<T: Scalar>(files: &[&[u8]]) -> Result<LabeledDataset<T>> {
    parse_cifar(files, CIFAR10)
}

pub fn parse_cifar100<T: Scalar>(files: &[&[u8]]) -> Result<LabeledDataset<T>> {
    parse_cifar(files, CIFAR100)
}

fn load_cifar<T: Scalar, P: AsRef<Path>>(paths: &[P], layout: CifarLayout) -> Result<LabeledDataset<T>> {
    let blobs = paths
        .iter()
        .map(|p| read_bytes(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<&[u8]> = blobs.iter().map(Vec::as_slice).collect();
    parse_cifar(&views, layout)
}

/// Concatenates CIFAR-10 binary batches in the given order.
pub fn load_cifar10_bin<T: Scalar, P: AsRef<Path>>(paths: &[P]) -> Result<LabeledDataset<T>> {
    load_cifar(paths, CIFAR10)
}

pub fn load_cifar100_bin<T: Scalar, P: AsRef<Path>>(paths: &[P]) -> Result<LabeledDataset<T>> {
    load_cifar(paths, CIFAR100)
}

fn find_file(dir: &Path, names: &[&str]) -> Result<std::path::PathBuf> {
    for name in names {
        for candidate in [dir.join(name), dir.join(format!("{name}.gz"))] {
            if candidate.is_file() {
                return Ok(candidate);
            }
        }
    }
    Err(Error::io(
        dir.join(names[0]),
        std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
    ))
}

/// First of `dir` and `dir/sub` that exists as a directory containing `probe`.
fn resolve_dir(dir: &Path, sub: &str, probe: &str) -> std::path::PathBuf {
    let nested = dir.join(sub);
    if !dir.join(probe).exists() && !dir.join(format!("{probe}.gz")).exists() && nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

/// `(train, test)` from the four standard IDX files, optionally gzipped.
pub fn load_mnist_dir<T: Scalar>(dir: &Path) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    let f = |names: &[&str]| find_file(dir, names);
    let train = load_mnist_idx(
        &f(&["train-images-idx3-ubyte", "train-images.idx3-ubyte"])?,
        &f(&["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"])?,
    )?;
    let test = load_mnist_idx(
        &f(&["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"])?,
        &f(&["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"])?,
    )?;
    Ok((train, test))
}

/// `data_batch_1..5.bin` and `test_batch.bin`, directly in `dir` or in its
/// `cifar-10-batches-bin` subdirectory.
pub fn load_cifar10_dir<T: Scalar>(dir: &Path) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    let dir = resolve_dir(dir, "cifar-10-batches-bin", "test_batch.bin");
    let train_files = (1..=5)
        .map(|i| find_file(&dir, &[&format!("data_batch_{i}.bin")]))
        .collect::<Result<Vec<_>>>()?;
    let train = load_cifar10_bin(&train_files)?;
    let test = load_cifar10_bin(&[find_file(&dir, &["test_batch.bin"])?])?;
    Ok((train, test))
}

/// `train.bin` and `test.bin`, directly in `dir` or in `cifar-100-binary`.
pub fn load_cifar100_dir<T: Scalar>(dir: &Path) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    let dir = resolve_dir(dir, "cifar-100-binary", "test.bin");
    let train = load_cifar100_bin(&[find_file(&dir, &["train.bin"])?])?;
    let test = load_cifar100_bin(&[find_file(&dir, &["test.bin"])?])?;
    Ok((train, test))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    /// `[channels, height, width]`.
    pub shape: [usize; 3],
    pub class_count: usize,
    pub seed: u64,
    /// Class-conditional mean shift of ±0.3 around 0.5; with more than two
    /// classes each class gets its own random ±0.3 sign pattern.
    pub separable: bool,
}

/// Deterministic pseudo-random dataset.
pub fn make_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<LabeledDataset<T>> {
    if spec.n == 0 || spec.class_count == 0 {
        return Err(Error::Validation(
            "synthetic dataset needs n >= 1 and at least one class".into(),
        ));
    }
    let mut rng = Rng::new(spec.seed);
    let per_sample: usize = spec.shape.iter().product();
    let patterns: Vec<Vec<f64>> = match (spec.separable, spec.class_count) {
        (false, _) => Vec::new(),
        (true, 2) => vec![vec![-0.3; per_sample], vec![0.3; per_sample]],
        (true, k) => (0..k)
            .map(|_| {
                (0..per_sample)
                    .map(|_| if rng.next_u64() & 1 == 0 { -0.3 } else { 0.3 })
                    .collect()
            })
            .collect(),
    };
    let mut labels = Vec::with_capacity(spec.n);
    let mut data = Vec::with_capacity(spec.n * per_sample);
    for _ in 0..spec.n {
        let label = rng.below(spec.class_count);
        labels.push(label);
        if spec.separable {
            for &shift in &patterns[label] {
                let v = 0.5 + shift + rng.uniform(-0.2, 0.2);
                data.push(T::from_f64_lossy(v.clamp(0.0, 1.0)));
            }
        } else {
            data.extend((0..per_sample).map(|_| T::from_f64_lossy(rng.next_f64())));
        }
    }
    let mut shape = vec![spec.n];
    shape.extend_from_slice(&spec.shape);
    LabeledDataset::new(Tensor::new(shape, data)?, labels, spec.class_count)
}

/// Train and test sets drawn from one synthetic distribution: `spec.n`
/// training samples followed by `test_n` test samples.
pub fn make_synthetic_split<T: Scalar>(
    spec: &SyntheticSpec,
    test_n: usize,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    let all = make_synthetic::<T>(&SyntheticSpec {
        n: spec.n + test_n,
        ..spec.clone()
    })?;
    let train: Vec<usize> = (0..spec.n).collect();
    let test: Vec<usize> = (spec.n..spec.n + test_n).collect();
    Ok((all.subset(&train), all.subset(&test)))
}

/// Order in which samples are visited, split into batches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub order: Vec<usize>,
    pub seed: u64,
}

impl BatchPlan {
    /// Consecutive slices of `order`; the last may be short.
    pub fn batches(&self) -> impl Iterator<Item = &[usize]> {
        self.order.chunks(self.batch_size)
    }

    pub fn batch_count(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

pub fn plan_batches(n: usize, batch_size: usize, seed: u64, shuffle: bool) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::Validation("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        Rng::new(seed).shuffle(&mut order);
    }
    Ok(BatchPlan {
        batch_size,
        order,
        seed,
    })
}
