//! Datasets and deterministic mini-batch streaming.
//!
//! Inputs are stored as `f32` and widened to `f64` when a [`Batch`] is cut.
//! Image pixels are scaled by `1/255` and nothing else (no mean/std
//! normalisation, no augmentation).
//!
//! # Directory layout
//!
//! * CIFAR-10: `<dir>/data_batch_{1..5}.bin` and `<dir>/test_batch.bin`, or the
//!   same files under `<dir>/cifar-10-batches-bin/`.
//! * MNIST: `<dir>/{train,t10k}-{images-idx3,labels-idx1}-ubyte` (the
//!   `images.idx3-ubyte` spelling is accepted too), uncompressed.
//!
//! # Shuffling
//!
//! The order for epoch `e` of a stream with seed base `s` is a Fisher–Yates
//! shuffle of `0..N` driven by `SplitMix64(derive_seed(s, e))`: for `i` from
//! `N−1` down to 1, swap positions `i` and `j = (next_u64 · (i+1)) >> 64`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{Batch, Shape};
use crate::rng::{derive_seed, stream, stream_rng, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    split: Split,
    sample_shape: Shape,
    class_count: usize,
    inputs: Vec<f32>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        sample_shape: Shape,
        class_count: usize,
        inputs: Vec<f32>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::spec("dataset must contain at least one sample"));
        }
        if inputs.len() != labels.len() * sample_shape.size() {
            return Err(Error::spec(format!(
                "{} input values do not fit {} samples of shape {sample_shape:?}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= class_count) {
            return Err(Error::Range {
                what: "label",
                index: l as usize,
                limit: class_count,
            });
        }
        Ok(Self {
            name: name.into(),
            split,
            sample_shape,
            class_count,
            inputs,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn sample_shape(&self) -> Shape {
        self.sample_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let d = self.sample_shape.size();
        &self.inputs[i * d..(i + 1) * d]
    }

    /// Gather the listed samples, in order, into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let d = self.sample_shape.size();
        let mut inputs = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Range {
                    what: "sample index",
                    index: i,
                    limit: self.len(),
                });
            }
            inputs.extend(self.sample(i).iter().map(|&v| v as f64));
            labels.push(self.labels[i] as usize);
        }
        Batch::new(inputs, labels, d)
    }

    /// Consecutive batches of at most `size` samples in storage order.
    pub fn chunks(&self, size: usize) -> impl Iterator<Item = Batch> + '_ {
        let size = size.max(1);
        (0..self.len()).step_by(size).map(move |start| {
            let idx: Vec<usize> = (start..(start + size).min(self.len())).collect();
            self.batch(&idx).expect("indices are in range")
        })
    }

    /// Keep the first `per_class` samples of each class, in a seed-determined
    /// order; the result preserves the original relative order. Classes with
    /// fewer samples contribute all they have.
    pub fn balanced_subset(&self, per_class: usize, seed: u64) -> Result<Dataset> {
        let order = permutation(self.len(), derive_seed(seed, stream::SUBSET));
        let mut taken = vec![0usize; self.class_count];
        let mut keep: Vec<usize> = Vec::with_capacity(per_class * self.class_count);
        for i in order {
            let c = self.labels[i] as usize;
            if taken[c] < per_class {
                taken[c] += 1;
                keep.push(i);
            }
        }
        keep.sort_unstable();
        self.select(&keep, format!("{}[balanced {per_class}/class]", self.name))
    }

    /// The first `n` samples in storage order.
    pub fn head(&self, n: usize) -> Result<Dataset> {
        let keep: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&keep, format!("{}[:{n}]", self.name))
    }

    fn select(&self, keep: &[usize], name: String) -> Result<Dataset> {
        let mut inputs = Vec::with_capacity(keep.len() * self.sample_shape.size());
        let mut labels = Vec::with_capacity(keep.len());
        for &i in keep {
            inputs.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(name, self.split, self.sample_shape, self.class_count, inputs, labels)
    }
}

/// Fisher–Yates shuffle of `0..n` driven by SplitMix64.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(seed);
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    order
}

fn format_err(path: &Path, offset: u64, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        reason: reason.into(),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| format_err(path, 0, format!("cannot read file: {e}")))
}

const CIFAR_RECORD: usize = 3073;
const CIFAR_PIXELS: usize = 3072;

fn cifar_root(dir: &Path) -> PathBuf {
    let nested = dir.join("cifar-10-batches-bin");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

pub fn load_cifar10(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let root = cifar_root(dir.as_ref());
    let files: Vec<PathBuf> = match split {
        Split::Train => (1..=5).map(|i| root.join(format!("data_batch_{i}.bin"))).collect(),
        Split::Test => vec![root.join("test_batch.bin")],
    };
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for path in &files {
        let bytes = read_file(path)?;
        let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
        if whole != bytes.len() || bytes.is_empty() {
            return Err(format_err(
                path,
                whole as u64,
                format!(
                    "expected whole {CIFAR_RECORD}-byte records, found {} trailing bytes",
                    bytes.len() - whole
                ),
            ));
        }
        for (r, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
            if rec[0] > 9 {
                return Err(format_err(path, (r * CIFAR_RECORD) as u64, format!("label {} > 9", rec[0])));
            }
            labels.push(rec[0] as u32);
            inputs.extend(rec[1..].iter().map(|&p| p as f32 / 255.0));
        }
    }
    debug_assert_eq!(inputs.len(), labels.len() * CIFAR_PIXELS);
    Dataset::new(
        format!("cifar10-{split}"),
        split,
        Shape::Image {
            channels: 3,
            height: 32,
            width: 32,
        },
        10,
        inputs,
        labels,
    )
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| format_err(path, at as u64, "truncated IDX header"))
}

fn mnist_file(dir: &Path, prefix: &str, kind: &str) -> PathBuf {
    let dashed = dir.join(format!("{prefix}-{kind}-ubyte"));
    if dashed.exists() {
        return dashed;
    }
    let dotted = dir.join(format!("{prefix}-{}", kind.replacen('-', ".", 1) + "-ubyte"));
    if dotted.exists() {
        dotted
    } else {
        dashed
    }
}

pub fn load_mnist(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let dir = dir.as_ref();
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let img_path = mnist_file(dir, prefix, "images-idx3");
    let lbl_path = mnist_file(dir, prefix, "labels-idx1");

    let lbl = read_file(&lbl_path)?;
    let magic = be_u32(&lbl, 0, &lbl_path)?;
    if magic != IDX_LABELS {
        return Err(format_err(&lbl_path, 0, format!("label magic {magic:#010x}, expected {IDX_LABELS:#010x}")));
    }
    let n = be_u32(&lbl, 4, &lbl_path)? as usize;
    if lbl.len() != 8 + n {
        return Err(format_err(&lbl_path, lbl.len().min(8 + n) as u64, format!("expected {n} labels")));
    }
    let labels: Vec<u32> = lbl[8..].iter().map(|&l| l as u32).collect();
    if let Some(i) = labels.iter().position(|&l| l > 9) {
        return Err(format_err(&lbl_path, 8 + i as u64, format!("label {} > 9", labels[i])));
    }

    let img = read_file(&img_path)?;
    let magic = be_u32(&img, 0, &img_path)?;
    if magic != IDX_IMAGES {
        return Err(format_err(&img_path, 0, format!("image magic {magic:#010x}, expected {IDX_IMAGES:#010x}")));
    }
    let count = be_u32(&img, 4, &img_path)? as usize;
    let rows = be_u32(&img, 8, &img_path)? as usize;
    let cols = be_u32(&img, 12, &img_path)? as usize;
    if count != n {
        return Err(format_err(&img_path, 4, format!("{count} images but {n} labels")));
    }
    let expected = 16 + count * rows * cols;
    if img.len() != expected {
        return Err(format_err(&img_path, img.len().min(expected) as u64, format!("expected {expected} bytes")));
    }
    let inputs = img[16..].iter().map(|&p| p as f32 / 255.0).collect();
    Dataset::new(
        format!("mnist-{split}"),
        split,
        Shape::Image {
            channels: 1,
            height: rows,
            width: cols,
        },
        10,
        inputs,
        labels,
    )
}

/// Gaussian clusters with unit covariance. Class `k` is centred at
/// `separation/√2 · e_k`, so every pair of centres is `separation` apart.
/// Sample `i` belongs to class `i mod classes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub shape: Shape,
    pub separation: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn flat(classes: usize, per_class: usize, dim: usize, seed: u64) -> Self {
        Self {
            classes,
            per_class,
            shape: Shape::Flat(dim),
            separation: 6.0,
            seed,
        }
    }
}

pub fn synthetic_blobs(spec: &BlobSpec, split: Split) -> Result<Dataset> {
    let dim = spec.shape.size();
    if spec.classes < 2 || spec.per_class == 0 || dim == 0 {
        return Err(Error::spec("blobs need ≥ 2 classes, ≥ 1 sample per class, ≥ 1 dimension"));
    }
    if dim < spec.classes {
        return Err(Error::spec(format!(
            "simplex centres need dim ≥ classes ({dim} < {})",
            spec.classes
        )));
    }
    let offset = spec.separation / std::f64::consts::SQRT_2;
    let split_stream = match split {
        Split::Train => 0,
        Split::Test => 1,
    };
    let mut rng = stream_rng(derive_seed(spec.seed, split_stream), stream::DATA);
    let n = spec.classes * spec.per_class;
    let mut inputs = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % spec.classes;
        for d in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            let centre = if d == class { offset } else { 0.0 };
            inputs.push((centre + z) as f32);
        }
        labels.push(class as u32);
    }
    Dataset::new(
        format!("blobs{}x{}", spec.classes, spec.per_class),
        split,
        spec.shape,
        spec.classes,
        inputs,
        labels,
    )
}

/// Deterministic epoch-by-epoch mini-batch source over a dataset.
#[derive(Debug, Clone, Copy)]
pub struct BatchStream<'a> {
    data: &'a Dataset,
    batch_size: usize,
    seed_base: u64,
}

impl<'a> BatchStream<'a> {
    pub fn new(data: &'a Dataset, batch_size: usize, seed_base: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::spec("batch size must be positive"));
        }
        Ok(Self {
            data,
            batch_size,
            seed_base,
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.data
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.batch_size)
    }

    pub fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        permutation(self.data.len(), derive_seed(self.seed_base, epoch))
    }

    /// Batch `step` of `epoch`; the last batch of an epoch may be short.
    pub fn next_batch(&self, epoch: u64, step: usize) -> Result<Batch> {
        self.batch_in(&self.epoch_order(epoch), step)
    }

    /// Batch `step` of a precomputed epoch order.
    pub fn batch_in(&self, order: &[usize], step: usize) -> Result<Batch> {
        let steps = self.steps_per_epoch();
        if step >= steps {
            return Err(Error::Range {
                what: "step",
                index: step,
                limit: steps,
            });
        }
        let start = step * self.batch_size;
        let end = (start + self.batch_size).min(order.len());
        self.data.batch(&order[start..end])
    }
}
