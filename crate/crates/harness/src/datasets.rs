use std::path::{Path, PathBuf};

use walab_core::data::{load_cifar10, load_mnist, synthetic_blobs, BlobSpec, Dataset, Split};
use walab_core::nn::{ModelSpec, Shape};

use crate::error::{HarnessError, Result};
use crate::plan::{DataSource, DatasetChoice};

pub const DATA_DIR_ENV: &str = "WALAB_DATA_DIR";

const CIFAR_HINT: &str = "CIFAR-10 binary batches not found. Download \
    https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz, extract it so that \
    <data dir>/cifar-10-batches-bin/data_batch_1.bin exists, and point WALAB_DATA_DIR \
    (or --data-dir) at <data dir>";

const MNIST_HINT: &str = "MNIST IDX files not found. Place train-images-idx3-ubyte, \
    train-labels-idx1-ubyte, t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte under \
    <data dir>/mnist and point WALAB_DATA_DIR (or --data-dir) at <data dir>";

/// `explicit`, then `$WALAB_DATA_DIR`, then `./data`.
pub fn resolve_data_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("data"),
    }
}

pub fn cifar10_available(data_dir: &Path) -> bool {
    let nested = data_dir.join("cifar-10-batches-bin");
    let root = if nested.is_dir() { nested } else { data_dir.to_path_buf() };
    (1..=5).all(|i| root.join(format!("data_batch_{i}.bin")).is_file()) && root.join("test_batch.bin").is_file()
}

/// Train and test splits for a plan, subset per the plan's policy.
/// `seed` drives subset selection and blob generation.
pub fn load_datasets(choice: &DatasetChoice, data_dir: &Path, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = match choice.source {
        DataSource::Cifar10 => {
            if !cifar10_available(data_dir) {
                return Err(HarnessError::format(data_dir, CIFAR_HINT));
            }
            (load_cifar10(data_dir, Split::Train)?, load_cifar10(data_dir, Split::Test)?)
        }
        DataSource::Mnist => {
            let dir = data_dir.join("mnist");
            if !dir.is_dir() {
                return Err(HarnessError::format(&dir, MNIST_HINT));
            }
            (load_mnist(&dir, Split::Train)?, load_mnist(&dir, Split::Test)?)
        }
        DataSource::Blobs => {
            let b = choice
                .blobs
                .as_ref()
                .ok_or_else(|| HarnessError::usage("blobs source needs [dataset.blobs]"))?;
            let shape = match (b.image, b.dim) {
                (Some([channels, height, width]), None) => Shape::Image { channels, height, width },
                (None, Some(d)) => Shape::Flat(d),
                _ => return Err(HarnessError::usage("dataset.blobs needs exactly one of `image` or `dim`")),
            };
            let spec = BlobSpec {
                classes: b.classes,
                per_class: b.per_class,
                shape,
                separation: b.separation,
                seed,
            };
            (synthetic_blobs(&spec, Split::Train)?, synthetic_blobs(&spec, Split::Test)?)
        }
    };
    let train = match choice.train_per_class {
        Some(n) => train.balanced_subset(n, seed)?,
        None => train,
    };
    let test = match choice.test_per_class {
        Some(n) => test.balanced_subset(n, seed)?,
        None => test,
    };
    Ok((train, test))
}

/// Input size and class count of `data` must match the model.
pub fn check_compatible(model: &ModelSpec, data: &Dataset) -> Result<()> {
    let (want, got) = (model.input_shape().size(), data.sample_shape().size());
    if want != got || model.class_count() != data.class_count() {
        return Err(HarnessError::usage(format!(
            "model expects {want} inputs and {} classes; dataset {} has {got} inputs and {} classes",
            model.class_count(),
            data.name(),
            data.class_count()
        )));
    }
    Ok(())
}
