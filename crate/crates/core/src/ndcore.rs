//! Flat parameter vectors, their arithmetic, and the incremental mean.
//!
//! A [`WeightVector`] is every trainable parameter of a model laid out
//! contiguously, tagged with the [`LayoutId`] of the architecture that
//! produced it. All binary operations check that both operands share a
//! layout and never mutate their inputs.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity of a parameter layout: a hash of the ordered (layer, shape) list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayoutId(pub u64);

impl fmt::Display for LayoutId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    layout: LayoutId,
}

impl WeightVector {
    pub fn new(values: Vec<f64>, layout: LayoutId) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::spec("weight vector must be non-empty"));
        }
        check_finite(&values)?;
        Ok(Self { values, layout })
    }

    pub fn zeros(len: usize, layout: LayoutId) -> Result<Self> {
        Self::new(vec![0.0; len], layout)
    }

    /// Skips the finiteness scan. Callers guarantee the invariant.
    pub(crate) fn from_parts(values: Vec<f64>, layout: LayoutId) -> Self {
        debug_assert!(!values.is_empty());
        Self { values, layout }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> LayoutId {
        self.layout
    }

    pub fn check_layout(&self, other: &WeightVector) -> Result<()> {
        if self.layout != other.layout || self.values.len() != other.values.len() {
            return Err(Error::Layout {
                expected: self.layout,
                expected_len: self.values.len(),
                found: other.layout,
                found_len: other.values.len(),
            });
        }
        Ok(())
    }

    /// Same layout, every coordinate zero.
    pub fn zeros_like(&self) -> WeightVector {
        Self::from_parts(vec![0.0; self.values.len()], self.layout)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write_checkpoint(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut input = BufReader::new(File::open(path)?);
        read_checkpoint(&mut input).map_err(|e| match e {
            Error::Format { offset, reason, .. } => Error::Format {
                path: path.to_path_buf(),
                offset,
                reason,
            },
            other => other,
        })
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::numeric(format!("coordinate {i} is {}", values[i]))),
    }
}

/// `a·x + y`.
pub fn axpy(a: f64, x: &WeightVector, y: &WeightVector) -> Result<WeightVector> {
    x.check_layout(y)?;
    let values: Vec<f64> = x
        .values
        .iter()
        .zip(&y.values)
        .map(|(xi, yi)| a * xi + yi)
        .collect();
    check_finite(&values)?;
    Ok(WeightVector::from_parts(values, x.layout))
}

/// `(1 − t)·a + t·b`. `t` outside `[0, 1]` extrapolates.
///
/// Evaluated from the nearer endpoint (`a + t·(b − a)` below `t = ½`,
/// `b + (1 − t)·(a − b)` from there on), so `t = 0` and `t = 1` return the
/// endpoints bit-exactly and `a = b` gives `a` for every `t`.
pub fn interpolate(a: &WeightVector, b: &WeightVector, t: f64) -> Result<WeightVector> {
    a.check_layout(b)?;
    let s = 1.0 - t;
    let values: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&ai, &bi)| if t < 0.5 { ai + t * (bi - ai) } else { bi + s * (ai - bi) })
        .collect();
    check_finite(&values)?;
    Ok(WeightVector::from_parts(values, a.layout))
}

pub fn dot(a: &WeightVector, b: &WeightVector) -> Result<f64> {
    a.check_layout(b)?;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum())
}

pub fn l2_norm(w: &WeightVector) -> f64 {
    w.values.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Incremental mean of accepted weight samples.
///
/// After `k` updates with `v_1..v_k` the mean is `Σ v_i / k`. The update is
/// evaluated as `mean + (w − mean)/(count + 1)`, which is algebraically the
/// `(mean·count + w)/(count + 1)` rule and leaves a constant sequence exact.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningAverage {
    mean: WeightVector,
    count: u64,
}

impl RunningAverage {
    /// Zero mean, zero samples.
    pub fn empty(len: usize, layout: LayoutId) -> Result<Self> {
        Ok(Self {
            mean: WeightVector::zeros(len, layout)?,
            count: 0,
        })
    }

    /// Average holding a single sample (count = 1).
    pub fn seeded(w: &WeightVector) -> Self {
        Self {
            mean: w.clone(),
            count: 1,
        }
    }

    pub fn mean(&self) -> &WeightVector {
        &self.mean
    }

    pub fn into_mean(self) -> WeightVector {
        self.mean
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(mut self, w: &WeightVector) -> Result<Self> {
        self.mean.check_layout(w)?;
        check_finite(&w.values)?;
        let denom = (self.count + 1) as f64;
        for (m, x) in self.mean.values.iter_mut().zip(&w.values) {
            *m += (x - *m) / denom;
        }
        self.count += 1;
        Ok(self)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"WAV1";

/// Little-endian: `"WAV1"`, u64 length, u64 layout hash, `length` × f64.
pub fn write_checkpoint<W: Write>(out: &mut W, w: &WeightVector) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(w.values.len() as u64).to_le_bytes())?;
    out.write_all(&w.layout.0.to_le_bytes())?;
    for v in &w.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<WeightVector> {
    let format = |offset: u64, reason: String| Error::Format {
        path: "<stream>".into(),
        offset,
        reason,
    };
    let mut header = [0u8; 20];
    read_exact_at(input, &mut header, 0).map_err(|(o, r)| format(o, r))?;
    if &header[..4] != CHECKPOINT_MAGIC {
        return Err(format(0, "bad magic, expected \"WAV1\"".into()));
    }
    let len = u64::from_le_bytes(header[4..12].try_into().unwrap());
    let layout = LayoutId(u64::from_le_bytes(header[12..20].try_into().unwrap()));
    if len == 0 {
        return Err(format(4, "zero-length weight vector".into()));
    }
    let mut values = Vec::with_capacity(len.min(1 << 28) as usize);
    let mut buf = [0u8; 8];
    for i in 0..len {
        let offset = 20 + 8 * i;
        read_exact_at(input, &mut buf, offset).map_err(|(o, r)| format(o, r))?;
        let v = f64::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(format(offset, format!("non-finite value {v}")));
        }
        values.push(v);
    }
    let mut probe = [0u8; 1];
    match input.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(format(20 + 8 * len, "trailing bytes after payload".into())),
        Err(e) => return Err(e.into()),
    }
    Ok(WeightVector::from_parts(values, layout))
}

fn read_exact_at<R: Read>(input: &mut R, buf: &mut [u8], offset: u64) -> Result<(), (u64, String)> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            (offset, "truncated checkpoint".to_string())
        } else {
            (offset, e.to_string())
        }
    })
}
