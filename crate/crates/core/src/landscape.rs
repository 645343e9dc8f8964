//! Loss along the line through two solutions.
//!
//! For each coefficient `t` the probe evaluates `w(t) = (1 − t)·w_a + t·w_b`
//! on the full train split (cross-entropy) and the test split (error rate).
//! `t` outside `[0, 1]` extrapolates past the endpoints.

use std::io::Write;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ndcore::{interpolate, LayoutId, WeightVector};
use crate::nn::{Batch, Evaluation, Objective, StepResult};
use crate::rng::splitmix64;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub ts: Vec<f64>,
    pub train_loss: Vec<f64>,
    pub test_error: Vec<f64>,
}

impl ProbeResult {
    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    /// CSV with header `t,train_loss,test_error`; floats use the shortest
    /// representation that round-trips.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,train_loss,test_error")?;
        for i in 0..self.len() {
            writeln!(out, "{},{},{}", self.ts[i], self.train_loss[i], self.test_error[i])?;
        }
        Ok(())
    }
}

/// 21 evenly spaced coefficients on `[−0.25, 1.25]`.
pub fn default_ts() -> Vec<f64> {
    linspace(-0.25, 1.25, 21)
}

/// `count` evenly spaced points from `lo` to `hi`, both included exactly.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let last = (count - 1) as f64;
            (0..count)
                .map(|k| if k + 1 == count { hi } else { lo + (hi - lo) * k as f64 / last })
                .collect()
        }
    }
}

/// Evaluates the line through `w_a` and `w_b` at each `t`.
pub fn line_probe<M: Objective + ?Sized>(
    model: &M,
    w_a: &WeightVector,
    w_b: &WeightVector,
    ts: &[f64],
    train: &Dataset,
    test: &Dataset,
) -> Result<ProbeResult> {
    w_a.check_layout(w_b)?;
    if w_a.layout() != model.layout() || w_a.len() != model.param_count() {
        return Err(Error::Layout {
            expected: model.layout(),
            expected_len: model.param_count(),
            found: w_a.layout(),
            found_len: w_a.len(),
        });
    }
    if ts.is_empty() {
        return Err(Error::spec("probe needs at least one coefficient"));
    }
    if ts.windows(2).any(|p| p[0] >= p[1]) || ts.iter().any(|t| !t.is_finite()) {
        return Err(Error::spec("probe coefficients must be finite and strictly increasing"));
    }
    let mut out = ProbeResult {
        ts: ts.to_vec(),
        train_loss: Vec::with_capacity(ts.len()),
        test_error: Vec::with_capacity(ts.len()),
    };
    for &t in ts {
        let w = interpolate(w_a, w_b, t)?;
        out.train_loss.push(model.evaluate(&w, train)?.loss);
        out.test_error.push(1.0 - model.evaluate(&w, test)?.accuracy);
    }
    Ok(out)
}

/// Linear model with squared loss, `½·mean((w·x − y)²)` with `y = ±1` from a
/// binary label. Its loss is exactly quadratic along any line in weight space,
/// which makes it a closed-form check for the probe.
#[derive(Debug, Clone, Copy)]
pub struct LeastSquares {
    dim: usize,
}

impl LeastSquares {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::spec("least-squares model needs at least one input"));
        }
        Ok(Self { dim })
    }

    fn target(label: usize) -> f64 {
        if label == 0 {
            -1.0
        } else {
            1.0
        }
    }

    fn check_input(&self, sample_len: usize) -> Result<()> {
        if sample_len != self.dim {
            return Err(Error::spec(format!(
                "least-squares model expects {} inputs per sample, got {sample_len}",
                self.dim
            )));
        }
        Ok(())
    }

    fn batch_terms(&self, w: &WeightVector, batch: &Batch) -> (f64, f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut correct = 0.0;
        let mut grad = vec![0.0; self.dim];
        for i in 0..batch.len() {
            let x = batch.sample(i);
            let y = Self::target(batch.labels()[i]);
            let pred: f64 = x.iter().zip(w.values()).map(|(a, b)| a * b).sum();
            let r = pred - y;
            loss += 0.5 * r * r;
            if (pred >= 0.0) == (y > 0.0) {
                correct += 1.0;
            }
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += r * xi;
            }
        }
        (loss, correct, grad)
    }
}

impl Objective for LeastSquares {
    fn layout(&self) -> LayoutId {
        LayoutId(splitmix64(0x1ea5_7500 ^ self.dim as u64))
    }

    fn param_count(&self) -> usize {
        self.dim
    }

    fn step(&self, w: &WeightVector, batch: &Batch) -> Result<StepResult> {
        self.check_input(batch.sample_len())?;
        let n = batch.len() as f64;
        let (loss, correct, grad) = self.batch_terms(w, batch);
        let grad = WeightVector::new(grad.into_iter().map(|g| g / n).collect(), self.layout())?;
        Ok(StepResult {
            loss: loss / n,
            accuracy: correct / n,
            grad,
        })
    }

    fn evaluate(&self, w: &WeightVector, data: &Dataset) -> Result<Evaluation> {
        let mut loss = 0.0;
        let mut correct = 0.0;
        for batch in data.chunks(crate::nn::EVAL_CHUNK) {
            self.check_input(batch.sample_len())?;
            let (l, c, _) = self.batch_terms(w, &batch);
            loss += l;
            correct += c;
        }
        let n = data.len() as f64;
        Ok(Evaluation {
            loss: loss / n,
            accuracy: correct / n,
        })
    }
}
