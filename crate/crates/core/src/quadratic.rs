//! Noisy-quadratic SGD testbed.
//!
//! Each coordinate follows the linear recursion
//!
//! ```text
//! w_{t+1,j} = (1 − lr·h_j)·w_{t,j} + lr·ε_{t,j},   ε ~ N(0, σ²)
//! ```
//!
//! whose stationary variance is `lr²σ² / (1 − (1 − lr·h)²)`. Averaging the
//! last `tail_window` iterates shrinks the across-seed variance once the window
//! exceeds the autocorrelation time `≈ 1/(lr·h)`.
//!
//! Coordinate `j` draws its noise from substream `first_stream + j` of the
//! seed's noise stream, so a d-dimensional run equals d one-dimensional runs
//! with shifted `first_stream`.
//!
//! [`NoisyQuadratic`] exposes the same process to the training controllers:
//! its gradient is `h ⊙ w − x̄` with `x̄` the batch mean of noise samples from
//! [`noise_dataset`], so SGD with batch size 1 follows the recursion above.

use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::ndcore::{LayoutId, WeightVector};
use crate::nn::{Batch, Evaluation, Objective, Shape, StepResult};
use crate::rng::{derive_seed, splitmix64, stream, stream_rng};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadSpec {
    /// Diagonal Hessian entries.
    pub curvatures: Vec<f64>,
    pub noise_std: f64,
    pub lr: f64,
    pub steps: u64,
    pub tail_window: u64,
    /// Starting point; empty means the origin.
    pub init: Vec<f64>,
    /// Noise substream of coordinate 0.
    pub first_stream: u64,
}

impl QuadSpec {
    pub fn new(curvatures: Vec<f64>, noise_std: f64, lr: f64, steps: u64, tail_window: u64) -> Result<Self> {
        let spec = Self {
            curvatures,
            noise_std,
            lr,
            steps,
            tail_window,
            init: Vec::new(),
            first_stream: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.curvatures.is_empty() {
            return Err(Error::spec("quadratic needs at least one curvature"));
        }
        if self.curvatures.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::spec("curvatures must be positive and finite"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::spec("noise_std must be ≥ 0"));
        }
        let h_max = self.curvatures.iter().cloned().fold(0.0, f64::max);
        if !(self.lr > 0.0 && (1.0 - self.lr * h_max).abs() < 1.0) {
            return Err(Error::spec(format!(
                "unstable recursion: need 0 < lr < 2/max(h) = {}, got lr = {}",
                2.0 / h_max,
                self.lr
            )));
        }
        if self.tail_window == 0 || self.tail_window > self.steps {
            return Err(Error::spec(format!(
                "tail_window must lie in [1, steps], got {} with {} steps",
                self.tail_window, self.steps
            )));
        }
        if !self.init.is_empty() && self.init.len() != self.curvatures.len() {
            return Err(Error::spec("init must be empty or match the curvature count"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.curvatures.len()
    }

    fn start(&self, j: usize) -> f64 {
        self.init.get(j).copied().unwrap_or(0.0)
    }
}

/// `lr²σ² / (1 − (1 − lr·h)²)`.
pub fn stationary_variance(lr: f64, h: f64, noise_std: f64) -> f64 {
    let a = 1.0 - lr * h;
    lr * lr * noise_std * noise_std / (1.0 - a * a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    /// Iterates discarded before measuring along-trajectory moments (`steps / 10`).
    pub burn_in: u64,
    /// Per-coordinate mean of the iterates after burn-in.
    pub time_mean: Vec<f64>,
    /// Per-coordinate sample variance of the iterates after burn-in.
    pub time_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub final_iterate: Vec<f64>,
    pub tail_mean: Vec<f64>,
    pub summary: TrajectorySummary,
}

pub fn simulate(spec: &QuadSpec, seed: u64) -> Result<Simulation> {
    spec.validate()?;
    let noise_master = derive_seed(seed, stream::NOISE);
    let burn_in = spec.steps / 10;
    let tail_from = spec.steps - spec.tail_window;
    let d = spec.dim();
    let mut sim = Simulation {
        final_iterate: Vec::with_capacity(d),
        tail_mean: Vec::with_capacity(d),
        summary: TrajectorySummary {
            burn_in,
            time_mean: Vec::with_capacity(d),
            time_variance: Vec::with_capacity(d),
        },
    };
    for (j, &h) in spec.curvatures.iter().enumerate() {
        let mut rng = stream_rng(noise_master, spec.first_stream + j as u64);
        let a = 1.0 - spec.lr * h;
        let mut w = spec.start(j);
        let mut tail_sum = 0.0;
        // Welford over iterates burn_in+1 ..= steps
        let (mut n, mut mean, mut m2) = (0u64, 0.0, 0.0);
        for t in 1..=spec.steps {
            let eps: f64 = StandardNormal.sample(&mut rng);
            w = a * w + spec.lr * spec.noise_std * eps;
            if t > tail_from {
                tail_sum += w;
            }
            if t > burn_in {
                n += 1;
                let delta = w - mean;
                mean += delta / n as f64;
                m2 += delta * (w - mean);
            }
        }
        sim.final_iterate.push(w);
        sim.tail_mean.push(tail_sum / spec.tail_window as f64);
        sim.summary.time_mean.push(mean);
        sim.summary
            .time_variance
            .push(if n > 1 { m2 / (n - 1) as f64 } else { 0.0 });
    }
    Ok(sim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub lr: f64,
    pub h_summary: String,
    pub window: u64,
    pub seeds: usize,
    pub var_final: f64,
    pub var_tail: f64,
    pub ratio: f64,
}

impl VarianceReport {
    pub const CSV_HEADER: &'static str = "lr,h_summary,window,var_final,var_tail,ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.lr, self.h_summary, self.window, self.var_final, self.var_tail, self.ratio
        )
    }
}

fn h_summary(hs: &[f64]) -> String {
    let lo = hs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        format!("{lo}")
    } else {
        format!("{lo}..{hi}")
    }
}

/// Sample variance with divisor `n − 1`, two-pass.
fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Across-seed variance of the final iterate and of the tail mean, summed
/// over coordinates, for seeds `0..n_seeds`. When both variances vanish the
/// ratio is reported as 1.
pub fn variance_report(spec: &QuadSpec, n_seeds: usize) -> Result<VarianceReport> {
    if n_seeds < 30 {
        return Err(Error::spec(format!("variance report needs at least 30 seeds, got {n_seeds}")));
    }
    let runs = (0..n_seeds as u64).map(|s| simulate(spec, s)).collect::<Result<Vec<_>>>()?;
    let mut var_final = 0.0;
    let mut var_tail = 0.0;
    for j in 0..spec.dim() {
        let finals: Vec<f64> = runs.iter().map(|r| r.final_iterate[j]).collect();
        let tails: Vec<f64> = runs.iter().map(|r| r.tail_mean[j]).collect();
        var_final += sample_variance(&finals);
        var_tail += sample_variance(&tails);
    }
    let ratio = if var_final == 0.0 && var_tail == 0.0 {
        1.0
    } else {
        var_tail / var_final
    };
    Ok(VarianceReport {
        lr: spec.lr,
        h_summary: h_summary(&spec.curvatures),
        window: spec.tail_window,
        seeds: n_seeds,
        var_final,
        var_tail,
        ratio,
    })
}

/// `f(w) = ½·Σ h_j·w_j²` with the gradient perturbed by the batch contents.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyQuadratic {
    curvatures: Vec<f64>,
}

impl NoisyQuadratic {
    pub fn new(curvatures: Vec<f64>) -> Result<Self> {
        if curvatures.is_empty() || curvatures.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::spec("curvatures must be a non-empty list of positive reals"));
        }
        Ok(Self { curvatures })
    }

    fn loss(&self, w: &WeightVector) -> f64 {
        0.5 * self.curvatures.iter().zip(w.values()).map(|(h, x)| h * x * x).sum::<f64>()
    }
}

impl Objective for NoisyQuadratic {
    fn layout(&self) -> LayoutId {
        LayoutId(splitmix64(0x9a0d_0000 ^ self.curvatures.len() as u64))
    }

    fn param_count(&self) -> usize {
        self.curvatures.len()
    }

    fn step(&self, w: &WeightVector, batch: &Batch) -> Result<StepResult> {
        let d = self.curvatures.len();
        if batch.sample_len() != d {
            return Err(Error::spec(format!("noise samples have {} values, expected {d}", batch.sample_len())));
        }
        let n = batch.len() as f64;
        let grad = (0..d)
            .map(|j| {
                let noise = (0..batch.len()).map(|i| batch.sample(i)[j]).sum::<f64>() / n;
                self.curvatures[j] * w.values()[j] - noise
            })
            .collect();
        Ok(StepResult {
            loss: self.loss(w),
            accuracy: 0.0,
            grad: WeightVector::new(grad, self.layout())?,
        })
    }

    fn evaluate(&self, w: &WeightVector, _data: &Dataset) -> Result<Evaluation> {
        Ok(Evaluation {
            loss: self.loss(w),
            accuracy: 0.0,
        })
    }
}

/// `samples` i.i.d. `N(0, noise_std²)` vectors of length `dim`, single class.
pub fn noise_dataset(dim: usize, samples: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    let mut rng = stream_rng(seed, stream::NOISE);
    let inputs = (0..dim * samples)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (noise_std * z) as f32
        })
        .collect();
    Dataset::new("gaussian-noise", Split::Train, Shape::Flat(dim), 1, inputs, vec![0; samples])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(window: u64) -> QuadSpec {
        QuadSpec::new(vec![1.0], 1.0, 0.1, 2000, window).unwrap()
    }

    #[test]
    fn noiseless_origin_stays_put() {
        let spec = QuadSpec::new(vec![1.0, 3.0], 0.0, 0.1, 100, 10).unwrap();
        let s = simulate(&spec, 9).unwrap();
        assert_eq!(s.final_iterate, vec![0.0, 0.0]);
        assert_eq!(s.tail_mean, vec![0.0, 0.0]);
    }

    #[test]
    fn noiseless_closed_form() {
        let mut spec = QuadSpec::new(vec![2.0], 0.0, 0.3, 17, 1).unwrap();
        spec.init = vec![1.5];
        let s = simulate(&spec, 0).unwrap();
        let mut expected = 1.5;
        for _ in 0..17 {
            expected *= 1.0 - 0.3 * 2.0;
        }
        assert_eq!(s.final_iterate[0], expected);
    }

    #[test]
    fn rejects_unstable_or_malformed_specs() {
        assert!(QuadSpec::new(vec![1.0], 1.0, 2.0, 10, 1).is_err());
        assert!(QuadSpec::new(vec![1.0, 10.0], 1.0, 0.25, 10, 1).is_err());
        assert!(QuadSpec::new(vec![1.0], 1.0, 0.1, 10, 11).is_err());
        assert!(QuadSpec::new(vec![1.0], 1.0, 0.1, 10, 0).is_err());
        assert!(QuadSpec::new(vec![], 1.0, 0.1, 10, 1).is_err());
        assert!(QuadSpec::new(vec![-1.0], 1.0, 0.1, 10, 1).is_err());
    }

    #[test]
    fn window_one_gives_unit_ratio() {
        let r = variance_report(&one_d(1), 40).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.var_final, r.var_tail);
    }

    #[test]
    fn noiseless_report_is_zero() {
        let spec = QuadSpec::new(vec![1.0], 0.0, 0.1, 50, 5).unwrap();
        let r = variance_report(&spec, 30).unwrap();
        assert_eq!((r.var_final, r.var_tail, r.ratio), (0.0, 0.0, 1.0));
        assert!(variance_report(&spec, 29).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = one_d(50);
        assert_eq!(simulate(&spec, 4).unwrap(), simulate(&spec, 4).unwrap());
        assert_ne!(simulate(&spec, 4).unwrap().final_iterate, simulate(&spec, 5).unwrap().final_iterate);
    }

    #[test]
    fn csv_row_format() {
        let r = variance_report(&QuadSpec::new(vec![1.0, 0.5], 0.0, 0.1, 20, 2).unwrap(), 30).unwrap();
        assert_eq!(r.csv_row(), "0.1,0.5..1,2,0,0,1");
        assert_eq!(VarianceReport::CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
    }
}
