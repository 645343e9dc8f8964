//! Declarative description of one training run.

use serde::{Deserialize, Serialize};
use walab_core::nn::{mlp_spec, toy_cnn_spec, ModelSpec};
use walab_core::optim::OptimizerConfig;
use walab_core::rng::{derive_seed, stream};
use walab_core::schedule::{ScheduleKind, ScheduleSpec};

use crate::error::{HarnessError, Result};

pub const DEFAULT_BATCH_SIZE: usize = 128;

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

fn default_arm() -> String {
    "main".into()
}

fn default_true() -> bool {
    true
}

fn default_one() -> u64 {
    1
}

fn default_separation() -> f64 {
    6.0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelChoice {
    ToyCnn,
    /// Dense layers with ReLU between them; `dims` runs input → classes.
    Mlp { dims: Vec<usize> },
}

impl ModelChoice {
    pub fn build(&self) -> Result<ModelSpec> {
        Ok(match self {
            ModelChoice::ToyCnn => toy_cnn_spec(),
            ModelChoice::Mlp { dims } => mlp_spec(dims)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Cifar10,
    Mnist,
    Blobs,
}

/// Gaussian-cluster stand-in data, generated from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobParams {
    pub classes: usize,
    pub per_class: usize,
    /// `[channels, height, width]`; exclusive with `dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default = "default_separation")]
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetChoice {
    pub source: DataSource,
    /// Class-balanced training subset size per class; absent means all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blobs: Option<BlobParams>,
}

/// Learning rate used while SWA samples weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChcLr {
    /// Linear decay from `high` to `low` within each cycle, then reset.
    Cyclic { high: f64, low: f64 },
    Constant { lr: f64 },
}

/// Backbone training up to `start_epoch`, then averaging until the end of
/// the plan with one cycle every `cycle_epochs` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwaPhase {
    pub start_epoch: u64,
    #[serde(default = "default_one")]
    pub cycle_epochs: u64,
    pub lr: ChcLr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerChoice {
    Sgd,
    Swa(SwaPhase),
    Dswa(SwaPhase),
    Tswa(SwaPhase),
    Pswa {
        start_epoch: u64,
        period_epochs: u64,
        #[serde(default = "default_one")]
        samples_per_epoch: u64,
    },
}

impl ControllerChoice {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerChoice::Sgd => "sgd",
            ControllerChoice::Swa(_) => "swa",
            ControllerChoice::Dswa(_) => "dswa",
            ControllerChoice::Tswa(_) => "tswa",
            ControllerChoice::Pswa { .. } => "pswa",
        }
    }

    /// Averaging phase and stage count for the SWA family.
    pub fn swa_phase(&self) -> Option<(SwaPhase, u64)> {
        match *self {
            ControllerChoice::Swa(p) => Some((p, 1)),
            ControllerChoice::Dswa(p) => Some((p, 2)),
            ControllerChoice::Tswa(p) => Some((p, 3)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalFlags {
    /// Test accuracy of the live weights after every epoch.
    #[serde(default = "default_true")]
    pub test_every_epoch: bool,
    /// Test accuracy of running averages after every epoch, not only when
    /// an average is finalized.
    #[serde(default)]
    pub average_every_epoch: bool,
}

impl Default for EvalFlags {
    fn default() -> Self {
        Self {
            test_every_epoch: true,
            average_every_epoch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPlan {
    pub name: String,
    #[serde(default = "default_arm")]
    pub arm: String,
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub total_epochs: u64,
    pub model: ModelChoice,
    pub dataset: DatasetChoice,
    pub optimizer: OptimizerConfig,
    /// Backbone schedule, indexed by global iteration.
    pub schedule: ScheduleKind,
    pub controller: ControllerChoice,
    #[serde(default)]
    pub eval: EvalFlags,
}

/// Independent seeds for the random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub init: u64,
    pub shuffle: u64,
    /// Passed to subset selection and blob generation, which derive their
    /// own streams from it.
    pub data: u64,
}

impl TrainPlan {
    pub fn seeds(&self) -> RunSeeds {
        RunSeeds {
            init: derive_seed(self.seed, stream::INIT),
            shuffle: derive_seed(self.seed, stream::SHUFFLE),
            data: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::usage(format!("plan {}/{}: {msg}", self.name, self.arm)));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        ScheduleSpec::new(self.schedule, 1)?;
        if let ModelChoice::Mlp { dims } = &self.model {
            if dims.len() < 2 {
                return bad("mlp needs at least input and output dims".into());
            }
        }
        match (&self.dataset.source, &self.dataset.blobs) {
            (DataSource::Blobs, None) => return bad("dataset.source = \"blobs\" needs a [dataset.blobs] table".into()),
            (DataSource::Blobs, Some(b)) if b.image.is_some() == b.dim.is_some() => {
                return bad("dataset.blobs needs exactly one of `image` or `dim`".into())
            }
            (DataSource::Cifar10 | DataSource::Mnist, Some(_)) => {
                return bad("[dataset.blobs] only applies to source = \"blobs\"".into())
            }
            _ => {}
        }
        if self.dataset.train_per_class == Some(0) || self.dataset.test_per_class == Some(0) {
            return bad("subset sizes must be positive".into());
        }
        match self.controller {
            ControllerChoice::Sgd => {}
            ControllerChoice::Pswa {
                period_epochs,
                samples_per_epoch,
                ..
            } => {
                if period_epochs == 0 || samples_per_epoch == 0 {
                    return bad("pswa needs period_epochs ≥ 1 and samples_per_epoch ≥ 1".into());
                }
            }
            ref c => {
                let (phase, stages) = c.swa_phase().expect("swa family");
                if phase.cycle_epochs == 0 {
                    return bad("cycle_epochs must be positive".into());
                }
                let chunk = stages * phase.cycle_epochs;
                let budget = self.total_epochs.checked_sub(phase.start_epoch);
                match budget {
                    Some(b) if b >= chunk && b % chunk == 0 => {}
                    _ => {
                        return bad(format!(
                            "{} needs total_epochs − start_epoch to be a positive multiple of {chunk} \
                             ({stages} stage(s) × {} epoch cycles); got {} − {}",
                            c.name(),
                            phase.cycle_epochs,
                            self.total_epochs,
                            phase.start_epoch
                        ))
                    }
                }
                let lr_ok = match phase.lr {
                    ChcLr::Cyclic { high, low } => high.is_finite() && low.is_finite() && low > 0.0 && high >= low,
                    ChcLr::Constant { lr } => lr.is_finite() && lr > 0.0,
                };
                if !lr_ok {
                    return bad("SWA learning rates must be finite, positive, and high ≥ low".into());
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plans serialize to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: TrainPlan = toml::from_str(text).map_err(|e| HarnessError::usage(format!("invalid plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }
}
