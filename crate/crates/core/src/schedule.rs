//! Learning-rate schedules, evaluated per iteration.
//!
//! The backbone schedule holds `high` for the first `plateau_frac` of its `L`
//! epochs, decays linearly to `low` by `decay_end_frac · L`, then stays at
//! `low`. Its position is measured in fractional epochs
//! (`iteration / steps_per_epoch`), so the decay is smooth across steps.
//! The cyclic schedule restarts every `cycle_len` iterations and decays
//! linearly from `high` at the first iteration of a cycle to `low` at the last.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_plateau_frac() -> f64 {
    0.5
}

fn default_decay_end_frac() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Backbone {
        epochs: u32,
        high: f64,
        low: f64,
        #[serde(default = "default_plateau_frac")]
        plateau_frac: f64,
        #[serde(default = "default_decay_end_frac")]
        decay_end_frac: f64,
    },
    Constant {
        lr: f64,
    },
    CyclicLinear {
        cycle_len: u64,
        high: f64,
        low: f64,
    },
}

impl ScheduleKind {
    pub fn backbone(epochs: u32, high: f64, low: f64) -> Self {
        ScheduleKind::Backbone {
            epochs,
            high,
            low,
            plateau_frac: default_plateau_frac(),
            decay_end_frac: default_decay_end_frac(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    kind: ScheduleKind,
    steps_per_epoch: usize,
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, steps_per_epoch: usize) -> Result<Self> {
        if steps_per_epoch == 0 {
            return Err(Error::spec("steps_per_epoch must be positive"));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::spec(format!("{name} must be a positive learning rate, got {v}")))
            }
        };
        match kind {
            ScheduleKind::Backbone {
                epochs,
                high,
                low,
                plateau_frac,
                decay_end_frac,
            } => {
                positive("high", high)?;
                positive("low", low)?;
                if high < low {
                    return Err(Error::spec("backbone schedule needs high ≥ low"));
                }
                if epochs == 0 {
                    return Err(Error::spec("backbone schedule needs at least one epoch"));
                }
                if !(0.0 < plateau_frac && plateau_frac < decay_end_frac && decay_end_frac <= 1.0) {
                    return Err(Error::spec(format!(
                        "need 0 < plateau_frac < decay_end_frac ≤ 1, got {plateau_frac} and {decay_end_frac}"
                    )));
                }
            }
            ScheduleKind::Constant { lr } => positive("lr", lr)?,
            ScheduleKind::CyclicLinear { cycle_len, high, low } => {
                positive("high", high)?;
                positive("low", low)?;
                if high < low {
                    return Err(Error::spec("cyclic schedule needs high ≥ low"));
                }
                if cycle_len == 0 {
                    return Err(Error::spec("cycle length must be at least one iteration"));
                }
            }
        }
        Ok(Self { kind, steps_per_epoch })
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.steps_per_epoch
    }

    /// Learning rate for the step with 0-based index `iteration`.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        match self.kind {
            ScheduleKind::Backbone {
                epochs,
                high,
                low,
                plateau_frac,
                decay_end_frac,
            } => {
                let pos = iteration as f64 / self.steps_per_epoch as f64;
                let start = plateau_frac * epochs as f64;
                let end = decay_end_frac * epochs as f64;
                if pos < start {
                    high
                } else if pos < end {
                    high + (low - high) * (pos - start) / (end - start)
                } else {
                    low
                }
            }
            ScheduleKind::Constant { lr } => lr,
            ScheduleKind::CyclicLinear { cycle_len, high, low } => {
                if cycle_len == 1 {
                    return high;
                }
                let pos = (iteration % cycle_len) as f64;
                high + (low - high) * pos / (cycle_len - 1) as f64
            }
        }
    }

    /// Learning rate at the first step of `epoch`.
    pub fn lr_at_epoch(&self, epoch: u64) -> f64 {
        self.lr_at(epoch * self.steps_per_epoch as u64)
    }
}

pub fn epoch_of(iteration: u64, steps_per_epoch: usize) -> u64 {
    iteration / steps_per_epoch as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig7(spe: usize) -> ScheduleSpec {
        ScheduleSpec::new(ScheduleKind::backbone(160, 0.05, 0.01), spe).unwrap()
    }

    #[test]
    fn backbone_reference_points() {
        let s = fig7(390);
        assert_eq!(s.lr_at_epoch(0), 0.05);
        assert_eq!(s.lr_at_epoch(79), 0.05);
        assert!((s.lr_at_epoch(112) - 0.03).abs() < 1e-12);
        assert_eq!(s.lr_at_epoch(144), 0.01);
        assert_eq!(s.lr_at_epoch(159), 0.01);
        assert_eq!(s.lr_at_epoch(1000), 0.01);
    }

    #[test]
    fn cyclic_endpoints() {
        let s = ScheduleSpec::new(
            ScheduleKind::CyclicLinear {
                cycle_len: 390,
                high: 0.05,
                low: 0.01,
            },
            390,
        )
        .unwrap();
        assert_eq!(s.lr_at(0), 0.05);
        assert!((s.lr_at(389) - 0.01).abs() < 1e-15);
        assert_eq!(s.lr_at(390), 0.05);
    }

    #[test]
    fn epoch_of_examples() {
        assert_eq!(epoch_of(0, 390), 0);
        assert_eq!(epoch_of(390, 390), 1);
        assert_eq!(epoch_of(3899, 390), 9);
    }

    #[test]
    fn invalid_schedules() {
        assert!(ScheduleSpec::new(ScheduleKind::backbone(10, 0.01, 0.05), 1).is_err());
        assert!(ScheduleSpec::new(ScheduleKind::Constant { lr: 0.0 }, 1).is_err());
        assert!(ScheduleSpec::new(ScheduleKind::Constant { lr: 0.1 }, 0).is_err());
        let bad_frac = ScheduleKind::Backbone {
            epochs: 10,
            high: 0.1,
            low: 0.01,
            plateau_frac: 0.9,
            decay_end_frac: 0.5,
        };
        assert!(ScheduleSpec::new(bad_frac, 1).is_err());
        let bad_cycle = ScheduleKind::CyclicLinear {
            cycle_len: 0,
            high: 0.1,
            low: 0.01,
        };
        assert!(ScheduleSpec::new(bad_cycle, 1).is_err());
    }

    #[test]
    fn backbone_is_continuous_at_joins() {
        let s = fig7(1_000_000);
        let spe = 1_000_000u64;
        let just_before = |e: u64| s.lr_at(e * spe - 1);
        assert!((just_before(80) - s.lr_at_epoch(80)).abs() < 1e-12);
        // one step before the end of the decay is 0.04/64 epochs·1e-6 above low
        assert!((just_before(144) - s.lr_at_epoch(144)).abs() < 1e-9);
    }

    #[test]
    fn backbone_without_decay_gap_is_flat() {
        let s = ScheduleSpec::new(ScheduleKind::backbone(20, 0.02, 0.02), 7).unwrap();
        for it in 0..200 {
            assert_eq!(s.lr_at(it), 0.02);
        }
    }

    proptest! {
        #[test]
        fn backbone_is_positive_and_non_increasing(epochs in 1u32..200, high in 1e-4f64..1.0, ratio in 0.01f64..1.0, spe in 1usize..50) {
            let s = ScheduleSpec::new(ScheduleKind::backbone(epochs, high, high * ratio), spe).unwrap();
            let mut prev = f64::INFINITY;
            for it in 0..(epochs as u64 + 2) * spe as u64 {
                let lr = s.lr_at(it);
                prop_assert!(lr > 0.0);
                prop_assert!(lr <= prev + 1e-15);
                prev = lr;
            }
        }

        #[test]
        fn cyclic_is_periodic_and_decreasing_within_cycle(c in 1u64..100, high in 1e-4f64..1.0, ratio in 0.01f64..1.0, it in 0u64..10_000) {
            let s = ScheduleSpec::new(ScheduleKind::CyclicLinear { cycle_len: c, high, low: high * ratio }, 1).unwrap();
            prop_assert_eq!(s.lr_at(it), s.lr_at(it + c));
            prop_assert!(s.lr_at(it) > 0.0);
            if (it + 1) % c != 0 {
                prop_assert!(s.lr_at(it + 1) <= s.lr_at(it));
            }
        }
    }
}
