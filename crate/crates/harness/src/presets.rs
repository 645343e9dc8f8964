//! Named experiment configs at desk scale.
//!
//! "-desk" presets keep the published schedule shapes and hyperparameters
//! but train the toy CNN on a class-balanced 10k subset of CIFAR-10 and
//! shrink epoch counts where noted. Every numeric value carries a note in
//! the emitted config saying where it comes from.

use std::collections::BTreeMap;

use walab_core::optim::OptimizerConfig;
use walab_core::schedule::ScheduleKind;

use crate::bundle::{ArmSpec, Bundle, PlanTemplate, ProbeStep, Provenance, QuadStep};
use crate::error::{HarnessError, Result};
use crate::plan::{ChcLr, ControllerChoice, DataSource, DatasetChoice, EvalFlags, ModelChoice, SwaPhase};

pub const PRESETS: [&str; 7] = [
    "case1-backbone",
    "case2-backbone",
    "table3-desk",
    "table4-desk",
    "fig4-desk",
    "fig5-probe",
    "quad-variance",
];

/// 10k of the 50k training images.
const DESK_PER_CLASS: usize = 1000;
const C_HIGH: f64 = 0.05;
const C_LOW: f64 = 0.01;
const CONVERGED_L: u32 = 160;
const SHORT_L: u32 = 30;
/// Desk scaling of the PSWA experiment's epoch counts.
const FIG4_SCALE: u64 = 5;

pub fn preset(name: &str) -> Result<Bundle> {
    match name {
        "case1-backbone" => Ok(backbone_preset(name, CONVERGED_L)),
        "case2-backbone" => Ok(backbone_preset(name, SHORT_L)),
        "table3-desk" => Ok(chained_swa_preset(name, &["sgd", "swa", "dswa"], 10)),
        "table4-desk" => Ok(chained_swa_preset(name, &["sgd", "swa", "dswa", "tswa"], 12)),
        "fig4-desk" => Ok(fig4_desk()),
        "fig5-probe" => Ok(fig5_probe()),
        "quad-variance" => Ok(quad_variance()),
        _ => Err(HarnessError::usage(format!(
            "unknown preset {name:?}; known presets: {}",
            PRESETS.join(", ")
        ))),
    }
}

/// One-line description of each preset.
pub fn describe(name: &str) -> Result<String> {
    preset(name).map(|b| b.description)
}

fn backbone_schedule(epochs: u32, p: &mut Provenance) -> ScheduleKind {
    p.reported("base.schedule.high", "C_h, the high constant learning rate")
        .reported("base.schedule.low", "C_l, the low constant learning rate")
        .reported("base.schedule.plateau_frac", "C_h holds for the first half of the schedule")
        .decision(
            "base.schedule.decay_end_frac",
            "linear decay ends at 90% of L; the source shows the shape only in a figure",
        );
    ScheduleKind::backbone(epochs, C_HIGH, C_LOW)
}

fn toy_cnn_template(
    per_class: Option<usize>,
    optimizer: OptimizerConfig,
    schedule: ScheduleKind,
    eval: EvalFlags,
    p: &mut Provenance,
) -> PlanTemplate {
    p.reported("base.batch_size", "mini-batch size used for every experiment");
    if per_class.is_some() {
        p.scaled(
            "base.dataset.train_per_class",
            "1000 per class = 10k of the 50k CIFAR-10 training images (×1/5)",
        );
    }
    PlanTemplate {
        batch_size: 128,
        model: ModelChoice::ToyCnn,
        dataset: DatasetChoice {
            source: DataSource::Cifar10,
            train_per_class: per_class,
            test_per_class: None,
            blobs: None,
        },
        optimizer,
        schedule,
        eval,
    }
}

fn momentum_sgd(p: &mut Provenance, note_momentum: &str, note_wd: &str, reported: bool) -> OptimizerConfig {
    if reported {
        p.reported("base.optimizer.momentum", note_momentum)
            .reported("base.optimizer.weight_decay", note_wd);
    } else {
        p.decision("base.optimizer.momentum", note_momentum)
            .decision("base.optimizer.weight_decay", note_wd);
    }
    OptimizerConfig::Sgd {
        momentum: 0.9,
        weight_decay: 5e-4,
    }
}

fn backbone_preset(name: &str, epochs: u32) -> Bundle {
    let mut p = Provenance::default();
    let converged = epochs == CONVERGED_L;
    if converged {
        p.reported("base.schedule.epochs", "L for backbones that converge");
        p.reported("arms.sgd.total_epochs", "train for the whole schedule");
    } else {
        p.reported("base.schedule.epochs", "short L that leaves the backbone unconverged");
        p.reported("arms.sgd.total_epochs", "train for the whole schedule");
    }
    let schedule = backbone_schedule(epochs, &mut p);
    let optimizer = momentum_sgd(
        &mut p,
        "backbone momentum is not restated for this case; uses the PSWA comparison's 0.9",
        "backbone weight decay is not restated for this case; uses the PSWA comparison's 5e-4",
        false,
    );
    p.decision("seeds", "single seed; these presets are building blocks");
    let base = toy_cnn_template(None, optimizer, schedule, EvalFlags::default(), &mut p);
    let mut arms = BTreeMap::new();
    arms.insert(
        "sgd".to_string(),
        ArmSpec {
            total_epochs: epochs as u64,
            controller: ControllerChoice::Sgd,
        },
    );
    Bundle {
        name: name.into(),
        description: format!(
            "Backbone SGD on full CIFAR-10 with the L={epochs} schedule ({})",
            if converged { "converges" } else { "stops before converging" }
        ),
        seeds: vec![0],
        base: Some(base),
        arms,
        probe: None,
        quad: None,
        provenance: p,
    }
}

fn chc_cyclic(p: &mut Provenance, arm: &str) {
    p.decision(
        &format!("arms.{arm}.controller.lr.high"),
        "cyclic SWA rate starts each cycle at C_h; the exact shape is cited to other work",
    )
    .decision(
        &format!("arms.{arm}.controller.lr.low"),
        "cyclic SWA rate decays linearly to C_l at the end of each cycle",
    );
}

fn swa_arm(arm: &str, start: u64, budget: u64, p: &mut Provenance) -> ArmSpec {
    p.reported(
        &format!("arms.{arm}.controller.start_epoch"),
        "averaging starts where the L=30 backbone ends",
    )
    .reported(&format!("arms.{arm}.controller.cycle_epochs"), "one cycle per epoch")
    .decision(
        &format!("arms.{arm}.total_epochs"),
        &format!(
            "{start} backbone + {budget} averaging epochs, equal for every averaging arm; the averaging length is not stated"
        ),
    );
    chc_cyclic(p, arm);
    let phase = SwaPhase {
        start_epoch: start,
        cycle_epochs: 1,
        lr: ChcLr::Cyclic {
            high: C_HIGH,
            low: C_LOW,
        },
    };
    let controller = match arm {
        "swa" => ControllerChoice::Swa(phase),
        "dswa" => ControllerChoice::Dswa(phase),
        _ => ControllerChoice::Tswa(phase),
    };
    ArmSpec {
        total_epochs: start + budget,
        controller,
    }
}

/// SGD vs SWA vs chained SWA after a short, non-converged backbone, with
/// momentum and weight decay off.
fn chained_swa_preset(name: &str, arms_wanted: &[&str], budget: u64) -> Bundle {
    let mut p = Provenance::default();
    p.reported("base.schedule.epochs", "short L that leaves the backbone unconverged");
    let schedule = backbone_schedule(SHORT_L, &mut p);
    p.reported("base.optimizer.momentum", "momentum removed for the chained-SWA comparison")
        .reported("base.optimizer.weight_decay", "weight decay removed for the chained-SWA comparison");
    let optimizer = OptimizerConfig::plain_sgd();
    let eval = EvalFlags {
        test_every_epoch: true,
        average_every_epoch: false,
    };
    let base = toy_cnn_template(Some(DESK_PER_CLASS), optimizer, schedule, eval, &mut p);
    p.decision("seeds", "3 seeds; the seed count behind the reported mean±std is not stated");
    let start = SHORT_L as u64;
    let mut arms = BTreeMap::new();
    for &arm in arms_wanted {
        let spec = if arm == "sgd" {
            p.reported("arms.sgd.total_epochs", "the backbone alone, stopped at L");
            ArmSpec {
                total_epochs: start,
                controller: ControllerChoice::Sgd,
            }
        } else {
            swa_arm(arm, start, budget, &mut p)
        };
        arms.insert(arm.to_string(), spec);
    }
    let description = if arms_wanted.contains(&"tswa") {
        "SGD vs SWA vs DSWA vs TSWA from a 30-epoch backbone; toy CNN on a 10k CIFAR-10 subset \
         standing in for the CIFAR-100 runs"
    } else {
        "SGD vs SWA vs DSWA from a 30-epoch non-converged backbone; toy CNN, 10k CIFAR-10 subset, no momentum"
    };
    Bundle {
        name: name.into(),
        description: description.into(),
        seeds: vec![0, 1, 2],
        base: Some(base),
        arms,
        probe: None,
        quad: None,
        provenance: p,
    }
}

/// PSWA against its own backbone SGD, epochs scaled by 1/5.
fn fig4_desk() -> Bundle {
    let mut p = Provenance::default();
    let epochs = CONVERGED_L / FIG4_SCALE as u32;
    p.scaled("base.schedule.epochs", "L=160 × 1/5");
    let schedule = backbone_schedule(epochs, &mut p);
    let optimizer = momentum_sgd(&mut p, "SGD momentum of the PSWA comparison", "weight decay of the PSWA comparison", true);
    let eval = EvalFlags {
        test_every_epoch: true,
        average_every_epoch: true,
    };
    let base = toy_cnn_template(Some(DESK_PER_CLASS), optimizer, schedule, eval, &mut p);
    p.decision("seeds", "3 seeds for mean curves");
    p.scaled("arms.sgd.total_epochs", "L=160 × 1/5")
        .scaled("arms.pswa.total_epochs", "L=160 × 1/5")
        .scaled("arms.pswa.controller.start_epoch", "starts after epoch 40 × 1/5")
        .scaled("arms.pswa.controller.period_epochs", "period of 20 epochs × 1/5")
        .reported("arms.pswa.controller.samples_per_epoch", "one weight sample per epoch");
    let mut arms = BTreeMap::new();
    arms.insert(
        "sgd".to_string(),
        ArmSpec {
            total_epochs: epochs as u64,
            controller: ControllerChoice::Sgd,
        },
    );
    arms.insert(
        "pswa".to_string(),
        ArmSpec {
            total_epochs: epochs as u64,
            controller: ControllerChoice::Pswa {
                start_epoch: 40 / FIG4_SCALE,
                period_epochs: 20 / FIG4_SCALE,
                samples_per_epoch: 1,
            },
        },
    );
    Bundle {
        name: "fig4-desk".into(),
        description: "PSWA vs its backbone SGD (momentum 0.9, wd 5e-4), L=32, PSWA from epoch 8 with period 4; \
                      toy CNN, 10k CIFAR-10 subset"
            .into(),
        seeds: vec![0, 1, 2],
        base: Some(base),
        arms,
        probe: None,
        quad: None,
        provenance: p,
    }
}

/// Line probe between the SWA and DSWA solutions of the table3-desk setup.
fn fig5_probe() -> Bundle {
    let mut b = chained_swa_preset("fig5-probe", &["swa", "dswa"], 10);
    b.seeds = vec![0];
    b.provenance.decision("seeds", "one seed, as in a single probe figure");
    b.provenance
        .decision("probe.t_min", "probe grid starts a quarter of the segment before the SWA solution")
        .decision("probe.t_max", "probe grid ends a quarter of the segment past the DSWA solution")
        .decision("probe.t_count", "21 evenly spaced points");
    b.probe = Some(ProbeStep {
        arm_a: "swa".into(),
        arm_b: "dswa".into(),
        t_min: -0.25,
        t_max: 1.25,
        t_count: 21,
    });
    b.description = "Train loss and test error along the line from the SWA to the DSWA solution \
                     (table3-desk setup, seed 0); toy CNN on CIFAR-10 stands in for the CIFAR-100 networks"
        .into();
    b
}

/// Final-iterate vs tail-average variance on a 1-D noisy quadratic.
fn quad_variance() -> Bundle {
    let mut p = Provenance::default();
    p.decision("quad.lr", "step size with a fast, stable contraction (1 − lr·h = 0.9)")
        .decision("quad.h", "unit curvature")
        .decision("quad.sigma", "unit gradient-noise standard deviation")
        .decision("quad.steps", "far past the ~10/(lr·h) steps needed to reach stationarity")
        .decision("quad.windows", "tail windows from no averaging up to 50 iterates")
        .decision("quad.seeds", "200 independent runs per variance estimate");
    Bundle {
        name: "quad-variance".into(),
        description: "Variance of the final SGD iterate vs tail averages on a 1-D noisy quadratic".into(),
        seeds: Vec::new(),
        base: None,
        arms: BTreeMap::new(),
        probe: None,
        quad: Some(QuadStep {
            lr: 0.1,
            h: vec![1.0],
            sigma: 1.0,
            steps: 2000,
            windows: vec![1, 5, 20, 50],
            seeds: 200,
        }),
        provenance: p,
    }
}
