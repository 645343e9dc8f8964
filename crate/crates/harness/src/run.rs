//! Executing one [`TrainPlan`] into a run directory.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.toml        plan snapshot, written before training starts
//! metrics.csv        one row per epoch and controller tag, flushed as produced
//! checkpoints/*.ckpt init, controller boundaries, final
//! summary.json       written on success
//! failure.json       written instead of summary.json when the run fails
//! ```

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use walab_core::averaging::{
    dswa_run, pswa_run, sgd_baseline_run, swa_run, tswa_run, EvalPolicy, MetricsRecord, PswaPlan, RunObserver,
    Session, SwaPlan,
};
use walab_core::data::BatchStream;
use walab_core::nn::{ModelSpec, Objective};
use walab_core::schedule::{ScheduleKind, ScheduleSpec};
use walab_core::WeightVector;

use crate::bundle::{annotate, Provenance};
use crate::datasets::{check_compatible, load_datasets, resolve_data_dir};
use crate::error::{HarnessError, Result};
use crate::plan::{ChcLr, ControllerChoice, TrainPlan};

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_HEADER: &str = "epoch,lr,train_loss,train_acc,test_acc,controller_tag,wallclock_s";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FAILURE_FILE: &str = "failure.json";
pub const LOCK_FILE: &str = ".walab.lock";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const CHECKPOINT_EXT: &str = "ckpt";

/// `%g` with 6 significant digits, as C's printf prints it.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_g(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

pub fn metrics_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.epoch,
        fmt_g(r.lr),
        opt_g(r.train_loss),
        opt_g(r.train_acc),
        opt_g(r.test_acc),
        r.controller_tag,
        fmt_g(r.wallclock_s)
    )
}

pub fn checkpoint_path(run_dir: &Path, name: &str) -> PathBuf {
    run_dir.join(CHECKPOINT_DIR).join(format!("{name}.{CHECKPOINT_EXT}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub arm: String,
    pub seed: u64,
    pub controller: String,
    pub total_epochs: u64,
    pub steps: u64,
    pub samples_averaged: u64,
    pub param_count: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub final_test_acc: f64,
    pub final_test_loss: f64,
    pub wallclock_s: f64,
    /// Relative to the run directory.
    pub final_checkpoint: String,
}

impl RunSummary {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| HarnessError::format(run_dir, format!("no readable {SUMMARY_FILE} ({e}); is the run complete?")))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::format(&path, e.to_string()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Dataset root; resolved through [`resolve_data_dir`] when absent.
    pub data_dir: Option<PathBuf>,
    /// Print one progress line per metrics row to stderr.
    pub progress: bool,
}

/// Exclusive ownership of a run directory for the life of the guard.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id()).map_err(|e| HarnessError::io(&path, e))?;
                Ok(DirLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(HarnessError::usage(format!(
                "{} is in use by another run; delete {} if no run is active",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(HarnessError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Streams metrics rows to CSV and checkpoints to disk as a controller
/// produces them, so a failed run keeps everything up to the failure.
struct RunLog {
    csv: BufWriter<File>,
    dir: PathBuf,
    progress: Option<String>,
}

impl RunLog {
    fn create(dir: &Path, progress: Option<String>) -> Result<Self> {
        let path = dir.join(METRICS_FILE);
        let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        let ckpt = dir.join(CHECKPOINT_DIR);
        fs::create_dir_all(&ckpt).map_err(|e| HarnessError::io(&ckpt, e))?;
        let mut csv = BufWriter::new(file);
        writeln!(csv, "{METRICS_HEADER}").and_then(|_| csv.flush()).map_err(|e| HarnessError::io(&path, e))?;
        Ok(Self {
            csv,
            dir: dir.to_path_buf(),
            progress,
        })
    }
}

impl RunObserver for RunLog {
    fn on_record(&mut self, r: &MetricsRecord) -> walab_core::Result<()> {
        writeln!(self.csv, "{}", metrics_row(r))?;
        self.csv.flush()?;
        if let Some(label) = &self.progress {
            eprintln!(
                "[{label}] {:<9} epoch {:>3}  lr {:<8} loss {:<8} test {:<8} {:>7.1}s",
                r.controller_tag,
                r.epoch,
                fmt_g(r.lr),
                r.train_loss.map(fmt_g).unwrap_or_else(|| "-".into()),
                r.test_acc.map(fmt_g).unwrap_or_else(|| "-".into()),
                r.wallclock_s
            );
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, name: &str, w: &WeightVector) -> walab_core::Result<()> {
        w.save(checkpoint_path(&self.dir, name))
    }
}

struct Backbone {
    weights: WeightVector,
    rows: Vec<MetricsRecord>,
}

/// Runs plans and reuses backbone prefixes between plans that share them.
///
/// Two plans share a prefix of `k` epochs when they agree on everything
/// except the controller and length, so the SGD arm of a bundle and the
/// averaging arms started from its end train the backbone once.
pub struct Workspace {
    opts: RunOptions,
    data_dir: PathBuf,
    backbones: HashMap<String, Backbone>,
}

impl Workspace {
    pub fn new(opts: RunOptions) -> Self {
        let data_dir = resolve_data_dir(opts.data_dir.as_deref());
        Self {
            opts,
            data_dir,
            backbones: HashMap::new(),
        }
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    /// Execute `plan` into `out_dir`; `prov` annotates the config snapshot.
    pub fn run(&mut self, plan: &TrainPlan, out_dir: &Path, prov: &Provenance) -> Result<RunSummary> {
        plan.validate()?;
        fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
        let _lock = DirLock::acquire(out_dir)?;
        for stale in [SUMMARY_FILE, FAILURE_FILE] {
            let _ = fs::remove_file(out_dir.join(stale));
        }
        let title = format!("{} / {} / seed {}", plan.name, plan.arm, plan.seed);
        let config = out_dir.join(CONFIG_FILE);
        fs::write(&config, annotate(&plan.to_toml(), prov, &title)).map_err(|e| HarnessError::io(&config, e))?;

        let result = self.execute(plan, out_dir);
        match &result {
            Ok(summary) => {
                let path = out_dir.join(SUMMARY_FILE);
                let text = serde_json::to_string_pretty(summary).expect("summary serializes");
                fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
            }
            Err(e) => {
                let failure = serde_json::json!({ "kind": e.kind(), "message": e.to_string() });
                let _ = fs::write(out_dir.join(FAILURE_FILE), format!("{failure:#}\n"));
            }
        }
        result
    }

    fn execute(&mut self, plan: &TrainPlan, out_dir: &Path) -> Result<RunSummary> {
        let started = Instant::now();
        let seeds = plan.seeds();
        let (train, test) = load_datasets(&plan.dataset, &self.data_dir, seeds.data)?;
        let model = plan.model.build()?;
        check_compatible(&model, &train)?;
        check_compatible(&model, &test)?;

        let label = format!("{}/{} s{}", plan.name, plan.arm, plan.seed);
        let mut log = RunLog::create(out_dir, self.opts.progress.then_some(label))?;
        let w0 = model.init_weights(seeds.init);
        log.on_checkpoint("init", &w0)?;

        let stream = BatchStream::new(&train, plan.batch_size, seeds.shuffle)?;
        let spe = stream.steps_per_epoch() as u64;
        let schedule = ScheduleSpec::new(plan.schedule, spe as usize)?;
        let eval = EvalPolicy {
            test_every_epoch: plan.eval.test_every_epoch,
            average_every_epoch: plan.eval.average_every_epoch,
            sample_test_acc: false,
            average_train_eval: false,
        };
        let (final_w, steps, samples) = {
            let mut s = Session::new(&model, stream, plan.optimizer, &mut log)
                .with_test(&test)
                .with_eval(eval);
            match plan.controller {
                ControllerChoice::Sgd => {
                    let w = self.backbone(&mut s, plan, &w0, &schedule, plan.total_epochs)?;
                    (w, plan.total_epochs * spe, 1)
                }
                ControllerChoice::Pswa {
                    start_epoch,
                    period_epochs,
                    samples_per_epoch,
                } => {
                    let mut p = PswaPlan::new(start_epoch, period_epochs, schedule)?;
                    p.samples_per_epoch = samples_per_epoch;
                    let out = pswa_run(&mut s, &w0, &p, plan.total_epochs)?;
                    (out.final_weights, out.steps, out.samples_averaged)
                }
                ref family => {
                    let (phase, stages) = family.swa_phase().expect("swa family");
                    let start = phase.start_epoch;
                    let w = self.backbone(&mut s, plan, &w0, &schedule, start)?;
                    let cycle = phase.cycle_epochs * spe;
                    let chc = ScheduleSpec::new(chc_kind(phase.lr, cycle), spe as usize)?;
                    let budget = (plan.total_epochs - start) * spe;
                    let swa = SwaPlan::new(chc, cycle, budget)?.with_tag(family.name());
                    let out = match stages {
                        1 => swa_run(&mut s, &w, &swa, start * spe)?,
                        2 => dswa_run(&mut s, &w, &swa, start * spe)?,
                        _ => tswa_run(&mut s, &w, &swa, start * spe)?,
                    };
                    (out.final_weights, start * spe + out.steps, out.samples_averaged)
                }
            }
        };
        log.on_checkpoint("final", &final_w)?;
        let final_eval = model.evaluate(&final_w, &test)?;
        Ok(RunSummary {
            name: plan.name.clone(),
            arm: plan.arm.clone(),
            seed: plan.seed,
            controller: plan.controller.name().into(),
            total_epochs: plan.total_epochs,
            steps,
            samples_averaged: samples,
            param_count: model.param_count(),
            train_samples: train.len(),
            test_samples: test.len(),
            final_test_acc: final_eval.accuracy,
            final_test_loss: final_eval.loss,
            wallclock_s: started.elapsed().as_secs_f64(),
            final_checkpoint: format!("{CHECKPOINT_DIR}/final.{CHECKPOINT_EXT}"),
        })
    }

    /// Plain training for `epochs` epochs from `w0`, replayed from the cache
    /// when an earlier plan already trained the same prefix.
    fn backbone(
        &mut self,
        s: &mut Session<'_, ModelSpec>,
        plan: &TrainPlan,
        w0: &WeightVector,
        schedule: &ScheduleSpec,
        epochs: u64,
    ) -> Result<WeightVector> {
        if epochs == 0 {
            return Ok(w0.clone());
        }
        let key = backbone_key(plan, epochs);
        if let Some(b) = self.backbones.get(&key) {
            for r in &b.rows {
                s.observer.on_record(r)?;
            }
            s.observer.on_checkpoint(&format!("sgd-epoch{epochs}"), &b.weights)?;
            return Ok(b.weights.clone());
        }
        let out = sgd_baseline_run(s, w0, schedule, 0, epochs, "sgd")?;
        self.backbones.insert(
            key,
            Backbone {
                weights: out.final_weights.clone(),
                rows: out.per_epoch_metrics,
            },
        );
        Ok(out.final_weights)
    }
}

fn chc_kind(lr: ChcLr, cycle_len: u64) -> ScheduleKind {
    match lr {
        ChcLr::Cyclic { high, low } => ScheduleKind::CyclicLinear { cycle_len, high, low },
        ChcLr::Constant { lr } => ScheduleKind::Constant { lr },
    }
}

/// Everything that determines the first `epochs` epochs of plain training.
fn backbone_key(plan: &TrainPlan, epochs: u64) -> String {
    serde_json::to_string(&(
        &plan.model,
        &plan.dataset,
        &plan.optimizer,
        &plan.schedule,
        &plan.eval,
        plan.batch_size,
        plan.seed,
        epochs,
    ))
    .expect("plan parts serialize")
}

/// Execute one plan into `out_dir` with a fresh workspace.
pub fn run_plan(plan: &TrainPlan, out_dir: &Path, opts: &RunOptions) -> Result<RunSummary> {
    Workspace::new(opts.clone()).run(plan, out_dir, &Provenance::default())
}

/// Final weights of a completed run, checked against `model`.
pub fn load_final(run_dir: &Path, model: &dyn Objective) -> Result<WeightVector> {
    let w = WeightVector::load(checkpoint_path(run_dir, "final"))?;
    if w.layout() != model.layout() {
        return Err(walab_core::Error::Layout {
            expected: model.layout(),
            expected_len: model.param_count(),
            found: w.layout(),
            found_len: w.len(),
        }
        .into());
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_g_matches_printf() {
        let cases = [
            (0.05, "0.05"),
            (0.1, "0.1"),
            (1.0, "1"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (2.345678912, "2.34568"),
            (-0.5, "-0.5"),
            (0.9999996, "1"),
            (999999.5, "1e+06"),
            (0.0, "0"),
            (100.0, "100"),
            (0.56789012, "0.56789"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g(x), want, "{x}");
        }
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(HarnessError::Usage(_))));
        drop(lock);
        DirLock::acquire(dir.path()).unwrap();
    }
}
