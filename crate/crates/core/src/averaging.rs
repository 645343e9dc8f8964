//! Training controllers: plain SGD, SWA, its chained variants DSWA/TSWA, and
//! periodic SWA (PSWA).
//!
//! Every controller walks a single global iteration counter. Iteration `g`
//! draws batch `g mod S` of epoch `g div S` (`S` = steps per epoch) from the
//! session's [`BatchStream`], so stages that continue from a given iteration
//! see exactly the data a single long run would have seen.
//!
//! SWA seeds its running mean with the incoming weights, so after `n`
//! iterations with cycle `c` the output averages `n/c + 1` points: the start
//! point and the weights after every `c`-th step. Every controller starts its
//! optimizer from zeroed buffers, and PSWA zeroes them again whenever it
//! replaces the live weights by a window mean.

use std::time::Instant;

use crate::data::{BatchStream, Dataset};
use crate::error::{Error, Result};
use crate::ndcore::{RunningAverage, WeightVector};
use crate::nn::Objective;
use crate::optim::{Optimizer, OptimizerConfig};
use crate::schedule::ScheduleSpec;

/// One per-epoch log row. Unmeasured quantities are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: u64,
    pub lr: f64,
    pub train_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub controller_tag: String,
    pub wallclock_s: f64,
}

/// Test accuracy of one weight sample folded into an SWA average.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ControllerOutput {
    pub final_weights: WeightVector,
    /// Live-weight rows, strictly increasing in epoch.
    pub per_epoch_metrics: Vec<MetricsRecord>,
    /// Rows for averaged weights (tag suffixed `-avg`), strictly increasing in epoch.
    pub averaged_metrics: Vec<MetricsRecord>,
    pub sampled_weights_metrics: Vec<SampleRecord>,
    /// Optimizer steps taken.
    pub steps: u64,
    /// Weight vectors folded into the final average (1 for plain SGD).
    pub samples_averaged: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalPolicy {
    /// Evaluate live weights on the test split at every epoch end.
    pub test_every_epoch: bool,
    /// Also evaluate running averages at every epoch end, not just at stage ends.
    pub average_every_epoch: bool,
    /// Evaluate each SWA sample on the test split when it is taken.
    pub sample_test_acc: bool,
    /// Evaluate averaged weights on the train split too.
    pub average_train_eval: bool,
}

impl Default for EvalPolicy {
    fn default() -> Self {
        Self {
            test_every_epoch: true,
            average_every_epoch: false,
            sample_test_acc: false,
            average_train_eval: false,
        }
    }
}

/// Hooks for streaming progress out of a controller.
pub trait RunObserver {
    fn on_record(&mut self, _rec: &MetricsRecord) -> Result<()> {
        Ok(())
    }

    fn on_epoch_weights(&mut self, _tag: &str, _epoch: u64, _w: &WeightVector) {}

    fn on_checkpoint(&mut self, _name: &str, _w: &WeightVector) -> Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

pub struct Session<'a, M: Objective + ?Sized> {
    pub model: &'a M,
    pub train: BatchStream<'a>,
    pub test: Option<&'a Dataset>,
    pub optimizer: OptimizerConfig,
    pub eval: EvalPolicy,
    pub observer: &'a mut dyn RunObserver,
    pub started: Instant,
}

impl<'a, M: Objective + ?Sized> Session<'a, M> {
    pub fn new(model: &'a M, train: BatchStream<'a>, optimizer: OptimizerConfig, observer: &'a mut dyn RunObserver) -> Self {
        Self {
            model,
            train,
            test: None,
            optimizer,
            eval: EvalPolicy::default(),
            observer,
            started: Instant::now(),
        }
    }

    pub fn with_test(mut self, test: &'a Dataset) -> Self {
        self.test = Some(test);
        self
    }

    pub fn with_eval(mut self, eval: EvalPolicy) -> Self {
        self.eval = eval;
        self
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.train.steps_per_epoch() as u64
    }

    fn test_acc(&self, w: &WeightVector) -> Result<Option<f64>> {
        match self.test {
            Some(t) => Ok(Some(self.model.evaluate(w, t)?.accuracy)),
            None => Ok(None),
        }
    }

    fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }
}

#[derive(Default)]
struct EpochStats {
    loss: f64,
    correct: f64,
    samples: usize,
}

/// Shared inner loop: batch lookup, one optimizer step, epoch bookkeeping.
struct Stepper {
    order: Option<(u64, Vec<usize>)>,
    stats: EpochStats,
}

impl Stepper {
    fn new() -> Self {
        Self {
            order: None,
            stats: EpochStats::default(),
        }
    }

    /// Performs global iteration `g`; returns `Some(epoch)` if `g` closed an epoch.
    fn step<M: Objective + ?Sized>(
        &mut self,
        s: &Session<'_, M>,
        w: &mut WeightVector,
        opt: &mut Optimizer,
        g: u64,
        lr: f64,
    ) -> Result<Option<u64>> {
        let spe = s.steps_per_epoch();
        let (epoch, step) = (g / spe, (g % spe) as usize);
        if self.order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            self.order = Some((epoch, s.train.epoch_order(epoch)));
        }
        let batch = s.train.batch_in(&self.order.as_ref().unwrap().1, step)?;
        let r = s.model.step(w, &batch).map_err(|e| e.at_iteration(g))?;
        opt.step(w, &r.grad, lr).map_err(|e| e.at_iteration(g))?;
        let n = batch.len();
        self.stats.loss += r.loss * n as f64;
        self.stats.correct += r.accuracy * n as f64;
        self.stats.samples += n;
        Ok((g + 1).is_multiple_of(spe).then_some((g + 1) / spe))
    }

    fn live_record<M: Objective + ?Sized>(
        &mut self,
        s: &mut Session<'_, M>,
        w: &WeightVector,
        epoch: u64,
        lr: f64,
        tag: &str,
    ) -> Result<MetricsRecord> {
        let stats = std::mem::take(&mut self.stats);
        let test_acc = if s.eval.test_every_epoch { s.test_acc(w)? } else { None };
        let n = stats.samples.max(1) as f64;
        let rec = MetricsRecord {
            epoch,
            lr,
            train_loss: (stats.samples > 0).then_some(stats.loss / n),
            train_acc: (stats.samples > 0).then_some((stats.correct / n).clamp(0.0, 1.0)),
            test_acc,
            controller_tag: tag.to_string(),
            wallclock_s: s.elapsed(),
        };
        s.observer.on_record(&rec)?;
        s.observer.on_epoch_weights(tag, epoch, w);
        Ok(rec)
    }
}

fn averaged_record<M: Objective + ?Sized>(
    s: &mut Session<'_, M>,
    w: &WeightVector,
    epoch: u64,
    lr: f64,
    tag: &str,
) -> Result<MetricsRecord> {
    let (train_loss, train_acc) = if s.eval.average_train_eval {
        let e = s.model.evaluate(w, s.train.dataset())?;
        (Some(e.loss), Some(e.accuracy))
    } else {
        (None, None)
    };
    let rec = MetricsRecord {
        epoch,
        lr,
        train_loss,
        train_acc,
        test_acc: s.test_acc(w)?,
        controller_tag: format!("{tag}-avg"),
        wallclock_s: s.elapsed(),
    };
    s.observer.on_record(&rec)?;
    Ok(rec)
}

fn check_start<M: Objective + ?Sized>(s: &Session<'_, M>, w: &WeightVector) -> Result<()> {
    if w.layout() != s.model.layout() || w.len() != s.model.param_count() {
        return Err(Error::Layout {
            expected: s.model.layout(),
            expected_len: s.model.param_count(),
            found: w.layout(),
            found_len: w.len(),
        });
    }
    Ok(())
}

/// Plain training for epochs `[start_epoch, end_epoch)` under `schedule`,
/// indexed by global iteration.
pub fn sgd_baseline_run<M: Objective + ?Sized>(
    s: &mut Session<'_, M>,
    w_init: &WeightVector,
    schedule: &ScheduleSpec,
    start_epoch: u64,
    end_epoch: u64,
    tag: &str,
) -> Result<ControllerOutput> {
    check_start(s, w_init)?;
    let spe = s.steps_per_epoch();
    let mut w = w_init.clone();
    let mut opt = s.optimizer.init(&w)?;
    let mut stepper = Stepper::new();
    let mut metrics = Vec::new();
    let mut steps = 0;
    for g in start_epoch * spe..end_epoch.max(start_epoch) * spe {
        let lr = schedule.lr_at(g);
        steps += 1;
        if let Some(epoch) = stepper.step(s, &mut w, &mut opt, g, lr)? {
            metrics.push(stepper.live_record(s, &w, epoch, lr, tag)?);
        }
    }
    if end_epoch > start_epoch {
        s.observer.on_checkpoint(&format!("{tag}-epoch{end_epoch}"), &w)?;
    }
    Ok(ControllerOutput {
        final_weights: w,
        per_epoch_metrics: metrics,
        averaged_metrics: Vec::new(),
        sampled_weights_metrics: Vec::new(),
        steps,
        samples_averaged: 1,
    })
}

/// Inputs of one SWA procedure.
#[derive(Debug, Clone)]
pub struct SwaPlan {
    /// Indexed by the local step `0..n`, so cyclic schedules restart with
    /// each procedure.
    pub schedule: ScheduleSpec,
    pub cycle_len: u64,
    pub total_iters: u64,
    pub tag: String,
}

impl SwaPlan {
    pub fn new(schedule: ScheduleSpec, cycle_len: u64, total_iters: u64) -> Result<Self> {
        let plan = Self {
            schedule,
            cycle_len,
            total_iters,
            tag: "swa".into(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    fn validate(&self) -> Result<()> {
        let (c, n) = (self.cycle_len, self.total_iters);
        if c == 0 || n < c || n % c != 0 {
            return Err(Error::spec(format!(
                "SWA needs c ≥ 1, n ≥ c and n mod c = 0 (c = {c}, n = {n})"
            )));
        }
        Ok(())
    }

    fn split(&self, parts: u64) -> Result<SwaPlan> {
        if !self.total_iters.is_multiple_of(parts) {
            return Err(Error::spec(format!(
                "{} iterations cannot be split into {parts} equal SWA stages",
                self.total_iters
            )));
        }
        let stage = SwaPlan {
            total_iters: self.total_iters / parts,
            ..self.clone()
        };
        stage.validate()?;
        Ok(stage)
    }
}

/// One SWA procedure starting at global iteration `start_iteration`.
pub fn swa_run<M: Objective + ?Sized>(
    s: &mut Session<'_, M>,
    w_init: &WeightVector,
    plan: &SwaPlan,
    start_iteration: u64,
) -> Result<ControllerOutput> {
    plan.validate()?;
    check_start(s, w_init)?;
    let mut w = w_init.clone();
    let mut avg = RunningAverage::seeded(&w);
    let mut opt = s.optimizer.init(&w)?;
    let mut stepper = Stepper::new();
    let mut out = ControllerOutput {
        final_weights: w_init.clone(),
        per_epoch_metrics: Vec::new(),
        averaged_metrics: Vec::new(),
        sampled_weights_metrics: Vec::new(),
        steps: 0,
        samples_averaged: 0,
    };
    let spe = s.steps_per_epoch();
    let mut lr = plan.schedule.lr_at(0);
    for i in 1..=plan.total_iters {
        let g = start_iteration + i - 1;
        lr = plan.schedule.lr_at(i - 1);
        let epoch_end = stepper.step(s, &mut w, &mut opt, g, lr)?;
        out.steps += 1;
        if i % plan.cycle_len == 0 {
            avg = avg.update(&w)?;
            let test_acc = if s.eval.sample_test_acc { s.test_acc(&w)? } else { None };
            out.sampled_weights_metrics.push(SampleRecord {
                iteration: g + 1,
                epoch: (g + 1) / spe,
                test_acc,
            });
        }
        if let Some(epoch) = epoch_end {
            out.per_epoch_metrics.push(stepper.live_record(s, &w, epoch, lr, &plan.tag)?);
            if s.eval.average_every_epoch && i < plan.total_iters {
                out.averaged_metrics.push(averaged_record(s, avg.mean(), epoch, lr, &plan.tag)?);
            }
        }
    }
    let end_epoch = (start_iteration + plan.total_iters) / spe;
    out.averaged_metrics.push(averaged_record(s, avg.mean(), end_epoch, lr, &plan.tag)?);
    s.observer.on_checkpoint(&format!("{}-epoch{end_epoch}", plan.tag), avg.mean())?;
    out.samples_averaged = avg.count();
    out.final_weights = avg.into_mean();
    Ok(out)
}

/// `stages` SWA procedures of `plan.total_iters / stages` iterations each,
/// each seeded with the previous stage's average.
pub fn chained_swa_run<M: Objective + ?Sized>(
    s: &mut Session<'_, M>,
    w_init: &WeightVector,
    plan: &SwaPlan,
    stages: u64,
    start_iteration: u64,
) -> Result<ControllerOutput> {
    if stages == 0 {
        return Err(Error::spec("need at least one SWA stage"));
    }
    let stage = plan.split(stages)?;
    let mut w = w_init.clone();
    let mut merged: Option<ControllerOutput> = None;
    for k in 0..stages {
        let out = swa_run(s, &w, &stage, start_iteration + k * stage.total_iters)?;
        w = out.final_weights.clone();
        merged = Some(match merged {
            None => out,
            Some(mut acc) => {
                acc.per_epoch_metrics.extend(out.per_epoch_metrics);
                acc.averaged_metrics.extend(out.averaged_metrics);
                acc.sampled_weights_metrics.extend(out.sampled_weights_metrics);
                acc.steps += out.steps;
                acc.samples_averaged = out.samples_averaged;
                acc.final_weights = out.final_weights;
                acc
            }
        });
    }
    Ok(merged.unwrap())
}

/// Two chained SWA procedures over a total budget of `plan.total_iters`.
pub fn dswa_run<M: Objective + ?Sized>(
    s: &mut Session<'_, M>,
    w_init: &WeightVector,
    plan: &SwaPlan,
    start_iteration: u64,
) -> Result<ControllerOutput> {
    chained_swa_run(s, w_init, plan, 2, start_iteration)
}

/// Three chained SWA procedures over a total budget of `plan.total_iters`.
pub fn tswa_run<M: Objective + ?Sized>(
    s: &mut Session<'_, M>,
    w_init: &WeightVector,
    plan: &SwaPlan,
    start_iteration: u64,
) -> Result<ControllerOutput> {
    chained_swa_run(s, w_init, plan, 3, start_iteration)
}

#[derive(Debug, Clone)]
pub struct PswaPlan {
    pub start_epoch: u64,
    pub period_epochs: u64,
    pub samples_per_epoch: u64,
    /// The backbone schedule, indexed by global iteration.
    pub schedule: ScheduleSpec,
    pub tag: String,
}

impl PswaPlan {
    pub fn new(start_epoch: u64, period_epochs: u64, schedule: ScheduleSpec) -> Result<Self> {
        if period_epochs == 0 {
            return Err(Error::spec("PSWA period must be at least one epoch"));
        }
        Ok(Self {
            start_epoch,
            period_epochs,
            samples_per_epoch: 1,
            schedule,
            tag: "pswa".into(),
        })
    }
}

/// Periodic SWA over epochs `[0, total_epochs)`.
///
/// Before `start_epoch` this is plain training. From then on, consecutive
/// windows of `period_epochs` collect `samples_per_epoch` weight samples per
/// epoch into a fresh running mean; when a window closes (or training ends
/// inside one) the live weights are replaced by the window mean and the
/// optimizer buffers are zeroed. Live rows are tagged `tag`, window-mean rows
/// `tag-avg`.
pub fn pswa_run<M: Objective + ?Sized>(
    s: &mut Session<'_, M>,
    w_init: &WeightVector,
    plan: &PswaPlan,
    total_epochs: u64,
) -> Result<ControllerOutput> {
    check_start(s, w_init)?;
    if plan.period_epochs == 0 || plan.samples_per_epoch == 0 {
        return Err(Error::spec("PSWA needs period ≥ 1 and samples_per_epoch ≥ 1"));
    }
    let spe = s.steps_per_epoch();
    let k = plan.samples_per_epoch.min(spe);
    // sample after the step whose 1-based in-epoch position is ⌊(j+1)·spe/k⌋
    let sample_at: Vec<u64> = (0..k).map(|j| (j + 1) * spe / k).collect();

    let mut w = w_init.clone();
    let mut opt = s.optimizer.init(&w)?;
    let mut stepper = Stepper::new();
    let mut window: Option<RunningAverage> = None;
    let mut out = ControllerOutput {
        final_weights: w_init.clone(),
        per_epoch_metrics: Vec::new(),
        averaged_metrics: Vec::new(),
        sampled_weights_metrics: Vec::new(),
        steps: 0,
        samples_averaged: 1,
    };
    for epoch in 0..total_epochs {
        let averaging = epoch >= plan.start_epoch;
        if averaging && window.is_none() {
            window = Some(RunningAverage::empty(w.len(), w.layout())?);
        }
        let mut lr = plan.schedule.lr_at(epoch * spe);
        for step in 0..spe {
            let g = epoch * spe + step;
            lr = plan.schedule.lr_at(g);
            let epoch_end = stepper.step(s, &mut w, &mut opt, g, lr)?;
            out.steps += 1;
            if averaging && sample_at.contains(&(step + 1)) {
                window = Some(window.take().unwrap().update(&w)?);
                let test_acc = if s.eval.sample_test_acc { s.test_acc(&w)? } else { None };
                out.sampled_weights_metrics.push(SampleRecord {
                    iteration: g + 1,
                    epoch: (g + 1) / spe,
                    test_acc,
                });
            }
            if let Some(done) = epoch_end {
                out.per_epoch_metrics.push(stepper.live_record(s, &w, done, lr, &plan.tag)?);
            }
        }
        if !averaging {
            continue;
        }
        let done = epoch + 1;
        let closes = (done - plan.start_epoch).is_multiple_of(plan.period_epochs) || done == total_epochs;
        if closes {
            let avg = window.take().unwrap();
            out.averaged_metrics.push(averaged_record(s, avg.mean(), done, lr, &plan.tag)?);
            s.observer.on_checkpoint(&format!("{}-window-epoch{done}", plan.tag), avg.mean())?;
            out.samples_averaged = avg.count();
            w = avg.into_mean();
            opt.reset();
        } else if s.eval.average_every_epoch {
            let mean = window.as_ref().unwrap().mean().clone();
            out.averaged_metrics.push(averaged_record(s, &mean, done, lr, &plan.tag)?);
        }
    }
    out.final_weights = w;
    Ok(out)
}
