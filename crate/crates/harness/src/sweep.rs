//! Running a [`Bundle`]: every seed and arm, then the comparison, probe and
//! quadratic steps.
//!
//! Output layout under the bundle directory:
//!
//! ```text
//! bundle.toml              the bundle config, annotated
//! seed<S>/<arm>/           one run directory per seed and arm
//! ta_by_epoch.csv          mean test accuracy per epoch and arm:tag column
//! final_ta.csv             final test accuracy mean±std per arm, in percent
//! report.txt               both tables, human readable
//! probe-seed<S>.csv        line probe between two arms (when configured)
//! quad.csv                 quadratic variance report (when configured)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use walab_core::landscape::{line_probe, linspace, ProbeResult};
use walab_core::quadratic::{variance_report, VarianceReport};

use crate::bundle::Bundle;
use crate::compare::{compare_runs, run_dir_name, Comparison};
use crate::datasets::load_datasets;
use crate::error::{HarnessError, Result};
use crate::plan::TrainPlan;
use crate::run::{load_final, RunOptions, RunSummary, Workspace, CONFIG_FILE};

pub const BUNDLE_FILE: &str = "bundle.toml";
pub const TA_FILE: &str = "ta_by_epoch.csv";
pub const FINAL_TA_FILE: &str = "final_ta.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const QUAD_FILE: &str = "quad.csv";

pub fn probe_file_name(seed: u64) -> String {
    format!("probe-seed{seed}.csv")
}

#[derive(Debug)]
pub struct BundleReport {
    pub dir: PathBuf,
    pub runs: Vec<(PathBuf, RunSummary)>,
    pub comparison: Option<Comparison>,
    pub probes: Vec<(u64, ProbeResult)>,
    pub quad: Vec<VarianceReport>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn run_bundle(bundle: &Bundle, out_root: &Path, opts: &RunOptions) -> Result<BundleReport> {
    bundle.validate()?;
    fs::create_dir_all(out_root).map_err(|e| HarnessError::io(out_root, e))?;
    write(&out_root.join(BUNDLE_FILE), &bundle.annotated_toml())?;

    let plans = bundle.plans()?;
    let mut ws = Workspace::new(opts.clone());
    let mut runs = Vec::new();
    for plan in &plans {
        let dir = out_root.join(run_dir_name(plan.seed, &plan.arm));
        let summary = ws.run(plan, &dir, &bundle.provenance.for_arm(&plan.arm))?;
        runs.push((dir, summary));
    }

    let comparison = if runs.is_empty() {
        None
    } else {
        let dirs: Vec<PathBuf> = runs.iter().map(|(d, _)| d.clone()).collect();
        let c = compare_runs(&dirs)?;
        write(&out_root.join(TA_FILE), &c.ta_csv())?;
        write(&out_root.join(FINAL_TA_FILE), &c.finals_csv())?;
        write(&out_root.join(REPORT_FILE), &format!("{}\n{}\n\n{}", bundle.name, bundle.description, c.pretty()))?;
        Some(c)
    };

    let mut probes = Vec::new();
    if let Some(p) = &bundle.probe {
        let ts = linspace(p.t_min, p.t_max, p.t_count);
        for &seed in &bundle.seeds {
            let find = |arm: &str| {
                plans
                    .iter()
                    .find(|q| q.seed == seed && q.arm == arm)
                    .expect("validated probe arms exist")
            };
            let plan = find(&p.arm_a);
            let dir_a = out_root.join(run_dir_name(seed, &p.arm_a));
            let dir_b = out_root.join(run_dir_name(seed, &find(&p.arm_b).arm));
            let result = probe_runs(plan, &dir_a, &dir_b, &ts, ws.data_dir())?;
            let path = out_root.join(probe_file_name(seed));
            let mut buf = Vec::new();
            result.write_csv(&mut buf)?;
            fs::write(&path, buf).map_err(|e| HarnessError::io(&path, e))?;
            probes.push((seed, result));
        }
    }

    let mut quad = Vec::new();
    if let Some(q) = &bundle.quad {
        let mut csv = format!("{}\n", VarianceReport::CSV_HEADER);
        for &w in &q.windows {
            let report = variance_report(&q.spec(w)?, q.seeds)?;
            csv.push_str(&report.csv_row());
            csv.push('\n');
            quad.push(report);
        }
        write(&out_root.join(QUAD_FILE), &csv)?;
    }

    Ok(BundleReport {
        dir: out_root.to_path_buf(),
        runs,
        comparison,
        probes,
        quad,
    })
}

/// Line probe between the final weights of two completed runs of `plan`'s
/// model, evaluated on `plan`'s data.
pub fn probe_runs(plan: &TrainPlan, dir_a: &Path, dir_b: &Path, ts: &[f64], data_dir: &Path) -> Result<ProbeResult> {
    let model = plan.model.build()?;
    let w_a = load_final(dir_a, &model)?;
    let w_b = load_final(dir_b, &model)?;
    let (train, test) = load_datasets(&plan.dataset, data_dir, plan.seeds().data)?;
    Ok(line_probe(&model, &w_a, &w_b, ts, &train, &test)?)
}

/// The plan snapshot stored in a run directory.
pub fn load_run_plan(run_dir: &Path) -> Result<TrainPlan> {
    let path = run_dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    TrainPlan::from_toml(&text).map_err(|e| HarnessError::format(&path, e.to_string()))
}
