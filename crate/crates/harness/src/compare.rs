//! Aligning metrics of several runs and summarizing final accuracy across seeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::run::{fmt_g, RunSummary, METRICS_FILE, METRICS_HEADER};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: u64,
    pub lr: f64,
    pub train_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub controller_tag: String,
    pub wallclock_s: f64,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| HarnessError::format(path, e.to_string()))?;
    let header = reader.headers().map_err(|e| HarnessError::format(path, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(HarnessError::format(path, format!("header is not `{METRICS_HEADER}`")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::format(path, e.to_string()))?;
        let line = i + 2;
        let bad = |col: &str| HarnessError::format(path, format!("line {line}: bad {col}"));
        let num = |j: usize, col: &str| -> Result<f64> { rec[j].parse::<f64>().map_err(|_| bad(col)) };
        let opt = |j: usize, col: &str| -> Result<Option<f64>> {
            if rec[j].is_empty() {
                Ok(None)
            } else {
                num(j, col).map(Some)
            }
        };
        rows.push(MetricsRow {
            epoch: rec[0].parse().map_err(|_| bad("epoch"))?,
            lr: num(1, "lr")?,
            train_loss: opt(2, "train_loss")?,
            train_acc: opt(3, "train_acc")?,
            test_acc: opt(4, "test_acc")?,
            controller_tag: rec[5].to_string(),
            wallclock_s: num(6, "wallclock_s")?,
        });
    }
    Ok(rows)
}

/// Final test accuracy of one group of runs, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalSummary {
    pub label: String,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub values: Vec<f64>,
}

impl FinalSummary {
    /// `mean±std` with two decimals, e.g. `67.27±0.29`.
    pub fn formatted(&self) -> String {
        format!("{:.2}±{:.2}", self.mean, self.std)
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `label:tag` for every (group, controller tag) pair with test accuracy.
    pub columns: Vec<String>,
    pub epochs: Vec<u64>,
    /// `cells[i][j]`: mean test accuracy at `epochs[i]` for `columns[j]`
    /// across the runs of the group that logged it.
    pub cells: Vec<Vec<Option<f64>>>,
    pub finals: Vec<FinalSummary>,
}

struct Run {
    summary: RunSummary,
    rows: Vec<MetricsRow>,
}

/// Run directories under `dir`: `dir` itself if it holds metrics, else every
/// descendant that does, in path order.
fn expand(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(METRICS_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&d) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                if p.join(METRICS_FILE).is_file() {
                    found.push(p);
                } else {
                    stack.push(p);
                }
            }
        }
    }
    if found.is_empty() {
        return Err(HarnessError::format(dir, format!("no {METRICS_FILE} in this directory or below it")));
    }
    found.sort();
    Ok(found)
}

/// Compare completed runs. Each path may be a run directory or a directory
/// containing run directories (a bundle output). Runs are grouped by arm;
/// when the runs come from differently named configs the group label is
/// `name/arm`.
pub fn compare_runs(dirs: &[PathBuf]) -> Result<Comparison> {
    if dirs.is_empty() {
        return Err(HarnessError::usage("compare needs at least one directory"));
    }
    let mut runs = Vec::new();
    for d in dirs {
        for run_dir in expand(d)? {
            let summary = RunSummary::load(&run_dir)?;
            let rows = read_metrics(&run_dir.join(METRICS_FILE))?;
            runs.push(Run { summary, rows });
        }
    }
    let names: BTreeSet<&str> = runs.iter().map(|r| r.summary.name.as_str()).collect();
    let label = |s: &RunSummary| {
        if names.len() > 1 {
            format!("{}/{}", s.name, s.arm)
        } else {
            s.arm.clone()
        }
    };

    // (column, epoch) -> values across runs
    let mut acc: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    let mut column_order: Vec<String> = Vec::new();
    let mut finals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in &runs {
        let group = label(&run.summary);
        for row in &run.rows {
            if let Some(ta) = row.test_acc {
                let col = format!("{group}:{}", row.controller_tag);
                if !column_order.contains(&col) {
                    column_order.push(col.clone());
                }
                acc.entry((col, row.epoch)).or_default().push(ta);
            }
        }
        finals.entry(group).or_default().push(run.summary.final_test_acc * 100.0);
    }
    column_order.sort();
    let epochs: Vec<u64> = acc.keys().map(|(_, e)| *e).collect::<BTreeSet<_>>().into_iter().collect();
    let cells = epochs
        .iter()
        .map(|&e| {
            column_order
                .iter()
                .map(|c| acc.get(&(c.clone(), e)).map(|v| v.iter().sum::<f64>() / v.len() as f64))
                .collect()
        })
        .collect();
    let finals = finals
        .into_iter()
        .map(|(label, values)| {
            let (mean, std) = mean_std(&values);
            FinalSummary {
                label,
                runs: values.len(),
                mean,
                std,
                values,
            }
        })
        .collect();
    Ok(Comparison {
        columns: column_order,
        epochs,
        cells,
        finals,
    })
}

impl Comparison {
    /// Mean test accuracy at `epoch` for `column`.
    pub fn cell(&self, epoch: u64, column: &str) -> Option<f64> {
        let i = self.epochs.iter().position(|&e| e == epoch)?;
        let j = self.columns.iter().position(|c| c == column)?;
        self.cells[i][j]
    }

    pub fn final_for(&self, label: &str) -> Option<&FinalSummary> {
        self.finals.iter().find(|f| f.label == label)
    }

    /// TA-by-epoch table: `epoch,<column>...`, blank where absent.
    pub fn ta_csv(&self) -> String {
        let mut out = String::from("epoch");
        for c in &self.columns {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (e, row) in self.epochs.iter().zip(&self.cells) {
            let _ = write!(out, "{e}");
            for v in row {
                let _ = write!(out, ",{}", v.map(fmt_g).unwrap_or_default());
            }
            out.push('\n');
        }
        out
    }

    /// `label,runs,mean,std,formatted` with accuracies in percent.
    pub fn finals_csv(&self) -> String {
        let mut out = String::from("label,runs,mean_pct,std_pct,formatted\n");
        for f in &self.finals {
            let _ = writeln!(out, "{},{},{},{},{}", f.label, f.runs, fmt_g(f.mean), fmt_g(f.std), f.formatted());
        }
        out
    }

    pub fn pretty(&self) -> String {
        let mut out = String::new();
        let width = self.finals.iter().map(|f| f.label.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(out, "{:<width$}  runs  final TA (%)", "arm");
        for f in &self.finals {
            let _ = writeln!(out, "{:<width$}  {:>4}  {}", f.label, f.runs, f.formatted());
        }
        if !self.epochs.is_empty() {
            out.push('\n');
            let widths: Vec<usize> = self.columns.iter().map(|c| c.len().max(8)).collect();
            let _ = write!(out, "{:>5}", "epoch");
            for (c, w) in self.columns.iter().zip(&widths) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
            for (e, row) in self.epochs.iter().zip(&self.cells) {
                let _ = write!(out, "{e:>5}");
                for (v, w) in row.iter().zip(&widths) {
                    let cell = v.map(|x| format!("{:.2}", x * 100.0)).unwrap_or_else(|| "-".into());
                    let _ = write!(out, "  {cell:>w$}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Directory name used for runs inside a bundle output.
pub fn run_dir_name(seed: u64, arm: &str) -> PathBuf {
    PathBuf::from(format!("seed{seed}")).join(arm)
}
