//! Multi-seed, multi-arm experiment configs and their TOML form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use walab_core::optim::OptimizerConfig;
use walab_core::quadratic::QuadSpec;
use walab_core::schedule::ScheduleKind;

use crate::error::{HarnessError, Result};
use crate::plan::{ControllerChoice, DatasetChoice, EvalFlags, ModelChoice, TrainPlan, DEFAULT_BATCH_SIZE};

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

/// Everything an arm shares with the other arms of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanTemplate {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub model: ModelChoice,
    pub dataset: DatasetChoice,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub eval: EvalFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub total_epochs: u64,
    pub controller: ControllerChoice,
}

/// Line probe between the final weights of two arms, run for every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeStep {
    pub arm_a: String,
    pub arm_b: String,
    pub t_min: f64,
    pub t_max: f64,
    pub t_count: usize,
}

/// Variance of final vs tail-averaged iterates on the noisy quadratic, one
/// row per window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadStep {
    pub lr: f64,
    pub h: Vec<f64>,
    pub sigma: f64,
    pub steps: u64,
    pub windows: Vec<u64>,
    pub seeds: usize,
}

impl QuadStep {
    pub fn spec(&self, window: u64) -> Result<QuadSpec> {
        Ok(QuadSpec::new(self.h.clone(), self.sigma, self.lr, self.steps, window)?)
    }
}

/// Where a config value comes from, keyed by dotted TOML path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance(BTreeMap<String, String>);

impl Provenance {
    /// Value taken from the published experiments.
    pub fn reported(&mut self, key: &str, note: &str) -> &mut Self {
        self.0.insert(key.into(), format!("reported: {note}"));
        self
    }

    /// Published value shrunk for desk scale; `note` states the factor.
    pub fn scaled(&mut self, key: &str, note: &str) -> &mut Self {
        self.0.insert(key.into(), format!("scaled: {note}"));
        self
    }

    /// Value chosen here where the source gives none.
    pub fn decision(&mut self, key: &str, note: &str) -> &mut Self {
        self.0.insert(key.into(), format!("decision: {note}"));
        self
    }

    pub fn set(&mut self, key: &str, note: String) {
        self.0.insert(key.into(), note);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Notes re-keyed for the plan of one arm: `base.x` and `arms.<arm>.x`
    /// become `x`, and `seeds` becomes `seed`.
    pub fn for_arm(&self, arm: &str) -> Provenance {
        let arm_prefix = format!("arms.{arm}.");
        let mut out = BTreeMap::new();
        for (k, v) in &self.0 {
            if let Some(rest) = k.strip_prefix("base.") {
                out.insert(rest.to_string(), v.clone());
            } else if let Some(rest) = k.strip_prefix(&arm_prefix) {
                out.insert(rest.to_string(), v.clone());
            } else if k == "seeds" {
                out.insert("seed".to_string(), v.clone());
            }
        }
        Provenance(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<PlanTemplate>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub arms: BTreeMap<String, ArmSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad: Option<QuadStep>,
    #[serde(skip)]
    pub provenance: Provenance,
}

impl Bundle {
    /// One plan per seed and arm, seeds outermost.
    pub fn plans(&self) -> Result<Vec<TrainPlan>> {
        if self.arms.is_empty() {
            return Ok(Vec::new());
        }
        let base = self
            .base
            .as_ref()
            .ok_or_else(|| HarnessError::usage(format!("bundle {}: arms need a [base] table", self.name)))?;
        let mut plans = Vec::new();
        for &seed in &self.seeds {
            for (arm, spec) in &self.arms {
                let plan = TrainPlan {
                    name: self.name.clone(),
                    arm: arm.clone(),
                    seed,
                    batch_size: base.batch_size,
                    total_epochs: spec.total_epochs,
                    model: base.model.clone(),
                    dataset: base.dataset.clone(),
                    optimizer: base.optimizer,
                    schedule: base.schedule,
                    controller: spec.controller,
                    eval: base.eval,
                };
                plan.validate()?;
                plans.push(plan);
            }
        }
        Ok(plans)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.arms.is_empty() && self.seeds.is_empty() {
            return Err(HarnessError::usage(format!("bundle {}: no seeds", self.name)));
        }
        if let Some(bad) = self.arms.keys().find(|a| a.is_empty() || a.contains(['/', '\\', '.'])) {
            return Err(HarnessError::usage(format!("arm name {bad:?} must be a plain directory name")));
        }
        self.plans()?;
        if let Some(p) = &self.probe {
            for arm in [&p.arm_a, &p.arm_b] {
                if !self.arms.contains_key(arm) {
                    return Err(HarnessError::usage(format!("probe refers to unknown arm {arm:?}")));
                }
            }
            if p.t_count == 0 || !(p.t_min < p.t_max || p.t_count == 1) {
                return Err(HarnessError::usage("probe needs t_count ≥ 1 and t_min < t_max"));
            }
        }
        if let Some(q) = &self.quad {
            if q.windows.is_empty() {
                return Err(HarnessError::usage("quad step needs at least one window"));
            }
            for &w in &q.windows {
                q.spec(w)?;
            }
        }
        Ok(())
    }

    pub fn to_value(&self) -> toml::Table {
        toml::Table::try_from(self).expect("bundles serialize to TOML")
    }

    pub fn from_value(table: toml::Table, provenance: Provenance) -> Result<Self> {
        let mut b: Bundle = table
            .try_into()
            .map_err(|e| HarnessError::usage(format!("invalid bundle config: {e}")))?;
        b.provenance = provenance;
        b.validate()?;
        Ok(b)
    }

    /// The config with a provenance comment on every annotated line.
    pub fn annotated_toml(&self) -> String {
        annotate(&toml::to_string(self).expect("bundles serialize to TOML"), &self.provenance, &self.name)
    }
}

/// Whether a config holds a bundle (seeds/arms) rather than a single plan.
pub fn is_bundle(table: &toml::Table) -> bool {
    ["seeds", "arms", "base", "quad"].iter().any(|k| table.contains_key(*k))
}

pub fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| HarnessError::usage(format!("{origin}: {e}")))
}

/// Recursively overlay `top` onto `base`; tables merge, everything else is
/// replaced. Replaced leaf paths are recorded in `touched`.
pub fn merge(base: &mut toml::Table, top: toml::Table, prefix: &str, touched: &mut Vec<String>) {
    for (k, v) in top {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t, &path, touched),
            (_, v) => {
                collect_leaves(&v, &path, touched);
                base.insert(k, v);
            }
        }
    }
}

fn collect_leaves(v: &toml::Value, path: &str, out: &mut Vec<String>) {
    match v {
        toml::Value::Table(t) => t.iter().for_each(|(k, v)| collect_leaves(v, &format!("{path}.{k}"), out)),
        _ => out.push(path.to_string()),
    }
}

/// Apply one `dotted.key=value` override. The value is parsed as a TOML
/// value when possible and taken as a bare string otherwise.
pub fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::usage(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::usage(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(HarnessError::usage(format!("override {key:?}: {part} is not a table"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(key.to_string())
}

/// Append `# note` to each `key = value` line whose dotted path has a note.
pub fn annotate(toml_text: &str, prov: &Provenance, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# walab config: {title}");
    let _ = writeln!(
        out,
        "# Value notes: `reported` = as published, `scaled` = published value shrunk for desk scale,"
    );
    let _ = writeln!(out, "# `decision` = chosen here, `override` = set on the command line or in a config file.");
    let mut table = String::new();
    for line in toml_text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').to_string();
            let _ = writeln!(out, "{line}");
            continue;
        }
        let note = trimmed.split_once(" = ").and_then(|(k, _)| {
            let k = k.trim().trim_matches('"');
            let path = if table.is_empty() { k.to_string() } else { format!("{table}.{k}") };
            prov.get(&path)
        });
        match note {
            Some(n) => {
                let _ = writeln!(out, "{line}  # {n}");
            }
            None => {
                let _ = writeln!(out, "{line}");
            }
        }
    }
    out
}

/// Lines of an emitted config that assign a number (or numeric array)
/// without a provenance note.
pub fn unannotated_numbers(annotated: &str) -> Vec<String> {
    annotated
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim_start().starts_with('['))
        .filter_map(|l| {
            let (_, value) = l.split_once(" = ")?;
            let value = value.trim();
            let numeric = value.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+')
                || (value.starts_with('[') && value[1..].trim_start().starts_with(|c: char| c.is_ascii_digit() || c == '-'));
            let noted = value.contains("  # ");
            (numeric && !noted).then(|| l.to_string())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_parses_toml_values_and_falls_back_to_strings() {
        let mut t = toml::Table::new();
        apply_set(&mut t, "a.b=3").unwrap();
        apply_set(&mut t, "a.c = 0.5").unwrap();
        apply_set(&mut t, "name=hello").unwrap();
        apply_set(&mut t, "xs=[1, 2]").unwrap();
        assert_eq!(t["a"]["b"].as_integer(), Some(3));
        assert_eq!(t["a"]["c"].as_float(), Some(0.5));
        assert_eq!(t["name"].as_str(), Some("hello"));
        assert_eq!(t["xs"].as_array().unwrap().len(), 2);
        assert!(apply_set(&mut t, "novalue").is_err());
        assert!(apply_set(&mut t, "name.x=1").is_err());
    }

    #[test]
    fn merge_overlays_tables_and_records_leaves() {
        let mut base = parse_table("a = 1\n[t]\nx = 1\ny = 2\n", "base").unwrap();
        let top = parse_table("[t]\ny = 5\n[u]\nz = 1\n", "top").unwrap();
        let mut touched = Vec::new();
        merge(&mut base, top, "", &mut touched);
        assert_eq!(base["t"]["x"].as_integer(), Some(1));
        assert_eq!(base["t"]["y"].as_integer(), Some(5));
        assert_eq!(touched, vec!["t.y".to_string(), "u.z".to_string()]);
    }

    #[test]
    fn annotation_follows_table_headers() {
        let mut p = Provenance::default();
        p.reported("seed", "s").scaled("t.x", "x");
        let text = annotate("seed = 1\nname = \"n\"\n\n[t]\nx = 2\ny = 3\n", &p, "demo");
        assert!(text.contains("seed = 1  # reported: s"));
        assert!(text.contains("x = 2  # scaled: x"));
        assert_eq!(unannotated_numbers(&text), vec!["y = 3".to_string()]);
    }
}
