//! Experiment harness: configs, presets, run directories and comparisons
//! on top of `walab-core`.

pub mod bundle;
pub mod compare;
pub mod datasets;
pub mod error;
pub mod plan;
pub mod presets;
pub mod run;
pub mod sweep;

pub use bundle::{Bundle, Provenance};
pub use compare::{compare_runs, Comparison};
pub use error::{HarnessError, Result};
pub use plan::TrainPlan;
pub use presets::preset;
pub use run::{run_plan, RunOptions, RunSummary, Workspace};
pub use sweep::run_bundle;
