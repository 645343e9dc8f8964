use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use walab::bundle::{apply_set, is_bundle, merge, parse_table, Bundle, Provenance};
use walab::compare::compare_runs;
use walab::error::{exit, HarnessError, Result};
use walab::presets::{preset, PRESETS};
use walab::run::{RunOptions, Workspace};
use walab::sweep::{load_run_plan, run_bundle, FINAL_TA_FILE, TA_FILE};
use walab::TrainPlan;
use walab_core::landscape::{line_probe, linspace};
use walab_core::quadratic::{variance_report, QuadSpec, VarianceReport};
use walab_core::WeightVector;

#[derive(Parser)]
#[command(name = "walab", version, about = "Weight-averaging experiments: SGD, SWA, chained SWA and PSWA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one plan or every seed and arm of a bundle.
    Train {
        /// TOML config; overlays the preset when both are given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: runs/<name>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override one value, e.g. `--set base.schedule.epochs=10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Train on the full training set instead of the preset's subset.
        #[arg(long)]
        full_data: bool,
        /// No per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Train loss and test error along the line through two checkpoints.
    Probe {
        #[arg(long)]
        ckpt_a: PathBuf,
        #[arg(long)]
        ckpt_b: PathBuf,
        /// Plan config naming the model and data [default: config.toml of
        /// the run that holds --ckpt-a].
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = -0.25, allow_hyphen_values = true)]
        t_min: f64,
        #[arg(long, default_value_t = 1.25)]
        t_max: f64,
        #[arg(long, default_value_t = 21)]
        t_count: usize,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// CSV output file [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Variance of the final vs tail-averaged iterate on a noisy quadratic.
    Quad {
        #[arg(long)]
        lr: f64,
        /// Curvatures, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        h: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        steps: u64,
        /// Tail window; repeat or comma separate for several rows.
        #[arg(long, value_delimiter = ',', required = true)]
        window: Vec<u64>,
        #[arg(long, default_value_t = 200)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align metrics of completed runs and summarize final accuracy.
    Compare {
        /// Run directories or directories containing them.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the TA-by-epoch and final-TA tables here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List or print the built-in experiment configs.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print the annotated config.
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            config,
            preset,
            seed,
            out,
            sets,
            data_dir,
            full_data,
            quiet,
        } => {
            let opts = RunOptions {
                data_dir,
                progress: !quiet,
            };
            train(config.as_deref(), preset.as_deref(), seed, out, &sets, full_data, &opts)
        }
        Command::Probe {
            ckpt_a,
            ckpt_b,
            config,
            t_min,
            t_max,
            t_count,
            data_dir,
            out,
        } => {
            let plan = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
                    TrainPlan::from_toml(&text)?
                }
                None => {
                    let run_dir = ckpt_a.parent().and_then(Path::parent).ok_or_else(|| {
                        HarnessError::usage("cannot locate the run directory of --ckpt-a; pass --config")
                    })?;
                    load_run_plan(run_dir)?
                }
            };
            let model = plan.model.build()?;
            let w_a = WeightVector::load(&ckpt_a)?;
            let w_b = WeightVector::load(&ckpt_b)?;
            let data_dir = Workspace::new(RunOptions { data_dir, progress: false }).data_dir().to_path_buf();
            let (train, test) = walab::datasets::load_datasets(&plan.dataset, &data_dir, plan.seeds().data)?;
            let ts = linspace(t_min, t_max, t_count);
            let result = line_probe(&model, &w_a, &w_b, &ts, &train, &test)?;
            let mut buf = Vec::new();
            result.write_csv(&mut buf)?;
            emit(out.as_deref(), &buf)
        }
        Command::Quad {
            lr,
            h,
            sigma,
            steps,
            window,
            seeds,
            out,
        } => {
            let mut csv = format!("{}\n", VarianceReport::CSV_HEADER);
            for w in window {
                let spec = QuadSpec::new(h.clone(), sigma, lr, steps, w)?;
                csv.push_str(&variance_report(&spec, seeds)?.csv_row());
                csv.push('\n');
            }
            emit(out.as_deref(), csv.as_bytes())
        }
        Command::Compare { dirs, out } => {
            let c = compare_runs(&dirs)?;
            print!("{}", c.pretty());
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
                for (name, text) in [(TA_FILE, c.ta_csv()), (FINAL_TA_FILE, c.finals_csv())] {
                    let path = dir.join(name);
                    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
                }
            }
            Ok(())
        }
        Command::Preset { action } => {
            match action {
                PresetAction::List => {
                    for name in PRESETS {
                        println!("{name:<16} {}", preset(name)?.description);
                    }
                }
                PresetAction::Show { name } => print!("{}", preset(&name)?.annotated_toml()),
            }
            Ok(())
        }
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| HarnessError::io(path, e)),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| HarnessError::io("<stdout>", e)),
    }
}

/// Resolve preset, config file and overrides (later wins) into a bundle or
/// a single plan, then run it.
fn train(
    config: Option<&Path>,
    preset_name: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    sets: &[String],
    full_data: bool,
    opts: &RunOptions,
) -> Result<()> {
    let (mut table, mut prov) = match preset_name {
        Some(name) => {
            let b = preset(name)?;
            (b.to_value(), b.provenance)
        }
        None => (toml::Table::new(), Provenance::default()),
    };
    if let Some(path) = config {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let top = parse_table(&text, &path.display().to_string())?;
        let mut touched = Vec::new();
        merge(&mut table, top, "", &mut touched);
        for key in touched {
            prov.set(&key, format!("override: {}", path.display()));
        }
    }
    if table.is_empty() {
        return Err(HarnessError::usage("train needs --preset or --config"));
    }
    let bundle = is_bundle(&table);
    for s in sets {
        let key = apply_set(&mut table, s)?;
        prov.set(&key, "override: --set".into());
    }
    if let Some(seed) = seed {
        let (key, value) = if bundle {
            ("seeds", toml::Value::Array(vec![toml::Value::Integer(seed as i64)]))
        } else {
            ("seed", toml::Value::Integer(seed as i64))
        };
        table.insert(key.into(), value);
        prov.set(key, "override: --seed".into());
    }
    if full_data {
        let dataset = if bundle {
            table.get_mut("base").and_then(|b| b.as_table_mut()).and_then(|b| b.get_mut("dataset"))
        } else {
            table.get_mut("dataset")
        };
        if let Some(d) = dataset.and_then(|d| d.as_table_mut()) {
            d.remove("train_per_class");
        }
    }

    if bundle {
        let b = Bundle::from_value(table, prov)?;
        let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(&b.name));
        let report = run_bundle(&b, &dir, opts)?;
        if let Some(c) = &report.comparison {
            print!("{}", c.pretty());
        }
        for (seed, p) in &report.probes {
            println!("probe seed {seed}: {} points", p.len());
        }
        for q in &report.quad {
            println!(
                "quad window {:>4}: var_final {:.6} var_tail {:.6} ratio {:.4}",
                q.window, q.var_final, q.var_tail, q.ratio
            );
        }
        println!("results in {}", dir.display());
    } else {
        let text = toml::to_string(&table).expect("tables serialize");
        let plan = TrainPlan::from_toml(&text)?;
        let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(&plan.name));
        let summary = Workspace::new(opts.clone()).run(&plan, &dir, &prov)?;
        println!(
            "{} / {} seed {}: final test accuracy {:.2}% after {} steps; results in {}",
            summary.name,
            summary.arm,
            summary.seed,
            summary.final_test_acc * 100.0,
            summary.steps,
            dir.display()
        );
    }
    Ok(())
}
