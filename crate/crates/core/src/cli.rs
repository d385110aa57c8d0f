//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::sweep::train_method;
use crate::harness::{
    evaluate, generate_dataset, preset_config, read_dataset, run_sweep, write_dataset,
    write_history_csv, write_metrics_csv, AnyModel, ExperimentConfig, MetricsRow, PointData,
    Preset, RunManifest, Split,
};
use crate::nn::Checkpoint;
use crate::tracker::ChannelTracker;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "CHANTRACK_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "chantrack",
    about = "Graph-network channel tracking for massive MIMO"
)]
pub struct Cli {
    /// Output directory [default: $CHANTRACK_OUT or ./chantrack-out]
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// TOML experiment config; built-in defaults when omitted
    #[arg(long, short)]
    pub config: Option<PathBuf>,

    /// Override a config value, e.g. `--set training.learning_rate=1e-4`
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset split and write it as a binary artifact
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "train")]
        split: String,
        /// Sample count [default: the config's count for the split]
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train the configured model; writes a checkpoint and the loss history
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Train on this dataset artifact instead of simulating one
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the evaluation split of its config
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate on this dataset artifact instead
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the config's sweep and write metrics.csv
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run a named experiment preset (table2, table3, fig5, fig6)
    Reproduce {
        preset: String,
        /// Use the full-scale profile instead of the desk-scale one
        #[arg(long)]
        full: bool,
        /// Override a preset value
        #[arg(long = "set", short = 's', value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn output_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("chantrack-out"))
}

fn resolve(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let base = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let cfg = base.with_overrides(&args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn split_size(cfg: &ExperimentConfig, split: Split) -> usize {
    match split {
        Split::Train => cfg.training.n_train_samples,
        Split::Validation => cfg.training.n_validation_samples,
        Split::Eval => cfg.evaluation.n_eval_samples,
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "validation" => Ok(Split::Validation),
        "eval" => Ok(Split::Eval),
        other => Err(Error::Config(format!("unknown split {other:?}"))),
    }
}

fn print_rows(rows: &[MetricsRow]) {
    for r in rows {
        println!(
            "{}={} {} mse={:.6e} n={} seed={}",
            r.sweep_axis, r.sweep_value, r.method, r.mse, r.n_samples, r.seed
        );
    }
}

/// Executes a parsed command.
pub fn run(cli: Cli) -> Result<()> {
    let out = output_dir(cli.out.as_deref());
    std::fs::create_dir_all(&out)?;
    match cli.command {
        Command::Generate {
            cfg,
            split,
            samples,
        } => {
            let config = resolve(&cfg)?;
            let split = parse_split(&split)?;
            let n = samples.unwrap_or_else(|| split_size(&config, split));
            let data = generate_dataset(&config, split, n)?;
            let mut manifest = RunManifest::new("generate", &config, &cfg.overrides);
            manifest.extra = serde_json::json!({ "split": split, "n_samples": n });
            let path = out.join("dataset.bin");
            write_dataset(&path, &data, serde_json::to_value(&manifest)?)?;
            manifest.write(&out.join("run.json"))?;
            println!("wrote {} samples to {}", data.len(), path.display());
        }
        Command::Train { cfg, data } => {
            let config = resolve(&cfg)?;
            let method = config.model.kind;
            if !method.is_learned() {
                return Err(Error::Config("model.kind must be gnn or fnn".into()));
            }
            let mut point = PointData::generate(&ExperimentConfig {
                training: crate::harness::config::TrainingConfig {
                    n_train_samples: if data.is_some() {
                        0
                    } else {
                        config.training.n_train_samples
                    },
                    ..config.training.clone()
                },
                ..config.clone()
            })?;
            if let Some(p) = &data {
                point.train = read_dataset(p)?.0;
            }
            let trained = train_method(&config, method, &point)?;
            let mse = evaluate(&trained.model, &point.eval)?;
            write_history_csv(&out.join("loss_history.csv"), &trained.report.history)?;
            let mut manifest = RunManifest::new("train", &config, &cfg.overrides);
            manifest.extra = serde_json::json!({
                "eval_mse": mse,
                "best_epoch": trained.report.best_epoch,
                "epochs_run": trained.report.history.len(),
                "train_data": data,
            });
            let ck = trained
                .model
                .to_checkpoint(serde_json::to_value(&manifest)?);
            ck.save(&out.join("checkpoint.json"))?;
            manifest.write(&out.join("run.json"))?;
            let row = MetricsRow {
                sweep_axis: "none".into(),
                sweep_value: 0.0,
                method: method.name().into(),
                mse,
                n_samples: point.eval.len(),
                wall_time_s: trained.train_time_s,
                seed: config.training.seed,
            };
            write_metrics_csv(&out.join("metrics.csv"), std::slice::from_ref(&row))?;
            println!(
                "{} eval mse {mse:e} (best epoch {})",
                method, trained.report.best_epoch
            );
        }
        Command::Eval { checkpoint, data } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let manifest: RunManifest = serde_json::from_value(ck.manifest.clone())
                .map_err(|e| Error::Format(format!("checkpoint manifest: {e}")))?;
            let config = manifest.config.clone();
            let model = AnyModel::from_checkpoint(&ck)?;
            let eval_set = match &data {
                Some(p) => read_dataset(p)?.0,
                None => generate_dataset(&config, Split::Eval, config.evaluation.n_eval_samples)?,
            };
            let start = std::time::Instant::now();
            let mse = evaluate(&model, &eval_set)?;
            let row = MetricsRow {
                sweep_axis: "none".into(),
                sweep_value: 0.0,
                method: model.method().name().into(),
                mse,
                n_samples: eval_set.len(),
                wall_time_s: start.elapsed().as_secs_f64(),
                seed: config.training.seed,
            };
            write_metrics_csv(&out.join("metrics.csv"), std::slice::from_ref(&row))?;
            let mut m = RunManifest::new("eval", &config, &manifest.overrides);
            m.extra =
                serde_json::json!({ "checkpoint": checkpoint, "data": data, "eval_mse": mse });
            m.write(&out.join("run.json"))?;
            println!("{} eval mse {mse:e}", model.method());
        }
        Command::Sweep { cfg } => {
            let config = resolve(&cfg)?;
            RunManifest::new("sweep", &config, &cfg.overrides).write(&out.join("run.json"))?;
            let rows = run_sweep(&config, |r| print_rows(std::slice::from_ref(r)))?;
            write_metrics_csv(&out.join("metrics.csv"), &rows)?;
        }
        Command::Reproduce {
            preset,
            full,
            overrides,
        } => {
            let p: Preset = preset.parse()?;
            let config = preset_config(p, full).with_overrides(&overrides)?;
            config.validate()?;
            let mut manifest = RunManifest::new("reproduce", &config, &overrides);
            manifest.extra = serde_json::json!({ "preset": p.name(), "full": full });
            manifest.write(&out.join("run.json"))?;
            let rows = run_sweep(&config, |r| print_rows(std::slice::from_ref(r)))?;
            let path = out.join(format!("{}.csv", p.name()));
            write_metrics_csv(&path, &rows)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let parsed = Cli::command()
        .version(crate::harness::version_string())
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("chantrack: {e}");
            exit_code(&e)
        }
    }
}
