//! Command-line driver: configuration, run directories and the subcommands.

pub mod commands;
pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fgatt::ModelKind;
use serde_json::Value;

pub use commands::{cmd_evaluate, cmd_graph, cmd_sweep, cmd_synth, cmd_train, EvaluateOptions, GraphOptions, SplitName};
pub use config::{DatasetConfig, Precision, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "fgatt", version, about = "Train and evaluate spatio-temporal imputation models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Precedence: defaults, then the config
/// file, then `--set`, then the dedicated flags.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Seed for training and masks; a sweep runs this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: runs/<config hash>-<UTC time>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use a CSV file as the dataset.
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Override any config field, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Suppress progress messages.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset and its latent coupling graph.
    Synth(Common),
    /// Build the dynamic graph of one masked window.
    Graph {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test")]
        split: SplitName,
        /// Index among the split's non-overlapping windows.
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[arg(long, default_value_t = 0.5)]
        rate: f64,
    },
    /// Train one model and save its best checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// fgatt, ffn, bgru or transformer.
        #[arg(long, value_parser = parse_kind)]
        model: Option<ModelKind>,
    },
    /// Score a checkpoint on the test split at every configured rate.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defaults to <out>/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also write every imputed test entry.
        #[arg(long)]
        predictions: bool,
        /// Add the per-node mean reference rows.
        #[arg(long)]
        reference: bool,
    },
    /// Train and evaluate every model over the rate and seed grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated model list.
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        models: Option<Vec<ModelKind>>,
        /// Comma-separated missing rates.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
    },
    /// Print the effective configuration as JSON.
    Config(Common),
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    ModelKind::parse(s).ok_or_else(|| format!("unknown model {s:?} (expected fgatt, ffn, bgru or transformer)"))
}

/// Merges defaults, config file, `--set` overrides and flags, then validates.
pub fn resolve_config(common: &Common, extra: &[(&str, Value)]) -> anyhow::Result<RunConfig> {
    let mut value = serde_json::to_value(RunConfig::default())?;
    let origin = match &common.config {
        Some(path) => {
            let file = config::read_file(path)?;
            // Validate the file alone first so errors point at the file's keys.
            config::from_value(file.clone(), &path.display().to_string())?;
            merge(&mut value, file);
            path.display().to_string()
        }
        None => "configuration".to_string(),
    };
    for raw in &common.overrides {
        let (key, v) = config::parse_assignment(raw)?;
        config::set_path(&mut value, &key, v)?;
    }
    let mut flags: Vec<(String, Value)> = Vec::new();
    if let Some(seed) = common.seed {
        flags.push(("train.seed".into(), seed.into()));
        flags.push(("sweep.seeds".into(), Value::Array(vec![seed.into()])));
    }
    if let Some(path) = &common.data {
        flags.push((
            "dataset".into(),
            serde_json::json!({"kind": "csv", "path": path}),
        ));
    }
    for (k, v) in extra {
        flags.push((k.to_string(), v.clone()));
    }
    for (k, v) in flags {
        config::set_path(&mut value, &k, v)?;
    }
    let cfg = config::from_value(value, &origin)?;
    cfg.validate().with_context(|| format!("{origin}: invalid configuration"))?;
    Ok(cfg)
}

/// Deep merge where `patch` wins; a dataset patch replaces the dataset
/// whole because its shape depends on `kind`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if k != "dataset" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses arguments and runs one subcommand.
pub fn run<I, S>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    execute(cli.command)
}

pub fn execute(command: Command) -> anyhow::Result<()> {
    let (common, extra): (&Common, Vec<(&str, Value)>) = match &command {
        Command::Synth(c) | Command::Config(c) | Command::Graph { common: c, .. } => (c, vec![]),
        Command::Train { common, model } => (common, model.iter().map(|m| ("model", Value::from(m.name()))).collect()),
        Command::Evaluate { common, .. } => (common, vec![]),
        Command::Sweep { common, models, rates } => {
            let mut extra = Vec::new();
            if let Some(m) = models {
                extra.push(("sweep.models", Value::from(m.iter().map(|k| k.name()).collect::<Vec<_>>())));
            }
            if let Some(r) = rates {
                extra.push(("sweep.rates", Value::from(r.clone())));
            }
            (common, extra)
        }
    };
    let cfg = resolve_config(common, &extra)?;
    if let Command::Config(_) = command {
        let text = serde_json::to_string_pretty(&cfg)?;
        return match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            other => Ok(other?),
        };
    }
    let dir = commands::resolve_run_dir(&cfg, common.out.as_deref());
    let quiet = common.quiet;
    let start = std::time::Instant::now();
    let mut progress = |msg: &str| {
        if !quiet {
            eprintln!("[{:>5.0}s] {msg}", start.elapsed().as_secs_f64());
        }
    };
    let written = match &command {
        Command::Synth(_) => cmd_synth(&cfg, &dir)?,
        Command::Graph { split, window, rate, .. } => cmd_graph(
            &cfg,
            &dir,
            &GraphOptions {
                split: *split,
                window: *window,
                rate: *rate,
            },
        )?,
        Command::Train { .. } => cmd_train(&cfg, &dir, &mut progress)?,
        Command::Evaluate {
            checkpoint,
            predictions,
            reference,
            ..
        } => cmd_evaluate(
            &cfg,
            &dir,
            &EvaluateOptions {
                checkpoint: checkpoint.clone().unwrap_or_else(|| dir.join("checkpoint.json")),
                predictions: *predictions,
                reference: *reference,
            },
        )?,
        Command::Sweep { .. } => cmd_sweep(&cfg, &dir, &mut progress)?,
        Command::Config(_) => unreachable!("handled above"),
    };
    for path in written {
        progress(&format!("wrote {}", path.display()));
    }
    Ok(())
}
