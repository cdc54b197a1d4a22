//! The subcommands, as library functions writing into a run directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fgatt::checkpoint::Checkpoint;
use fgatt::data::{prepare, synth_generate, load_csv, PreparedData};
use fgatt::graph::construct_window_graph;
use fgatt::harness::{self, eval_windows, evaluate, write_log, write_predictions, Method, SummaryRow};
use fgatt::{MetricsReport, Scalar, TimeSeriesDataset};

use crate::config::{DatasetConfig, Precision, RunConfig};
use crate::plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphOptions {
    pub split: SplitName,
    /// Index among the non-overlapping windows of the split.
    pub window: usize,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub checkpoint: PathBuf,
    pub predictions: bool,
    pub reference: bool,
}

/// `--out`, else `output_dir` from the config, else `runs/<hash>-<UTC time>`.
pub fn resolve_run_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    if let Some(p) = out {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output_dir {
        return p.clone();
    }
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    PathBuf::from("runs").join(format!("{}-{stamp}", content_hash(cfg)))
}

/// Hash of everything that affects results; the output location is excluded.
pub fn content_hash(cfg: &RunConfig) -> String {
    RunConfig {
        output_dir: None,
        ..cfg.clone()
    }
    .hash()
}

pub fn load_dataset(cfg: &RunConfig) -> anyhow::Result<TimeSeriesDataset> {
    Ok(match &cfg.dataset {
        DatasetConfig::Synthetic {
            nodes,
            samples,
            seed,
            generator,
        } => synth_generate(*nodes, *samples, *seed, generator)?.dataset,
        DatasetConfig::Csv { path, schema } => load_csv(path, schema)?,
    })
}

pub fn load_prepared(cfg: &RunConfig) -> anyhow::Result<PreparedData> {
    Ok(prepare(&load_dataset(cfg)?, &cfg.split)?)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn write_config(cfg: &RunConfig, dir: &Path) -> anyhow::Result<PathBuf> {
    let path = dir.join("config.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, cfg)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

fn write_report(report: &MetricsReport, path: &Path) -> anyhow::Result<()> {
    let mut w = create(path)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "missing_rate", "metric", "mean", "std", "seeds"])?;
    for r in rows {
        out.write_record([
            r.model.clone(),
            r.missing_rate.to_string(),
            r.metric.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            r.seeds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the generated series and the coupling graph used to make it.
pub fn cmd_synth(cfg: &RunConfig, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let DatasetConfig::Synthetic {
        nodes,
        samples,
        seed,
        generator,
    } = &cfg.dataset
    else {
        bail!("synth needs dataset.kind = \"synthetic\"");
    };
    let synth = synth_generate(*nodes, *samples, *seed, generator)?;
    let data_path = dir.join("dataset.csv");
    let mut w = create(&data_path)?;
    synth.dataset.write_csv(&mut w)?;
    w.flush()?;
    let graph_path = dir.join("latent_graph.csv");
    let mut w = create(&graph_path)?;
    synth.write_latent_graph(&mut w)?;
    w.flush()?;
    Ok(vec![data_path, graph_path, write_config(cfg, dir)?])
}

/// Builds the dynamic graph of one masked window and writes its edge list.
pub fn cmd_graph(cfg: &RunConfig, dir: &Path, opts: &GraphOptions) -> anyhow::Result<Vec<PathBuf>> {
    match cfg.precision {
        Precision::F32 => graph_impl::<f32>(cfg, dir, opts),
        Precision::F64 => graph_impl::<f64>(cfg, dir, opts),
    }
}

fn graph_impl<T: Scalar>(cfg: &RunConfig, dir: &Path, opts: &GraphOptions) -> anyhow::Result<Vec<PathBuf>> {
    let data = load_prepared(cfg)?;
    let slice = match opts.split {
        SplitName::Train => data.train.view(),
        SplitName::Val => data.val.view(),
        SplitName::Test => data.test.view(),
    };
    let windows = eval_windows::<T>(slice, opts.rate, cfg.train.seed, &cfg.eval)?;
    let Some(window) = windows.get(opts.window) else {
        bail!("window {} out of range: the split has {} windows", opts.window, windows.len());
    };
    let graph = construct_window_graph(window, &cfg.architecture.graph)?;
    let path = dir.join("graph.csv");
    let mut w = create(&path)?;
    graph.write_csv(&mut w)?;
    w.flush()?;
    Ok(vec![path, write_config(cfg, dir)?])
}

/// Trains `cfg.model` with `cfg.train.seed` and saves the best checkpoint.
pub fn cmd_train(cfg: &RunConfig, dir: &Path, progress: &mut dyn FnMut(&str)) -> anyhow::Result<Vec<PathBuf>> {
    match cfg.precision {
        Precision::F32 => train_impl::<f32>(cfg, dir, progress),
        Precision::F64 => train_impl::<f64>(cfg, dir, progress),
    }
}

fn train_impl<T: Scalar>(cfg: &RunConfig, dir: &Path, progress: &mut dyn FnMut(&str)) -> anyhow::Result<Vec<PathBuf>> {
    let data = load_prepared(cfg)?;
    progress(&format!("training {} (seed {})", cfg.model, cfg.train.seed));
    let trained = harness::train::<T>(cfg.model, &cfg.architecture, &data, &cfg.train)?;
    if let Some(last) = trained.log.last() {
        progress(&format!(
            "{} epochs, best validation loss {:.6}",
            trained.log.len(),
            last.best_val_loss
        ));
    }
    let ck_path = dir.join("checkpoint.json");
    fs::create_dir_all(dir)?;
    Checkpoint::capture(trained.model.as_ref(), &data.stats, cfg.train.seed).save(&ck_path)?;
    let log_path = dir.join("training_log.jsonl");
    let mut w = create(&log_path)?;
    write_log(&mut w, &trained.log)?;
    w.flush()?;
    Ok(vec![ck_path, log_path, write_config(cfg, dir)?])
}

/// Scores a checkpoint on the test slice at every rate in `sweep.rates`.
pub fn cmd_evaluate(cfg: &RunConfig, dir: &Path, opts: &EvaluateOptions) -> anyhow::Result<Vec<PathBuf>> {
    match cfg.precision {
        Precision::F32 => evaluate_impl::<f32>(cfg, dir, opts),
        Precision::F64 => evaluate_impl::<f64>(cfg, dir, opts),
    }
}

fn evaluate_impl<T: Scalar>(cfg: &RunConfig, dir: &Path, opts: &EvaluateOptions) -> anyhow::Result<Vec<PathBuf>> {
    let data = load_prepared(cfg)?;
    let ck = Checkpoint::load(&opts.checkpoint)?;
    if ck.stats != data.stats {
        bail!(
            "{} was trained on data with different normalization statistics",
            opts.checkpoint.display()
        );
    }
    if ck.steps != cfg.eval.window {
        bail!("checkpoint window is {} steps but eval.window is {}", ck.steps, cfg.eval.window);
    }
    let model = ck.restore::<T>()?;
    let seed = cfg.train.seed;
    let mut report = MetricsReport::default();
    let mut written = Vec::new();
    let mut methods = vec![Method::Model(model.as_ref())];
    if opts.reference {
        methods.insert(0, Method::MeanReference);
    }
    for method in &methods {
        for &rate in &cfg.sweep.rates {
            let mut dump = Vec::new();
            let want = opts.predictions && matches!(method, Method::Model(_));
            report.push(evaluate(method, &data, rate, seed, &cfg.eval, want.then_some(&mut dump))?);
            if want {
                let path = dir.join("predictions").join(format!("rate-{rate}.csv"));
                let mut w = create(&path)?;
                write_predictions(&mut w, &dump)?;
                w.flush()?;
                written.push(path);
            }
        }
    }
    let metrics = dir.join("metrics.csv");
    write_report(&report, &metrics)?;
    written.insert(0, metrics);
    written.push(write_config(cfg, dir)?);
    Ok(written)
}

/// Trains every configured model per seed and evaluates the rate grid.
pub fn cmd_sweep(cfg: &RunConfig, dir: &Path, progress: &mut dyn FnMut(&str)) -> anyhow::Result<Vec<PathBuf>> {
    match cfg.precision {
        Precision::F32 => sweep_impl::<f32>(cfg, dir, progress),
        Precision::F64 => sweep_impl::<f64>(cfg, dir, progress),
    }
}

fn sweep_impl<T: Scalar>(cfg: &RunConfig, dir: &Path, progress: &mut dyn FnMut(&str)) -> anyhow::Result<Vec<PathBuf>> {
    let data = load_prepared(cfg)?;
    let outcome = harness::sweep::<T>(&data, &cfg.architecture, &cfg.train, &cfg.eval, &cfg.sweep, |m| progress(m))?;
    let metrics = dir.join("metrics.csv");
    write_report(&outcome.report, &metrics)?;

    let summary = outcome.report.summary();
    let summary_path = dir.join("summary.csv");
    let mut w = create(&summary_path)?;
    write_summary(&mut w, &summary)?;
    w.flush()?;

    let log_path = dir.join("training_log.jsonl");
    let mut w = create(&log_path)?;
    write_log(&mut w, &outcome.logs)?;
    w.flush()?;

    let mut written = vec![metrics, summary_path, log_path];
    let dataset = match &cfg.dataset {
        DatasetConfig::Synthetic { nodes, samples, .. } => format!("synthetic, {nodes} nodes, {samples} samples"),
        DatasetConfig::Csv { path, .. } => path.display().to_string(),
    };
    for metric in harness::METRICS {
        let path = dir.join("plots").join(format!("{metric}.svg"));
        fs::create_dir_all(path.parent().expect("has parent"))?;
        plot::metric_vs_rate(&path, &summary, metric, &dataset)?;
        written.push(path);
    }
    written.push(write_config(cfg, dir)?);
    Ok(written)
}
