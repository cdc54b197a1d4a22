//! Training, evaluation and the missing-rate sweep.
//!
//! Every random stream (window order, masks, dropout) is derived from the
//! run seed with [`mix_seed`], so identical configurations produce
//! identical models and metrics.

use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::baselines::{build_model, mean_impute_reference};
use crate::data::{apply_missing_mask, make_windows, mix_seed, MissingPattern, PreparedData};
use crate::error::{config, input, Error, Result};
use crate::metrics::ErrorAccumulator;
use crate::model::{fill_missing, masked_mse_loss, masked_mse_tape, Imputer, MaskedWindow, ModelConfig, ModelKind, Shape};
use crate::nn::ForwardCtx;
use crate::params::{clip_global_norm, Adam, AdamConfig};
use crate::Scalar;

const VAL_SALT: u64 = 0x7661_6c69_6461_7465;
const EVAL_SALT: u64 = 0x6576_616c_7561_7465;
const DROPOUT_SALT: u64 = 0x6472_6f70_6f75_7421;

/// Name used for the mean-impute reference in reports.
pub const MEAN_REFERENCE: &str = "mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub train_missing_rate: f64,
    pub window: usize,
    pub train_stride: usize,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub missing_pattern: MissingPattern,
    /// Only `"cpu"` is available.
    pub device: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 10,
            seed: 0,
            train_missing_rate: 0.5,
            window: 16,
            train_stride: 1,
            grad_clip: Some(1.0),
            missing_pattern: MissingPattern::Mcar,
            device: "cpu".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 || self.window == 0 || self.train_stride == 0 {
            return config("train.epochs, batch_size, patience, window and train_stride must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return config("train.learning_rate must be positive");
        }
        if !(self.train_missing_rate > 0.0 && self.train_missing_rate < 1.0) {
            return config("train.train_missing_rate must lie in (0, 1)");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return config("train.grad_clip must be positive");
        }
        if self.device != "cpu" {
            return config(format!("train.device {:?} is not available; only \"cpu\" is supported", self.device));
        }
        Ok(())
    }
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub model: String,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub best_val_loss: f64,
}

pub struct TrainedModel<T> {
    pub model: Box<dyn Imputer<T>>,
    pub log: Vec<EpochRecord>,
}

pub fn write_log<W: Write>(mut w: W, log: &[EpochRecord]) -> Result<()> {
    for rec in log {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn masked_windows<T: Scalar>(slice: ArrayView2<f64>, len: usize, stride: usize, rate: f64, seed: u64, pattern: MissingPattern) -> Result<Vec<MaskedWindow<T>>> {
    make_windows(slice, len, stride)?
        .iter()
        .enumerate()
        .map(|(i, w)| apply_missing_mask(w.view(), rate, seed, i as u64, pattern))
        .collect()
}

/// Mean masked loss over windows that hide at least one entry.
pub fn mean_loss<T: Scalar>(model: &dyn Imputer<T>, windows: &[MaskedWindow<T>]) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for w in windows.iter().filter(|w| w.missing_count() > 0) {
        let pred = model.forward(w, &mut ForwardCtx::eval())?;
        total += masked_mse_loss(&pred, w)?.to_f64_lossy();
        used += 1;
    }
    Ok(if used == 0 { 0.0 } else { total / used as f64 })
}

/// Minimizes the masked reconstruction loss with Adam. Masks are redrawn
/// every epoch; the parameters with the best validation loss are kept.
pub fn train<T: Scalar>(kind: ModelKind, model_cfg: &ModelConfig, data: &PreparedData, cfg: &TrainConfig) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    let shape = Shape {
        steps: cfg.window,
        nodes: data.train.ncols(),
    };
    let mut model = build_model::<T>(kind, model_cfg, shape, cfg.seed)?;
    let train_windows = make_windows(data.train.view(), cfg.window, cfg.train_stride)?;
    if train_windows.is_empty() {
        return input("training slice is shorter than one window");
    }
    let val_windows: Vec<MaskedWindow<T>> = masked_windows(
        data.val.view(),
        cfg.window,
        cfg.window,
        cfg.train_missing_rate,
        mix_seed(cfg.seed, VAL_SALT),
        cfg.missing_pattern,
    )?;

    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..Default::default()
        },
        model.params(),
    );
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut best = model.params().clone();
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;
    let mut log = Vec::new();

    for epoch in 0..cfg.epochs {
        let epoch_seed = mix_seed(cfg.seed, epoch as u64 + 1);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Option<Vec<Array2<T>>> = None;
            let mut used = 0usize;
            for &idx in batch {
                let window: MaskedWindow<T> =
                    apply_missing_mask(train_windows[idx].view(), cfg.train_missing_rate, epoch_seed, idx as u64, cfg.missing_pattern)?;
                if window.missing_count() == 0 {
                    continue;
                }
                let mut ctx = ForwardCtx::train(mix_seed(epoch_seed ^ DROPOUT_SALT, idx as u64));
                let mut tape = Tape::new();
                let p = tape.params(model.params());
                let pred = model.forward_tape(&mut tape, &p, &window, &mut ctx)?;
                let loss = masked_mse_tape(&mut tape, pred, &window)?;
                let lv = tape.value(loss)[(0, 0)].to_f64_lossy();
                if !lv.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        msg: format!("non-finite loss on window {idx}"),
                    });
                }
                loss_sum += lv;
                loss_count += 1;
                used += 1;
                let g = tape.param_grads(&tape.backward(loss), model.params());
                match &mut grads {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => grads = Some(g),
                }
            }
            let Some(mut grads) = grads else { continue };
            let scale = T::one() / T::of_usize(used);
            grads.iter_mut().for_each(|g| g.mapv_inplace(|x| x * scale));
            if let Some(clip) = cfg.grad_clip {
                clip_global_norm(&mut grads, T::of(clip));
            }
            adam.step(model.params_mut(), &grads);
            if !model.params().all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    msg: "parameters became non-finite".into(),
                });
            }
        }
        let train_loss = if loss_count == 0 { 0.0 } else { loss_sum / loss_count as f64 };
        let val_loss = mean_loss(model.as_ref(), &val_windows)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                msg: "non-finite validation loss".into(),
            });
        }
        if val_loss < best_val {
            best_val = val_loss;
            best = model.params().clone();
            stale = 0;
        } else {
            stale += 1;
        }
        log.push(EpochRecord {
            model: kind.name().into(),
            seed: cfg.seed,
            epoch,
            train_loss,
            val_loss,
            best_val_loss: best_val,
        });
        if stale >= cfg.patience {
            break;
        }
    }
    model.params_mut().load_from(&best)?;
    Ok(TrainedModel { model, log })
}

/// One evaluated (model, rate, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub missing_rate: f64,
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

/// Mean and sample standard deviation across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub missing_rate: f64,
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

pub const METRICS: [&str; 3] = ["mse", "mae", "rmse"];

impl MetricsReport {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: MetricsReport) {
        self.rows.extend(other.rows);
    }

    /// Long format: `model,missing_rate,metric,value,seed`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "missing_rate", "metric", "value", "seed"])?;
        for r in &self.rows {
            for (metric, value) in METRICS.iter().zip([r.mse, r.mae, r.rmse]) {
                out.write_record([
                    r.model.clone(),
                    r.missing_rate.to_string(),
                    metric.to_string(),
                    value.to_string(),
                    r.seed.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Parses the long format back into rows.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut report = MetricsReport::default();
        for rec in reader.records() {
            let rec = rec?;
            let bad = |what: &str| Error::Input(format!("bad metrics row {:?}: {what}", rec));
            let model = rec.get(0).ok_or_else(|| bad("model"))?.to_string();
            let rate: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("missing_rate"))?;
            let metric = rec.get(2).ok_or_else(|| bad("metric"))?;
            let value: f64 = rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("value"))?;
            let seed: u64 = rec.get(4).and_then(|s| s.parse().ok()).ok_or_else(|| bad("seed"))?;
            let pos = report
                .rows
                .iter()
                .position(|x| x.model == model && x.missing_rate == rate && x.seed == seed);
            let row = match pos {
                Some(i) => &mut report.rows[i],
                None => {
                    report.rows.push(MetricRow {
                        model,
                        missing_rate: rate,
                        mse: f64::NAN,
                        mae: f64::NAN,
                        rmse: f64::NAN,
                        seed,
                    });
                    report.rows.last_mut().expect("just pushed")
                }
            };
            match metric {
                "mse" => row.mse = value,
                "mae" => row.mae = value,
                "rmse" => row.rmse = value,
                other => return Err(bad(&format!("unknown metric {other}"))),
            }
        }
        Ok(report)
    }

    pub fn models(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.model) {
                out.push(r.model.clone());
            }
        }
        out
    }

    pub fn rates(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.missing_rate) {
                out.push(r.missing_rate);
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for model in self.models() {
            for rate in self.rates() {
                let cells: Vec<&MetricRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.model == model && r.missing_rate == rate)
                    .collect();
                if cells.is_empty() {
                    continue;
                }
                for metric in METRICS {
                    let vals: Vec<f64> = cells
                        .iter()
                        .map(|r| match metric {
                            "mse" => r.mse,
                            "mae" => r.mae,
                            _ => r.rmse,
                        })
                        .collect();
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let std = if vals.len() > 1 {
                        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    out.push(SummaryRow {
                        model: model.clone(),
                        missing_rate: rate,
                        metric,
                        mean,
                        std,
                        seeds: vals.len(),
                    });
                }
            }
        }
        out
    }

    /// Mean MSE of `model` over the given rates and all seeds.
    pub fn mean_mse(&self, model: &str, rates: &[f64]) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.model == model && rates.iter().any(|&x| (x - r.missing_rate).abs() < 1e-9))
            .map(|r| r.mse)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn get(&self, model: &str, rate: f64, seed: u64) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.seed == seed && (r.missing_rate - rate).abs() < 1e-9)
    }
}

/// Where evaluation predictions come from.
pub enum Method<'a, T> {
    Model(&'a dyn Imputer<T>),
    MeanReference,
}

impl<T: Scalar> Method<'_, T> {
    pub fn name(&self) -> String {
        match self {
            Method::Model(m) => m.kind().name().to_string(),
            Method::MeanReference => MEAN_REFERENCE.to_string(),
        }
    }

    pub fn impute(&self, window: &MaskedWindow<T>) -> Result<Array2<T>> {
        match self {
            Method::Model(m) => m.impute(window),
            Method::MeanReference => Ok(fill_missing(window, &mean_impute_reference(window))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub window: usize,
    /// Stride of test windows; defaults to non-overlapping.
    pub stride: Option<usize>,
    pub pattern: MissingPattern,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            window: 16,
            stride: None,
            pattern: MissingPattern::Mcar,
        }
    }
}

/// One imputed test entry, for dumping and offline recomputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub window: u64,
    pub step: usize,
    pub node: usize,
    pub target: f64,
    pub prediction: f64,
    pub observed: bool,
    pub scored: bool,
}

/// Test masks for `(seed, rate)`; identical for every method.
pub fn eval_windows<T: Scalar>(test: ArrayView2<f64>, rate: f64, seed: u64, cfg: &EvalConfig) -> Result<Vec<MaskedWindow<T>>> {
    let stream = mix_seed(mix_seed(seed, EVAL_SALT), (rate * 1e6).round() as u64);
    masked_windows(test, cfg.window, cfg.stride.unwrap_or(cfg.window), rate, stream, cfg.pattern)
}

/// Scores a method on the test slice at one missing rate. Degenerate nodes
/// (constant over the training slice) are left out of the metrics.
pub fn evaluate<T: Scalar>(
    method: &Method<'_, T>,
    data: &PreparedData,
    rate: f64,
    seed: u64,
    cfg: &EvalConfig,
    mut dump: Option<&mut Vec<PredictionRecord>>,
) -> Result<MetricRow> {
    if !(rate > 0.0 && rate < 1.0) {
        return config(format!("missing rate must lie in (0, 1), got {rate}"));
    }
    let excluded = data.stats.degenerate_nodes();
    let windows = eval_windows::<T>(data.test.view(), rate, seed, cfg)?;
    if windows.is_empty() {
        return input("test slice is shorter than one window");
    }
    let mut acc = ErrorAccumulator::default();
    for w in &windows {
        let imputed = method.impute(w)?;
        acc.add(&imputed, &w.targets, &w.mask, &excluded)?;
        if let Some(d) = dump.as_deref_mut() {
            for ((t, n), &p) in imputed.indexed_iter() {
                d.push(PredictionRecord {
                    window: w.window_id,
                    step: t,
                    node: n,
                    target: w.targets[(t, n)].to_f64_lossy(),
                    prediction: p.to_f64_lossy(),
                    observed: w.mask[(t, n)],
                    scored: !w.mask[(t, n)] && !excluded.contains(&n),
                });
            }
        }
    }
    Ok(MetricRow {
        model: method.name(),
        missing_rate: rate,
        mse: acc.mse(),
        mae: acc.mae(),
        rmse: acc.rmse(),
        seed,
    })
}

pub fn write_predictions<W: Write>(w: W, records: &[PredictionRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    reader.deserialize().map(|x| x.map_err(Error::from)).collect()
}

/// The test protocol's missing rates: 20% to 80% in steps of 10%.
pub fn default_rates() -> Vec<f64> {
    (2..=8).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub models: Vec<ModelKind>,
    /// Adds the per-node mean reference as an extra series.
    pub include_mean_reference: bool,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            include_mean_reference: true,
            rates: default_rates(),
            seeds: vec![0, 1, 2],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() && !self.include_mean_reference {
            return config("sweep.models is empty");
        }
        if self.rates.is_empty() || self.seeds.is_empty() {
            return config("sweep.rates and sweep.seeds must be non-empty");
        }
        if let Some(r) = self.rates.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
            return config(format!("sweep rate {r} outside (0, 1)"));
        }
        Ok(())
    }
}

pub struct SweepOutcome {
    pub report: MetricsReport,
    pub logs: Vec<EpochRecord>,
}

/// Trains every model once per seed and evaluates it at every rate. Rows
/// are ordered by seed, then model, then rate.
pub fn sweep<T: Scalar>(
    data: &PreparedData,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
    sweep_cfg: &SweepConfig,
    mut progress: impl FnMut(&str),
) -> Result<SweepOutcome> {
    sweep_cfg.validate()?;
    let mut report = MetricsReport::default();
    let mut logs = Vec::new();
    for &seed in &sweep_cfg.seeds {
        if sweep_cfg.include_mean_reference {
            for &rate in &sweep_cfg.rates {
                report.push(evaluate::<T>(&Method::MeanReference, data, rate, seed, eval_cfg, None)?);
            }
        }
        for &kind in &sweep_cfg.models {
            progress(&format!("training {kind} (seed {seed})"));
            let cfg = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            let trained = train::<T>(kind, model_cfg, data, &cfg)?;
            logs.extend(trained.log);
            for &rate in &sweep_cfg.rates {
                let row = evaluate(&Method::Model(trained.model.as_ref()), data, rate, seed, eval_cfg, None)?;
                progress(&format!("  {kind} rate {rate}: mse {:.6}", row.mse));
                report.push(row);
            }
        }
    }
    Ok(SweepOutcome { report, logs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare, synth_generate, SplitSpec, SynthConfig};
    use crate::graph::GraphConfig;

    fn tiny_data() -> PreparedData {
        let s = synth_generate(4, 300, 1, &SynthConfig::default()).unwrap();
        prepare(&s.dataset, &SplitSpec::default()).unwrap()
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            heads: 2,
            d_ff: Some(8),
            encoder_layers: 1,
            fgat_blocks: 1,
            ffn_hidden: 8,
            gru_hidden: 4,
            graph: GraphConfig { k: 2, ..Default::default() },
            ..Default::default()
        }
    }

    fn tiny_train() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 8,
            window: 8,
            train_stride: 8,
            ..Default::default()
        }
    }

    #[test]
    fn training_is_reproducible_and_logged() {
        let data = tiny_data();
        let a = train::<f64>(ModelKind::Fgatt, &tiny_model(), &data, &tiny_train()).unwrap();
        let b = train::<f64>(ModelKind::Fgatt, &tiny_model(), &data, &tiny_train()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 2);
        assert_eq!(a.model.params(), b.model.params());
        let mut buf = Vec::new();
        write_log(&mut buf, &a.log).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn best_checkpoint_is_restored() {
        let data = tiny_data();
        let cfg = TrainConfig { epochs: 3, ..tiny_train() };
        let t = train::<f64>(ModelKind::Ffn, &tiny_model(), &data, &cfg).unwrap();
        let val = eval_windows_for_val(&data, &cfg);
        let best = t.log.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert!((mean_loss(t.model.as_ref(), &val).unwrap() - best).abs() < 1e-12);
    }

    fn eval_windows_for_val(data: &PreparedData, cfg: &TrainConfig) -> Vec<MaskedWindow<f64>> {
        masked_windows(data.val.view(), cfg.window, cfg.window, cfg.train_missing_rate, mix_seed(cfg.seed, VAL_SALT), cfg.missing_pattern).unwrap()
    }

    #[test]
    fn report_csv_round_trip_and_summary() {
        let mut rep = MetricsReport::default();
        for seed in [0, 1] {
            rep.push(MetricRow { model: "fgatt".into(), missing_rate: 0.2, mse: 0.04 + seed as f64 * 0.01, mae: 0.1, rmse: (0.04f64 + seed as f64 * 0.01).sqrt(), seed });
        }
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("model,missing_rate,metric,value,seed\nfgatt,0.2,mse,0.04,0\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 3);
        assert_eq!(MetricsReport::read_csv(buf.as_slice()).unwrap(), rep);
        let s = rep.summary();
        assert_eq!(s.len(), 3);
        assert!((s[0].mean - 0.045).abs() < 1e-12);
        assert_eq!(s[0].seeds, 2);
    }

    #[test]
    fn evaluation_masks_shared_across_methods() {
        let data = tiny_data();
        let cfg = EvalConfig { window: 8, ..Default::default() };
        let a = eval_windows::<f64>(data.test.view(), 0.4, 3, &cfg).unwrap();
        let b = eval_windows::<f64>(data.test.view(), 0.4, 3, &cfg).unwrap();
        assert_eq!(a, b);
        let c = eval_windows::<f64>(data.test.view(), 0.5, 3, &cfg).unwrap();
        assert_ne!(a[0].mask, c[0].mask);
    }

    #[test]
    fn dumped_predictions_reproduce_metrics() {
        let data = tiny_data();
        let cfg = EvalConfig { window: 8, ..Default::default() };
        let mut dump = Vec::new();
        let row = evaluate::<f64>(&Method::MeanReference, &data, 0.5, 0, &cfg, Some(&mut dump)).unwrap();
        let mut buf = Vec::new();
        write_predictions(&mut buf, &dump).unwrap();
        let back = read_predictions(buf.as_slice()).unwrap();
        let scored: Vec<_> = back.iter().filter(|r| r.scored).collect();
        let mse = scored.iter().map(|r| (r.prediction - r.target).powi(2)).sum::<f64>() / scored.len() as f64;
        assert!((mse - row.mse).abs() < 1e-12);
        assert!(back.iter().filter(|r| r.observed).all(|r| r.prediction == r.target));
    }

    #[test]
    fn sweep_row_count() {
        let data = tiny_data();
        let sc = SweepConfig {
            models: vec![ModelKind::Ffn],
            include_mean_reference: true,
            rates: vec![0.3, 0.6],
            seeds: vec![0, 1],
        };
        let out = sweep::<f64>(&data, &tiny_model(), &TrainConfig { epochs: 1, ..tiny_train() }, &EvalConfig { window: 8, ..Default::default() }, &sc, |_| {}).unwrap();
        assert_eq!(out.report.rows.len(), 2 * 2 * 2);
        for r in &out.report.rows {
            assert!((r.rmse - r.mse.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn config_errors() {
        assert!(TrainConfig { train_missing_rate: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { device: "cuda".into(), ..Default::default() }.validate().is_err());
        assert!(SweepConfig { rates: vec![], ..Default::default() }.validate().is_err());
        assert_eq!(default_rates(), vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
    }
}
