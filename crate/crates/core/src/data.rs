//! Dataset ingestion, min-max scaling, chronological splits, windowing,
//! missingness simulation and a synthetic correlated-sensor generator.

use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, input, Error, Result};
use crate::model::MaskedWindow;
use crate::Scalar;

/// Node-major multivariate series: `values[(sample, node)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    pub node_names: Vec<String>,
    pub values: Array2<f64>,
    /// Seconds, strictly increasing.
    pub timestamps: Vec<i64>,
    /// Seconds per step.
    pub granularity: f64,
}

impl TimeSeriesDataset {
    pub fn new(name: impl Into<String>, node_names: Vec<String>, values: Array2<f64>, timestamps: Vec<i64>) -> Result<Self> {
        if values.nrows() == 0 {
            return input("dataset has no samples");
        }
        if values.ncols() != node_names.len() {
            return input(format!("{} node names for {} columns", node_names.len(), values.ncols()));
        }
        if timestamps.len() != values.nrows() {
            return input("timestamp count differs from sample count");
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return input(format!("timestamps not strictly increasing at sample {}", i + 1));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return input("dataset contains non-finite values");
        }
        let granularity = if timestamps.len() > 1 {
            (timestamps[1] - timestamps[0]) as f64
        } else {
            1.0
        };
        Ok(Self {
            name: name.into(),
            node_names,
            values,
            timestamps,
            granularity,
        })
    }

    pub fn samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.values.ncols()
    }

    /// Writes the `timestamp,<node>...` CSV schema with integer-second stamps.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.node_names.iter().cloned());
        out.write_record(&header)?;
        for (ts, row) in self.timestamps.iter().zip(self.values.outer_iter()) {
            let mut rec = vec![ts.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Column selection for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub timestamp_column: String,
    /// Node columns to keep, in order. `None` keeps every other column.
    pub nodes: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            nodes: None,
        }
    }
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .map(|dt| dt.and_utc().timestamp())
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_csv(&text, &name, path, schema)
}

fn parse_csv(text: &str, name: &str, path: &Path, schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    let err = |row: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(err(1, "empty file".into()));
    }
    let ts_col = headers
        .iter()
        .position(|h| h.trim() == schema.timestamp_column)
        .ok_or_else(|| err(1, format!("missing column `{}`", schema.timestamp_column)))?;
    let node_cols: Vec<usize> = match &schema.nodes {
        Some(names) => names
            .iter()
            .map(|n| {
                headers
                    .iter()
                    .position(|h| h.trim() == n)
                    .ok_or_else(|| err(1, format!("missing column `{n}`")))
            })
            .collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&c| c != ts_col).collect(),
    };
    if node_cols.is_empty() {
        return Err(err(1, "no node columns".into()));
    }
    let node_names: Vec<String> = node_cols.iter().map(|&c| headers[c].trim().to_string()).collect();

    let mut timestamps = Vec::new();
    let mut flat = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| err(row, e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(err(row, format!("expected {} fields, found {}", headers.len(), rec.len())));
        }
        let ts = parse_timestamp(&rec[ts_col]).ok_or_else(|| err(row, format!("unparseable timestamp `{}`", &rec[ts_col])))?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(err(row, "timestamps must be strictly increasing".into()));
            }
        }
        timestamps.push(ts);
        for &c in &node_cols {
            let v: f64 = rec[c]
                .trim()
                .parse()
                .map_err(|_| err(row, format!("unparseable value `{}` in column `{}`", &rec[c], &headers[c])))?;
            if !v.is_finite() {
                return Err(err(row, format!("non-finite value in column `{}`", &headers[c])));
            }
            flat.push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(err(1, "empty file: no data rows".into()));
    }
    let values = Array2::from_shape_vec((timestamps.len(), node_cols.len()), flat).expect("row lengths checked");
    TimeSeriesDataset::new(name, node_names, values, timestamps)
}

/// Per-node training-range statistics for min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    /// Nodes whose training range is a single value.
    pub fn is_degenerate(&self, node: usize) -> bool {
        self.max[node] <= self.min[node]
    }

    pub fn degenerate_nodes(&self) -> Vec<usize> {
        (0..self.min.len()).filter(|&n| self.is_degenerate(n)).collect()
    }

    pub fn nodes(&self) -> usize {
        self.min.len()
    }
}

/// Fits scaling statistics. Pass the training slice only.
pub fn minmax_fit(train: ArrayView2<f64>) -> Result<NormalizationStats> {
    if train.nrows() == 0 {
        return input("cannot fit normalization on zero samples");
    }
    let min = train.columns().into_iter().map(|c| c.fold(f64::INFINITY, |a, &b| a.min(b))).collect();
    let max = train.columns().into_iter().map(|c| c.fold(f64::NEG_INFINITY, |a, &b| a.max(b))).collect();
    Ok(NormalizationStats { min, max })
}

/// `(x - min) / (max - min)` per node, unclamped; degenerate nodes map to 0.
pub fn minmax_apply(values: ArrayView2<f64>, stats: &NormalizationStats) -> Result<Array2<f64>> {
    if values.ncols() != stats.nodes() {
        return input(format!("{} columns but statistics for {} nodes", values.ncols(), stats.nodes()));
    }
    Ok(Array2::from_shape_fn(values.dim(), |(r, n)| {
        if stats.is_degenerate(n) {
            0.0
        } else {
            (values[(r, n)] - stats.min[n]) / (stats.max[n] - stats.min[n])
        }
    }))
}

pub fn minmax_invert(normalized: ArrayView2<f64>, stats: &NormalizationStats) -> Result<Array2<f64>> {
    if normalized.ncols() != stats.nodes() {
        return input(format!("{} columns but statistics for {} nodes", normalized.ncols(), stats.nodes()));
    }
    Ok(Array2::from_shape_fn(normalized.dim(), |(r, n)| {
        normalized[(r, n)] * (stats.max[n] - stats.min[n]) + stats.min[n]
    }))
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train > 0.0 && self.val > 0.0 && self.test > 0.0) {
            return config("split fractions must be positive");
        }
        if ((self.train + self.val + self.test) - 1.0).abs() > 1e-9 {
            return config("split fractions must sum to 1");
        }
        Ok(())
    }
}

/// Contiguous, non-overlapping sample ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Chronological split; the first two lengths are rounded and the test
/// slice takes the remainder.
pub fn split(samples: usize, spec: &SplitSpec) -> Result<SplitRanges> {
    spec.validate()?;
    let n_train = (samples as f64 * spec.train).round() as usize;
    let n_val = (samples as f64 * spec.val).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= samples {
        return input(format!("{samples} samples are too few for the requested split"));
    }
    Ok(SplitRanges {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..samples,
    })
}

/// Start rows of every full window of `len` rows at `stride`; the final
/// partial window is dropped.
pub fn window_starts(rows: usize, len: usize, stride: usize) -> Result<Vec<usize>> {
    if len == 0 || stride == 0 {
        return config("window length and stride must be positive");
    }
    if rows < len {
        return Ok(Vec::new());
    }
    Ok((0..=rows - len).step_by(stride).collect())
}

pub fn make_windows(slice: ArrayView2<f64>, len: usize, stride: usize) -> Result<Vec<Array2<f64>>> {
    Ok(window_starts(slice.nrows(), len, stride)?
        .into_iter()
        .map(|s0| slice.slice(s![s0..s0 + len, ..]).to_owned())
        .collect())
}

/// How simulated missingness is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MissingPattern {
    /// Every entry hidden independently.
    #[default]
    Mcar,
    /// Each node's timeline is cut into runs of `length` steps and each run
    /// is hidden as a whole.
    Block { length: usize },
}

/// SplitMix64 finalizer used to derive independent stream seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B5_E1B1);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hides entries of a normalized `T x N` window with probability `rate`.
/// The mask depends only on `(seed, window_id)`.
pub fn apply_missing_mask<T: Scalar>(
    window: ArrayView2<f64>,
    rate: f64,
    seed: u64,
    window_id: u64,
    pattern: MissingPattern,
) -> Result<MaskedWindow<T>> {
    if !(rate > 0.0 && rate < 1.0) {
        return config(format!("missing rate must lie in (0, 1), got {rate}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, window_id));
    let (steps, nodes) = window.dim();
    let mask = match pattern {
        MissingPattern::Mcar => Array2::from_shape_simple_fn((steps, nodes), || rng.random::<f64>() >= rate),
        MissingPattern::Block { length } => {
            if length == 0 {
                return config("block length must be positive");
            }
            let mut mask = Array2::from_elem((steps, nodes), true);
            for n in 0..nodes {
                for start in (0..steps).step_by(length) {
                    if rng.random::<f64>() < rate {
                        mask.slice_mut(s![start..(start + length).min(steps), n]).fill(false);
                    }
                }
            }
            mask
        }
    };
    MaskedWindow::from_targets(window.mapv(T::of), mask, window_id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Shared sinusoidal sources.
    pub sources: usize,
    /// Source loadings are drawn from `[loading_min, 1)`; negative values
    /// allow anti-correlated channels.
    pub loading_min: f64,
    pub min_period: f64,
    pub max_period: f64,
    /// Neighbours each node is coupled to in the latent graph.
    pub coupling_degree: usize,
    pub coupling_strength: f64,
    pub ar_coefficient: f64,
    /// Stationary standard deviation of the per-node AR(1) noise.
    pub noise_scale: f64,
    pub granularity_secs: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sources: 3,
            loading_min: 0.0,
            min_period: 60.0,
            max_period: 600.0,
            coupling_degree: 2,
            coupling_strength: 0.8,
            ar_coefficient: 0.6,
            noise_scale: 0.25,
            granularity_secs: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self, nodes: usize) -> Result<()> {
        if self.sources == 0 {
            return config("synthetic.sources must be positive");
        }
        if !(self.loading_min >= -1.0 && self.loading_min < 1.0) {
            return config("synthetic.loading_min must lie in [-1, 1)");
        }
        if !(self.min_period > 0.0 && self.max_period >= self.min_period) {
            return config("synthetic periods must satisfy 0 < min_period <= max_period");
        }
        if self.coupling_degree >= nodes.max(1) {
            return config("synthetic.coupling_degree must be below the node count");
        }
        if !(0.0..1.0).contains(&self.ar_coefficient.abs()) {
            return config("synthetic.ar_coefficient must lie in (-1, 1)");
        }
        if !(self.noise_scale >= 0.0) || !(self.coupling_strength >= 0.0) {
            return config("synthetic scales must be non-negative");
        }
        if self.granularity_secs <= 0 {
            return config("synthetic.granularity_secs must be positive");
        }
        Ok(())
    }
}

/// Synthetic dataset plus the coupling graph that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub dataset: TimeSeriesDataset,
    /// `(node, coupled_node, weight)`: `node` mixes in `coupled_node`'s signal.
    pub latent_edges: Vec<(usize, usize, f64)>,
}

impl SynthDataset {
    pub fn write_latent_graph<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["source", "target", "weight"])?;
        for &(s0, t, wgt) in &self.latent_edges {
            out.write_record([s0.to_string(), t.to_string(), wgt.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Correlated sensor channels: shared sinusoids with random loadings plus
/// per-node AR(1) noise, mixed through a sparse coupling matrix, then mapped
/// to arbitrary per-node units.
pub fn synth_generate(nodes: usize, samples: usize, seed: u64, cfg: &SynthConfig) -> Result<SynthDataset> {
    if nodes < 2 || samples == 0 {
        return input("synthetic data needs at least 2 nodes and 1 sample");
    }
    cfg.validate(nodes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let periods: Vec<f64> = (0..cfg.sources).map(|_| rng.random_range(cfg.min_period..=cfg.max_period)).collect();
    let phases: Vec<f64> = (0..cfg.sources).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let loadings = Array2::from_shape_simple_fn((nodes, cfg.sources), || rng.random_range(cfg.loading_min..1.0));

    let mut latent_edges = Vec::new();
    for i in 0..nodes {
        let mut others: Vec<usize> = (0..nodes).filter(|&j| j != i).collect();
        for k in 0..cfg.coupling_degree {
            let pick = rng.random_range(k..others.len());
            others.swap(k, pick);
            let w = cfg.coupling_strength * rng.random_range(0.5..1.0);
            latent_edges.push((i, others[k], w));
        }
    }
    let scales: Vec<f64> = (0..nodes).map(|_| rng.random_range(1.0..100.0)).collect();
    let offsets: Vec<f64> = (0..nodes).map(|_| rng.random_range(-50.0..50.0)).collect();

    let innovation = cfg.noise_scale * (1.0 - cfg.ar_coefficient * cfg.ar_coefficient).sqrt();
    let mut noise: Vec<f64> = (0..nodes)
        .map(|_| cfg.noise_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let mut values = Array2::zeros((samples, nodes));
    let mut latent = vec![0.0; nodes];
    for t in 0..samples {
        for n in 0..nodes {
            let base: f64 = (0..cfg.sources)
                .map(|m| loadings[(n, m)] * (std::f64::consts::TAU * t as f64 / periods[m] + phases[m]).sin())
                .sum();
            let eps: f64 = StandardNormal.sample(&mut rng);
            noise[n] = cfg.ar_coefficient * noise[n] + innovation * eps;
            latent[n] = base + noise[n];
        }
        for n in 0..nodes {
            values[(t, n)] = latent[n];
        }
        for &(i, j, w) in &latent_edges {
            values[(t, i)] += w * latent[j];
        }
        for n in 0..nodes {
            values[(t, n)] = values[(t, n)] * scales[n] + offsets[n];
        }
    }
    let timestamps = (0..samples as i64).map(|t| t * cfg.granularity_secs).collect();
    let names = (0..nodes).map(|n| format!("node{n:02}")).collect();
    let dataset = TimeSeriesDataset::new(format!("synthetic-n{nodes}-s{samples}-seed{seed}"), names, values, timestamps)?;
    Ok(SynthDataset { dataset, latent_edges })
}

/// Normalized slices of one dataset, scaled with training statistics only.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub stats: NormalizationStats,
    pub ranges: SplitRanges,
    pub train: Array2<f64>,
    pub val: Array2<f64>,
    pub test: Array2<f64>,
}

pub fn prepare(dataset: &TimeSeriesDataset, spec: &SplitSpec) -> Result<PreparedData> {
    let ranges = split(dataset.samples(), spec)?;
    let raw = |r: &Range<usize>| dataset.values.slice(s![r.clone(), ..]);
    let stats = minmax_fit(raw(&ranges.train))?;
    Ok(PreparedData {
        train: minmax_apply(raw(&ranges.train), &stats)?,
        val: minmax_apply(raw(&ranges.val), &stats)?,
        test: minmax_apply(raw(&ranges.test), &stats)?,
        stats,
        ranges,
    })
}
