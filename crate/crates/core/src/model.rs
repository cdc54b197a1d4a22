//! The spatio-temporal imputation model and the interface every imputer
//! implements.
//!
//! Routing of one `T x N` window through [`FgattModel`]:
//!
//! 1. each (value, observed-bit) pair is embedded to `d_model`;
//! 2. one dynamic graph is built from the zero-filled window;
//! 3. the FGAT blocks run on every timestep's node set, sharing weights;
//! 4. sinusoidal positions are added and the encoder runs along time for
//!    every node, sharing weights;
//! 5. a linear head maps each embedding to a scalar prediction.

use std::rc::Rc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::encoder::{positional_encoding, EncoderConfig, TemporalEncoder};
use crate::error::{config, input, Result};
use crate::fgat::{FgatBlock, FgatConfig};
use crate::graph::{construct_window_graph, GraphConfig};
use crate::nn::{ForwardCtx, Linear};
use crate::params::ParamStore;
use crate::Scalar;

/// A `T x N` window with its observation mask and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedWindow<T> {
    /// Normalized values, zero wherever `mask` is false.
    pub values: Array2<T>,
    /// `true` for observed entries.
    pub mask: Array2<bool>,
    pub targets: Array2<T>,
    pub window_id: u64,
}

impl<T: Scalar> MaskedWindow<T> {
    /// Builds a window by hiding the entries of `targets` where `mask` is false.
    pub fn from_targets(targets: Array2<T>, mask: Array2<bool>, window_id: u64) -> Result<Self> {
        if targets.dim() != mask.dim() {
            return input(format!(
                "mask shape {:?} differs from target shape {:?}",
                mask.dim(),
                targets.dim()
            ));
        }
        let mut values = targets.clone();
        values.zip_mut_with(&mask, |v, &m| {
            if !m {
                *v = T::zero()
            }
        });
        Ok(Self {
            values,
            mask,
            targets,
            window_id,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.targets.dim();
        if self.values.dim() != dim || self.mask.dim() != dim {
            return input("window arrays differ in shape");
        }
        for ((&v, &t), &m) in self.values.iter().zip(&self.targets).zip(&self.mask) {
            if (m && v != t) || (!m && v != T::zero()) {
                return input("window values are inconsistent with the mask");
            }
            if !v.is_finite() || !t.is_finite() {
                return input("window contains non-finite entries");
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.values.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.values.ncols()
    }

    pub fn missing(&self) -> Array2<bool> {
        self.mask.mapv(|m| !m)
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    /// `(T * N) x 2` rows of (value, observed bit), time-major.
    pub(crate) fn embedding_input(&self) -> Array2<T> {
        let (t, n) = self.values.dim();
        let mut x = Array2::zeros((t * n, 2));
        for ((ti, ni), &v) in self.values.indexed_iter() {
            x[(ti * n + ni, 0)] = v;
            x[(ti * n + ni, 1)] = if self.mask[(ti, ni)] { T::one() } else { T::zero() };
        }
        x
    }
}

/// Which imputer to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fgatt,
    Ffn,
    Bgru,
    Transformer,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Fgatt, ModelKind::Ffn, ModelKind::Bgru, ModelKind::Transformer];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fgatt => "fgatt",
            ModelKind::Ffn => "ffn",
            ModelKind::Bgru => "bgru",
            ModelKind::Transformer => "transformer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sizes and hyperparameters for every model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    /// Feedforward width; `None` means `4 * d_model`.
    pub d_ff: Option<usize>,
    pub encoder_layers: usize,
    pub fgat_blocks: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub epsilon: f64,
    pub positional_encoding: bool,
    /// Hidden width of the feedforward baseline.
    pub ffn_hidden: usize,
    /// Hidden width per direction of the recurrent baseline.
    pub gru_hidden: usize,
    pub graph: GraphConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 4,
            d_ff: None,
            encoder_layers: 2,
            fgat_blocks: 2,
            dropout: 0.1,
            leaky_slope: 0.01,
            epsilon: 1e-5,
            positional_encoding: true,
            ffn_hidden: 256,
            gru_hidden: 64,
            graph: GraphConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn encoder(&self, max_len: usize) -> EncoderConfig {
        EncoderConfig {
            d_model: self.d_model,
            heads: self.heads,
            d_ff: self.d_ff.unwrap_or(4 * self.d_model),
            layers: self.encoder_layers,
            dropout: self.dropout,
            max_len,
            epsilon: self.epsilon,
        }
    }

    pub fn fgat(&self) -> FgatConfig {
        FgatConfig {
            leaky_slope: self.leaky_slope,
            epsilon: self.epsilon,
            dropout: self.dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder(1).validate()?;
        self.fgat().validate()?;
        self.graph.validate()?;
        if self.ffn_hidden == 0 || self.gru_hidden == 0 {
            return config("baseline hidden sizes must be positive");
        }
        Ok(())
    }
}

/// Window geometry a model is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub steps: usize,
    pub nodes: usize,
}

/// Common surface of the trainable imputers.
pub trait Imputer<T: Scalar>: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn config(&self) -> &ModelConfig;
    fn shape(&self) -> Shape;
    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;

    /// Records the forward pass on `tape` and returns the `T x N` predictions.
    fn forward_tape(&self, tape: &mut Tape<T>, p: &[Var], window: &MaskedWindow<T>, ctx: &mut ForwardCtx) -> Result<Var>;

    fn forward(&self, window: &MaskedWindow<T>, ctx: &mut ForwardCtx) -> Result<Array2<T>> {
        let mut tape = Tape::new();
        let p = tape.params(self.params());
        let out = self.forward_tape(&mut tape, &p, window, ctx)?;
        Ok(tape.value(out).clone())
    }

    /// Observed entries copied through; missing ones predicted and clamped to `[0, 1]`.
    fn impute(&self, window: &MaskedWindow<T>) -> Result<Array2<T>> {
        let pred = self.forward(window, &mut ForwardCtx::eval())?;
        Ok(fill_missing(window, &pred))
    }
}

pub(crate) fn check_window<T: Scalar>(window: &MaskedWindow<T>, shape: Shape) -> Result<()> {
    if window.steps() != shape.steps || window.nodes() != shape.nodes {
        return input(format!(
            "window is {}x{}, model expects {}x{}",
            window.steps(),
            window.nodes(),
            shape.steps,
            shape.nodes
        ));
    }
    window.validate()
}

/// Keeps observed entries, fills the rest from `pred` clamped to `[0, 1]`.
pub fn fill_missing<T: Scalar>(window: &MaskedWindow<T>, pred: &Array2<T>) -> Array2<T> {
    let mut out = window.targets.clone();
    ndarray::Zip::from(&mut out)
        .and(&window.mask)
        .and(pred)
        .for_each(|o, &m, &p| {
            if !m {
                *o = p.max(T::zero()).min(T::one());
            }
        });
    out
}

/// Mean of squared errors over the missing entries.
pub fn masked_mse_loss<T: Scalar>(pred: &Array2<T>, window: &MaskedWindow<T>) -> Result<T> {
    if pred.dim() != window.targets.dim() {
        return input(format!(
            "prediction shape {:?} differs from window shape {:?}",
            pred.dim(),
            window.targets.dim()
        ));
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for ((&p, &t), &m) in pred.iter().zip(&window.targets).zip(&window.mask) {
        if !m {
            total += (p - t) * (p - t);
            count += 1;
        }
    }
    if count == 0 {
        return input("window has no missing entries");
    }
    Ok(total / T::of_usize(count))
}

/// Tape version of [`masked_mse_loss`].
pub fn masked_mse_tape<T: Scalar>(tape: &mut Tape<T>, pred: Var, window: &MaskedWindow<T>) -> Result<Var> {
    tape.masked_mse(pred, &window.targets, &window.missing())
}

/// Row permutation taking time-major `(t, n)` rows to node-major `(n, t)`.
pub(crate) fn time_to_node_major(steps: usize, nodes: usize) -> Rc<Vec<usize>> {
    Rc::new(
        (0..nodes)
            .flat_map(|n| (0..steps).map(move |t| t * nodes + n))
            .collect(),
    )
}

pub(crate) fn node_to_time_major(steps: usize, nodes: usize) -> Rc<Vec<usize>> {
    Rc::new(
        (0..steps)
            .flat_map(|t| (0..nodes).map(move |n| n * steps + t))
            .collect(),
    )
}

/// Embedding, optional positions, encoder and head, shared by FGATT and the
/// transformer-only baseline. `h` is node-major `(N * T) x d_model`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TemporalHead {
    pub encoder: TemporalEncoder,
    pub head: Linear,
    pub positional: bool,
}

impl TemporalHead {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], h: Var, shape: Shape, ctx: &mut ForwardCtx) -> Result<Var> {
        let d = self.encoder.cfg.d_model;
        let h = if self.positional {
            let pe = positional_encoding::<T>(shape.steps, d);
            let mut tiled = Array2::zeros((shape.nodes * shape.steps, d));
            for n in 0..shape.nodes {
                tiled
                    .slice_mut(ndarray::s![n * shape.steps..(n + 1) * shape.steps, ..])
                    .assign(&pe);
            }
            let pe = tape.input(tiled);
            tape.add(h, pe)
        } else {
            h
        };
        let (enc, _) = self.encoder.forward(tape, p, h, shape.nodes, ctx)?;
        let out = self.head.forward(tape, p, enc);
        let out = tape.gather_rows(out, node_to_time_major(shape.steps, shape.nodes));
        tape.reshape(out, shape.steps, shape.nodes)
    }
}

/// Fuzzy graph attention followed by the temporal encoder.
#[derive(Debug, Clone)]
pub struct FgattModel<T> {
    cfg: ModelConfig,
    shape: Shape,
    params: ParamStore<T>,
    embed: Linear,
    blocks: Vec<FgatBlock>,
    temporal: TemporalHead,
}

impl<T: Scalar> FgattModel<T> {
    pub fn new(cfg: ModelConfig, shape: Shape, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if shape.nodes < 2 {
            return config("the graph needs at least two nodes");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let embed = Linear::new(&mut params, "embed", 2, cfg.d_model, &mut rng);
        let blocks = (0..cfg.fgat_blocks)
            .map(|b| FgatBlock::new(&mut params, &format!("fgat{b}"), cfg.d_model, cfg.fgat(), &mut rng))
            .collect();
        let encoder = TemporalEncoder::new(&mut params, "encoder", cfg.encoder(shape.steps), &mut rng)?;
        let head = Linear::new(&mut params, "head", cfg.d_model, 1, &mut rng);
        let positional = cfg.positional_encoding;
        Ok(Self {
            cfg,
            shape,
            params,
            embed,
            blocks,
            temporal: TemporalHead {
                encoder,
                head,
                positional,
            },
        })
    }

    pub fn blocks(&self) -> &[FgatBlock] {
        &self.blocks
    }

    pub fn encoder(&self) -> &TemporalEncoder {
        &self.temporal.encoder
    }

    pub fn head(&self) -> Linear {
        self.temporal.head
    }
}

impl<T: Scalar> Imputer<T> for FgattModel<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Fgatt
    }

    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn shape(&self) -> Shape {
        self.shape
    }

    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    fn forward_tape(&self, tape: &mut Tape<T>, p: &[Var], window: &MaskedWindow<T>, ctx: &mut ForwardCtx) -> Result<Var> {
        check_window(window, self.shape)?;
        let Shape { steps, nodes } = self.shape;
        let graph = construct_window_graph(window, &self.cfg.graph)?;
        let adjacency = graph.adjacency();

        let x = tape.input(window.embedding_input());
        let mut h = self.embed.forward(tape, p, x);
        for block in &self.blocks {
            h = block.forward(tape, p, h, &adjacency, steps, ctx)?;
        }
        let h = tape.gather_rows(h, time_to_node_major(steps, nodes));
        self.temporal.forward(tape, p, h, self.shape, ctx)
    }
}
