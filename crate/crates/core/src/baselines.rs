//! Comparison imputers sharing the FGATT input/output conventions, plus the
//! per-node mean reference.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::encoder::TemporalEncoder;
use crate::error::Result;
use crate::model::{check_window, time_to_node_major, FgattModel, Imputer, MaskedWindow, ModelConfig, ModelKind, Shape, TemporalHead};
use crate::nn::{dropout, ForwardCtx, Linear};
use crate::params::ParamStore;
use crate::Scalar;

/// The FGATT pipeline with the graph attention stack removed: each node's
/// sequence is encoded independently.
#[derive(Debug, Clone)]
pub struct TransformerOnly<T> {
    cfg: ModelConfig,
    shape: Shape,
    params: ParamStore<T>,
    embed: Linear,
    temporal: TemporalHead,
}

impl<T: Scalar> TransformerOnly<T> {
    pub fn new(cfg: ModelConfig, shape: Shape, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let embed = Linear::new(&mut params, "embed", 2, cfg.d_model, &mut rng);
        let encoder = TemporalEncoder::new(&mut params, "encoder", cfg.encoder(shape.steps), &mut rng)?;
        let head = Linear::new(&mut params, "head", cfg.d_model, 1, &mut rng);
        let positional = cfg.positional_encoding;
        Ok(Self {
            cfg,
            shape,
            params,
            embed,
            temporal: TemporalHead {
                encoder,
                head,
                positional,
            },
        })
    }
}

impl<T: Scalar> Imputer<T> for TransformerOnly<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Transformer
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
        let x = tape.input(window.embedding_input());
        let x = tape.gather_rows(x, time_to_node_major(self.shape.steps, self.shape.nodes));
        let h = self.embed.forward(tape, p, x);
        self.temporal.forward(tape, p, h, self.shape, ctx)
    }
}

/// Two-hidden-layer perceptron over the flattened window (values followed
/// by observation bits).
#[derive(Debug, Clone)]
pub struct FeedForward<T> {
    cfg: ModelConfig,
    shape: Shape,
    params: ParamStore<T>,
    layers: [Linear; 3],
}

impl<T: Scalar> FeedForward<T> {
    pub fn new(cfg: ModelConfig, shape: Shape, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let cells = shape.steps * shape.nodes;
        let hidden = cfg.ffn_hidden;
        let layers = [
            Linear::new(&mut params, "ffn.in", 2 * cells, hidden, &mut rng),
            Linear::new(&mut params, "ffn.hidden", hidden, hidden, &mut rng),
            Linear::new(&mut params, "ffn.out", hidden, cells, &mut rng),
        ];
        Ok(Self {
            cfg,
            shape,
            params,
            layers,
        })
    }
}

impl<T: Scalar> Imputer<T> for FeedForward<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Ffn
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
        let cells = self.shape.steps * self.shape.nodes;
        let mut flat = Array2::zeros((1, 2 * cells));
        for (i, (&v, &m)) in window.values.iter().zip(&window.mask).enumerate() {
            flat[(0, i)] = v;
            flat[(0, cells + i)] = if m { T::one() } else { T::zero() };
        }
        let x = tape.input(flat);
        let h = self.layers[0].forward(tape, p, x);
        let h = tape.relu(h);
        let h = dropout(tape, h, self.cfg.dropout, ctx);
        let h = self.layers[1].forward(tape, p, h);
        let h = tape.relu(h);
        let h = dropout(tape, h, self.cfg.dropout, ctx);
        let out = self.layers[2].forward(tape, p, h);
        tape.reshape(out, self.shape.steps, self.shape.nodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GruCell {
    /// `2 x 3H` input projection for the update, reset and candidate gates.
    input: Linear,
    update: Linear,
    reset: Linear,
    candidate: Linear,
    hidden: usize,
}

impl GruCell {
    fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            input: Linear::new(store, &format!("{name}.input"), 2, 3 * hidden, rng),
            update: Linear::no_bias(store, &format!("{name}.update"), hidden, hidden, rng),
            reset: Linear::no_bias(store, &format!("{name}.reset"), hidden, hidden, rng),
            candidate: Linear::no_bias(store, &format!("{name}.candidate"), hidden, hidden, rng),
            hidden,
        }
    }

    /// Runs over `order` (timestep indices), returning hidden states indexed
    /// by timestep. `x` is time-major `(T * N) x 2`.
    fn run<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], x: Var, shape: Shape, order: &[usize]) -> Vec<Var> {
        let h_dim = self.hidden;
        let proj = self.input.forward(tape, p, x);
        let mut states: Vec<Option<Var>> = vec![None; shape.steps];
        let mut h = tape.input(Array2::zeros((shape.nodes, h_dim)));
        for &t in order {
            let xt = tape.slice_rows(proj, t * shape.nodes, shape.nodes);
            let xz = tape.slice_cols(xt, 0, h_dim);
            let xr = tape.slice_cols(xt, h_dim, h_dim);
            let xn = tape.slice_cols(xt, 2 * h_dim, h_dim);
            let hz = self.update.forward(tape, p, h);
            let z = tape.add(xz, hz);
            let z = tape.sigmoid(z);
            let hr = self.reset.forward(tape, p, h);
            let r = tape.add(xr, hr);
            let r = tape.sigmoid(r);
            let rh = tape.mul(r, h);
            let hn = self.candidate.forward(tape, p, rh);
            let n = tape.add(xn, hn);
            let n = tape.tanh(n);
            let keep_new = tape.one_minus(z);
            let a = tape.mul(keep_new, n);
            let b = tape.mul(z, h);
            h = tape.add(a, b);
            states[t] = Some(h);
        }
        states.into_iter().map(|s| s.expect("every step visited")).collect()
    }
}

/// Bidirectional GRU over the time axis, shared across nodes.
#[derive(Debug, Clone)]
pub struct BiGru<T> {
    cfg: ModelConfig,
    shape: Shape,
    params: ParamStore<T>,
    forward_cell: GruCell,
    backward_cell: GruCell,
    head: Linear,
}

impl<T: Scalar> BiGru<T> {
    pub fn new(cfg: ModelConfig, shape: Shape, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let hidden = cfg.gru_hidden;
        let forward_cell = GruCell::new(&mut params, "gru.fwd", hidden, &mut rng);
        let backward_cell = GruCell::new(&mut params, "gru.bwd", hidden, &mut rng);
        let head = Linear::new(&mut params, "head", 2 * hidden, 1, &mut rng);
        Ok(Self {
            cfg,
            shape,
            params,
            forward_cell,
            backward_cell,
            head,
        })
    }
}

impl<T: Scalar> Imputer<T> for BiGru<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Bgru
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
        let steps = self.shape.steps;
        let x = tape.input(window.embedding_input());
        let order: Vec<usize> = (0..steps).collect();
        let reversed: Vec<usize> = (0..steps).rev().collect();
        let fwd = self.forward_cell.run(tape, p, x, self.shape, &order);
        let bwd = self.backward_cell.run(tape, p, x, self.shape, &reversed);
        let per_step: Vec<Var> = fwd.iter().zip(&bwd).map(|(&f, &b)| tape.concat_cols(&[f, b])).collect();
        // time-major (T * N) x 2H
        let h = tape.concat_rows(&per_step);
        let h = dropout(tape, h, self.cfg.dropout, ctx);
        let out = self.head.forward(tape, p, h);
        tape.reshape(out, steps, self.shape.nodes)
    }
}

/// Builds an untrained imputer of the requested kind.
pub fn build_model<T: Scalar>(kind: ModelKind, cfg: &ModelConfig, shape: Shape, seed: u64) -> Result<Box<dyn Imputer<T>>> {
    let cfg = cfg.clone();
    Ok(match kind {
        ModelKind::Fgatt => Box::new(FgattModel::new(cfg, shape, seed)?),
        ModelKind::Ffn => Box::new(FeedForward::new(cfg, shape, seed)?),
        ModelKind::Bgru => Box::new(BiGru::new(cfg, shape, seed)?),
        ModelKind::Transformer => Box::new(TransformerOnly::new(cfg, shape, seed)?),
    })
}

/// Predicts every entry by its node's mean over the observed entries of the
/// window; nodes with nothing observed get 0.5.
pub fn mean_impute_reference<T: Scalar>(window: &MaskedWindow<T>) -> Array2<T> {
    let (steps, nodes) = window.values.dim();
    let mut pred = Array2::zeros((steps, nodes));
    for n in 0..nodes {
        let (sum, count) = (0..steps)
            .filter(|&t| window.mask[(t, n)])
            .fold((T::zero(), 0usize), |(s, c), t| (s + window.values[(t, n)], c + 1));
        let fill = if count == 0 { T::of(0.5) } else { sum / T::of_usize(count) };
        pred.column_mut(n).fill(fill);
    }
    pred
}
