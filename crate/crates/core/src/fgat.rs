//! Fuzzy graph attention block.
//!
//! Single-head graph attention over the dynamic graph, followed by dropout,
//! a residual connection and post-residual layer normalization:
//!
//! ```text
//! out = LayerNorm(h + Dropout(LeakyReLU(sum_j alpha_ij W h_j)))
//! alpha_ij = softmax_{j in N(i)} LeakyReLU(a . [W h_i || W h_j])
//! ```

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{config, input, Error, Result};
use crate::graph::DynamicGraph;
use crate::nn::{dropout, ForwardCtx, LayerNorm};
use crate::params::ParamStore;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FgatConfig {
    pub leaky_slope: f64,
    pub epsilon: f64,
    pub dropout: f64,
}

impl Default for FgatConfig {
    fn default() -> Self {
        Self {
            leaky_slope: 0.01,
            epsilon: 1e-5,
            dropout: 0.1,
        }
    }
}

impl FgatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.leaky_slope > 0.0) {
            return config("fgat.leaky_slope must be positive");
        }
        if !(self.epsilon > 0.0) {
            return config("fgat.epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return config("fgat.dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Concrete parameter values of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct FgatBlockParams<T> {
    /// `d_in x d_out` projection.
    pub weight: Array2<T>,
    /// `2 * d_out` attention vector; the first half scores the aggregating
    /// node, the second half the neighbour.
    pub attention: Array1<T>,
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub dropout_rate: f64,
    pub leaky_slope: T,
    pub epsilon: T,
}

impl<T: Scalar> FgatBlockParams<T> {
    pub fn validate(&self) -> Result<()> {
        let d_out = self.weight.ncols();
        if self.attention.len() != 2 * d_out {
            return config(format!(
                "attention vector has length {}, expected {}",
                self.attention.len(),
                2 * d_out
            ));
        }
        if self.gamma.len() != d_out || self.beta.len() != d_out {
            return config("normalization parameters do not match the output width");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return config("dropout rate must lie in [0, 1)");
        }
        if !(self.leaky_slope > T::zero()) {
            return config("leaky slope must be positive");
        }
        let all_finite = self
            .weight
            .iter()
            .chain(self.attention.iter())
            .chain(self.gamma.iter())
            .chain(self.beta.iter())
            .all(|x| x.is_finite());
        if !all_finite {
            return input("block parameters must be finite");
        }
        Ok(())
    }
}

fn leaky<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}

fn check_features<T: Scalar>(features: ArrayView2<T>, graph: &DynamicGraph<T>, params: &FgatBlockParams<T>) -> Result<()> {
    params.validate()?;
    if features.nrows() != graph.node_count() {
        return input(format!(
            "{} feature rows for a {}-node graph",
            features.nrows(),
            graph.node_count()
        ));
    }
    if features.ncols() != params.weight.nrows() {
        return config(format!(
            "features have width {}, projection expects {}",
            features.ncols(),
            params.weight.nrows()
        ));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return input("features must be finite");
    }
    Ok(())
}

/// Softmax-normalized attention weights over each node's neighbourhood.
pub fn attention_coefficients<T: Scalar>(
    features: ArrayView2<T>,
    graph: &DynamicGraph<T>,
    params: &FgatBlockParams<T>,
) -> Result<BTreeMap<(usize, usize), T>> {
    check_features(features, graph, params)?;
    let d = params.weight.ncols();
    let wh = features.dot(&params.weight);
    let a_src = params.attention.slice(s![..d]);
    let a_dst = params.attention.slice(s![d..]);
    let mut out = BTreeMap::new();
    for i in 0..graph.node_count() {
        let neigh: Vec<usize> = graph.neighbors(i).collect();
        if neigh.is_empty() {
            return Err(Error::Structure(format!("node {i} has no neighbours")));
        }
        let src = wh.row(i).dot(&a_src);
        let logits: Vec<T> = neigh
            .iter()
            .map(|&j| leaky(src + wh.row(j).dot(&a_dst), params.leaky_slope))
            .collect();
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        for (&j, &e) in neigh.iter().zip(&exps) {
            out.insert((i, j), e / total);
        }
    }
    Ok(out)
}

/// `h'_i = LeakyReLU(sum_{j in N(i)} alpha_ij W h_j)`.
pub fn gat_aggregate<T: Scalar>(
    features: ArrayView2<T>,
    graph: &DynamicGraph<T>,
    params: &FgatBlockParams<T>,
) -> Result<Array2<T>> {
    let alpha = attention_coefficients(features, graph, params)?;
    let wh = features.dot(&params.weight);
    let mut out = Array2::<T>::zeros((graph.node_count(), params.weight.ncols()));
    for (&(i, j), &a) in &alpha {
        let mut row = out.row_mut(i);
        row.scaled_add(a, &wh.row(j));
    }
    out.mapv_inplace(|x| leaky(x, params.leaky_slope));
    Ok(out)
}

/// `(x - mean) / sqrt(var + eps) * gamma + beta` with the population variance.
pub fn layer_norm<T: Scalar>(x: ArrayView1<T>, gamma: ArrayView1<T>, beta: ArrayView1<T>, epsilon: T) -> Result<Array1<T>> {
    if x.is_empty() {
        return input("layer_norm needs at least one feature");
    }
    if gamma.len() != x.len() || beta.len() != x.len() {
        return input("gamma/beta length differs from the input");
    }
    let d = T::of_usize(x.len());
    let mean = x.sum() / d;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / d;
    let inv = T::one() / (var + epsilon).sqrt();
    Ok(Array1::from_shape_fn(x.len(), |i| (x[i] - mean) * inv * gamma[i] + beta[i]))
}

/// Full block on a single graph. Dropout masks are drawn from `ctx` when it
/// is in training mode.
pub fn fgat_block<T: Scalar>(
    features: ArrayView2<T>,
    graph: &DynamicGraph<T>,
    params: &FgatBlockParams<T>,
    ctx: &mut ForwardCtx,
) -> Result<Array2<T>> {
    check_features(features, graph, params)?;
    if params.weight.nrows() != params.weight.ncols() {
        return config(format!(
            "residual needs d_in == d_out, got {} and {}",
            params.weight.nrows(),
            params.weight.ncols()
        ));
    }
    let (store, block) = FgatBlock::from_params(params);
    let mut tape = Tape::new();
    let p = tape.params(&store);
    let h = tape.input(features.to_owned());
    let out = block.forward(&mut tape, &p, h, &graph.adjacency(), 1, ctx)?;
    Ok(tape.value(out).clone())
}

/// Parameter slots of one block inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgatBlock {
    pub weight: usize,
    pub attention: usize,
    pub norm: LayerNorm,
    pub cfg: FgatConfig,
    pub width: usize,
}

impl FgatBlock {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, width: usize, cfg: FgatConfig, rng: &mut R) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), width, width, rng);
        let attention = store.add_glorot(format!("{name}.attention"), 2 * width, 1, rng);
        let norm = LayerNorm::new(store, &format!("{name}.norm"), width, cfg.epsilon);
        Self {
            weight,
            attention,
            norm,
            cfg,
            width,
        }
    }

    fn from_params<T: Scalar>(p: &FgatBlockParams<T>) -> (ParamStore<T>, Self) {
        let mut store = ParamStore::new();
        let d = p.weight.ncols();
        let weight = store.add("weight", p.weight.clone());
        let attention = store.add(
            "attention",
            p.attention.clone().into_shape_with_order((2 * d, 1)).expect("vector"),
        );
        let gamma = store.add("gamma", p.gamma.clone().insert_axis(ndarray::Axis(0)));
        let beta = store.add("beta", p.beta.clone().insert_axis(ndarray::Axis(0)));
        let cfg = FgatConfig {
            leaky_slope: p.leaky_slope.to_f64_lossy(),
            epsilon: p.epsilon.to_f64_lossy(),
            dropout: p.dropout_rate,
        };
        let block = Self {
            weight,
            attention,
            norm: LayerNorm {
                gamma,
                beta,
                epsilon: cfg.epsilon,
            },
            cfg,
            width: d,
        };
        (store, block)
    }

    /// Extracts the block's values from `store`.
    pub fn params<T: Scalar>(&self, store: &ParamStore<T>) -> FgatBlockParams<T> {
        let row = |slot: usize| store.get(slot).row(0).to_owned();
        FgatBlockParams {
            weight: store.get(self.weight).clone(),
            attention: store.get(self.attention).column(0).to_owned(),
            gamma: row(self.norm.gamma),
            beta: row(self.norm.beta),
            dropout_rate: self.cfg.dropout,
            leaky_slope: T::of(self.cfg.leaky_slope),
            epsilon: T::of(self.cfg.epsilon),
        }
    }

    /// Applies the block to `groups` stacked node sets sharing one graph.
    /// `h` is `(groups * N) x width`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        h: Var,
        adjacency: &[bool],
        groups: usize,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let slope = T::of(self.cfg.leaky_slope);
        let wh = tape.matmul(h, p[self.weight]);
        let a_src = tape.slice_rows(p[self.attention], 0, self.width);
        let a_dst = tape.slice_rows(p[self.attention], self.width, self.width);
        let src = tape.matmul(wh, a_src);
        let dst = tape.matmul(wh, a_dst);
        let agg = tape.graph_attention(wh, src, dst, adjacency, groups, slope)?;
        let act = tape.leaky_relu(agg, slope);
        let dropped = dropout(tape, act, self.cfg.dropout, ctx);
        let res = tape.add(h, dropped);
        Ok(self.norm.forward(tape, p, res))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, Edge};
    use crate::gradcheck::check_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(d: usize, seed: u64) -> FgatBlockParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = || rng.random_range(-1.0..1.0);
        FgatBlockParams {
            weight: Array2::from_shape_simple_fn((d, d), &mut u),
            attention: Array1::from_shape_simple_fn(2 * d, &mut u),
            gamma: Array1::from_shape_simple_fn(d, &mut u),
            beta: Array1::from_shape_simple_fn(d, &mut u),
            dropout_rate: 0.0,
            leaky_slope: 0.2,
            epsilon: 1e-5,
        }
    }

    fn random_features(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
    }

    fn random_graph(n: usize, k: usize, seed: u64) -> DynamicGraph<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pooled = Array2::from_shape_simple_fn((n, n), || rng.random::<f64>());
        build_graph(&pooled, k).unwrap()
    }

    /// Scalar re-evaluation of the coefficient formula, one edge at a time.
    fn oracle_alpha(x: &Array2<f64>, g: &DynamicGraph<f64>, p: &FgatBlockParams<f64>, i: usize, j: usize) -> f64 {
        let d = p.weight.ncols();
        let proj = |node: usize, c: usize| (0..x.ncols()).map(|r| x[(node, r)] * p.weight[(r, c)]).sum::<f64>();
        let logit = |a: usize, b: usize| {
            let mut z = 0.0;
            for c in 0..d {
                z += p.attention[c] * proj(a, c) + p.attention[d + c] * proj(b, c);
            }
            if z > 0.0 {
                z
            } else {
                0.2 * z
            }
        };
        let denom: f64 = g.neighbors(i).map(|k| logit(i, k).exp()).sum();
        logit(i, j).exp() / denom
    }

    #[test]
    fn coefficients_match_scalar_oracle() {
        let x = random_features(5, 3, 1);
        let g = random_graph(5, 2, 2);
        let p = random_params(3, 3);
        let alpha = attention_coefficients(x.view(), &g, &p).unwrap();
        assert_eq!(alpha.len(), g.edges().len());
        for (&(i, j), &a) in &alpha {
            assert!((a - oracle_alpha(&x, &g, &p, i, j)).abs() < 1e-12);
        }
        for i in 0..5 {
            let s: f64 = alpha.iter().filter(|((src, _), _)| *src == i).map(|(_, a)| a).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_and_uniform_neighbourhoods() {
        let g = DynamicGraph::new(
            3,
            vec![
                Edge { source: 0, target: 1, weight: 1.0 },
                Edge { source: 1, target: 0, weight: 1.0 },
                Edge { source: 1, target: 2, weight: 1.0 },
                Edge { source: 2, target: 0, weight: 1.0 },
            ],
            0,
        )
        .unwrap();
        let mut x = random_features(3, 2, 5);
        let row = x.row(0).to_owned();
        x.row_mut(2).assign(&row);
        let p = random_params(2, 6);
        let alpha = attention_coefficients(x.view(), &g, &p).unwrap();
        assert_eq!(alpha[&(0, 1)], 1.0);
        assert!((alpha[&(1, 0)] - 0.5).abs() < 1e-15);
        assert!((alpha[&(1, 2)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn aggregate_examples() {
        let g = DynamicGraph::new(2, vec![Edge { source: 0, target: 1, weight: 1.0 }, Edge { source: 1, target: 0, weight: 1.0 }], 0).unwrap();
        let mut p = random_params(2, 7);
        p.weight = Array2::eye(2);
        let x = ndarray::array![[0.5, -1.0], [-2.0, 3.0]];
        let out = gat_aggregate(x.view(), &g, &p).unwrap();
        assert_eq!(out.row(0).to_vec(), vec![-0.4, 3.0]);
        assert_eq!(out.row(1).to_vec(), vec![0.5, -0.2]);

        let zeros = Array2::zeros((2, 2));
        assert!(gat_aggregate(zeros.view(), &g, &random_params(2, 8)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aggregate_matches_oracle() {
        let x = random_features(5, 3, 9);
        let g = random_graph(5, 3, 10);
        let p = random_params(3, 11);
        let out = gat_aggregate(x.view(), &g, &p).unwrap();
        let wh = x.dot(&p.weight);
        for i in 0..5 {
            for c in 0..3 {
                let z: f64 = g.neighbors(i).map(|j| oracle_alpha(&x, &g, &p, i, j) * wh[(j, c)]).sum();
                let expect = if z > 0.0 { z } else { 0.2 * z };
                assert!((out[(i, c)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_examples() {
        let ones = Array1::from_elem(3, 1.0);
        let zeros = Array1::zeros(3);
        let c = layer_norm(ndarray::array![4.0, 4.0, 4.0].view(), ones.view(), zeros.view(), 1e-5).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));

        let y = layer_norm(ndarray::array![1.0, 2.0, 3.0].view(), ones.view(), zeros.view(), 1e-12).unwrap();
        let expect: [f64; 3] = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in y.iter().zip(expect) {
            assert!((a - b).abs() < 1e-5);
        }

        let beta = ndarray::array![0.3, -0.1, 2.0];
        let z = layer_norm(ndarray::array![1.0, 5.0, 3.0].view(), zeros.view(), beta.view(), 1e-5).unwrap();
        assert_eq!(z, beta);
        assert!(layer_norm(Array1::<f64>::zeros(0).view(), zeros.view(), zeros.view(), 1e-5).is_err());
    }

    #[test]
    fn tape_block_matches_plain_composition() {
        let x = random_features(6, 4, 12);
        let g = random_graph(6, 2, 13);
        let p = random_params(4, 14);
        let out = fgat_block(x.view(), &g, &p, &mut ForwardCtx::eval()).unwrap();
        let agg = gat_aggregate(x.view(), &g, &p).unwrap();
        let res = &x + &agg;
        for i in 0..6 {
            let expect = layer_norm(res.row(i), p.gamma.view(), p.beta.view(), 1e-5).unwrap();
            for c in 0..4 {
                assert!((out[(i, c)] - expect[c]).abs() < 1e-12);
            }
        }
        let again = fgat_block(x.view(), &g, &p, &mut ForwardCtx::eval()).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn block_rejects_bad_shapes() {
        let g = random_graph(4, 2, 15);
        let mut p = random_params(3, 16);
        let x = random_features(4, 2, 17);
        assert!(matches!(fgat_block(x.view(), &g, &p, &mut ForwardCtx::eval()), Err(Error::Config(_))));
        p.weight = random_features(3, 2, 18);
        p.attention = Array1::zeros(4);
        p.gamma = Array1::ones(2);
        p.beta = Array1::zeros(2);
        let x3 = random_features(4, 3, 19);
        assert!(matches!(fgat_block(x3.view(), &g, &p, &mut ForwardCtx::eval()), Err(Error::Config(_))));
        let mut bad = random_params(3, 20);
        bad.dropout_rate = 1.0;
        assert!(fgat_block(x3.view(), &g, &bad, &mut ForwardCtx::eval()).is_err());
    }

    #[test]
    fn dropout_only_in_training() {
        let x = random_features(6, 4, 21);
        let g = random_graph(6, 2, 22);
        let mut p = random_params(4, 23);
        p.dropout_rate = 0.5;
        let a = fgat_block(x.view(), &g, &p, &mut ForwardCtx::eval()).unwrap();
        let b = fgat_block(x.view(), &g, &p, &mut ForwardCtx::eval()).unwrap();
        assert_eq!(a, b);
        let c = fgat_block(x.view(), &g, &p, &mut ForwardCtx::train(1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut store = ParamStore::<f64>::new();
        let block = FgatBlock::new(&mut store, "b", 3, FgatConfig { leaky_slope: 0.2, ..Default::default() }, &mut rng);
        for slot in [block.norm.gamma, block.norm.beta] {
            store.get_mut(slot).mapv_inplace(|_| rng.random_range(0.5..1.5));
        }
        let x = random_features(4, 3, 25);
        let g = random_graph(4, 2, 26);
        let adj = g.adjacency();
        let w = random_features(4, 3, 27);
        let err = check_params(&store, 1e-5, |tape, s| {
            let p = tape.params(s);
            let h = tape.input(x.clone());
            let out = block.forward(tape, &p, h, &adj, 1, &mut ForwardCtx::eval()).unwrap();
            let wv = tape.input(w.clone());
            let prod = tape.mul(out, wv);
            tape.sum(prod)
        });
        assert!(err < 1e-4, "relative error {err}");
    }
}
