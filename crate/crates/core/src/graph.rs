//! Dynamic graph construction from fuzzy-rough connectivity scores.
//!
//! For every timestep of a window the pairwise scores
//! `alpha * L(j <- i) + (1 - alpha) * L(i <- j)` are computed, where
//! `L(j <- i)` is the lower approximation of node `i`'s features with respect
//! to the similarity class of node `j`. Scores are pooled over time and each
//! node keeps its `K` strongest neighbours. Self-loops are never emitted.

use std::cmp::Ordering;
use std::io::Write;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{config, input, Result};
use crate::fuzzy::Kernel;
use crate::model::MaskedWindow;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

/// How edges are retained after pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSelection {
    /// The `K` strongest targets of every node.
    #[default]
    PerNode,
    /// The `K` strongest directed pairs of the whole matrix. Nodes may end up
    /// without neighbours, which the attention layers reject.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    /// Balance between the two directed inclusion degrees, in `[0, 1]`.
    pub alpha: f64,
    /// Gaussian kernel bandwidth in normalized feature units.
    pub sigma: f64,
    /// Neighbours kept per node (or in total for [`EdgeSelection::Global`]).
    pub k: usize,
    pub pooling: Pooling,
    pub selection: EdgeSelection,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            sigma: 1.0,
            k: 8,
            pooling: Pooling::Mean,
            selection: EdgeSelection::PerNode,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.sigma > 0.0) {
            return config(format!("graph.sigma must be positive, got {}", self.sigma));
        }
        if self.k == 0 {
            return config("graph.k must be at least 1");
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return config(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    Ok(())
}

/// Per-timestep connectivity scores, shape `T x N x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTensor<T> {
    scores: Array3<T>,
}

impl<T: Scalar> ScoreTensor<T> {
    pub fn new(scores: Array3<T>) -> Result<Self> {
        let (_, n, m) = scores.dim();
        if n != m {
            return input(format!("score slices must be square, got {n}x{m}"));
        }
        if scores.iter().any(|&s| !(s >= T::zero() && s <= T::one())) {
            return input("connectivity scores must lie in [0, 1]");
        }
        Ok(Self { scores })
    }

    pub fn steps(&self) -> usize {
        self.scores.len_of(Axis(0))
    }

    pub fn node_count(&self) -> usize {
        self.scores.len_of(Axis(1))
    }

    pub fn scores(&self) -> &Array3<T> {
        &self.scores
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge<T> {
    pub source: usize,
    pub target: usize,
    pub weight: T,
}

/// Directed sparse graph for one window. An edge `i -> j` means `j` feeds
/// node `i`'s neighbourhood aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGraph<T> {
    node_count: usize,
    edges: Vec<Edge<T>>,
    built_from: u64,
}

impl<T: Scalar> DynamicGraph<T> {
    pub fn new(node_count: usize, edges: Vec<Edge<T>>, built_from: u64) -> Result<Self> {
        for e in &edges {
            if e.source >= node_count || e.target >= node_count {
                return input(format!(
                    "edge {}->{} outside a {node_count}-node graph",
                    e.source, e.target
                ));
            }
            if e.source == e.target {
                return input(format!("self-loop on node {}", e.source));
            }
        }
        Ok(Self {
            node_count,
            edges,
            built_from,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn built_from(&self) -> u64 {
        self.built_from
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.source == node)
            .map(|e| e.target)
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.neighbors(node).count()
    }

    /// Row-major `N x N` adjacency indicator, `adj[i * N + j]` for edge `i -> j`.
    pub fn adjacency(&self) -> Vec<bool> {
        let n = self.node_count;
        let mut adj = vec![false; n * n];
        for e in &self.edges {
            adj[e.source * n + e.target] = true;
        }
        adj
    }

    /// Writes `source,target,weight` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["source", "target", "weight"])?;
        for e in &self.edges {
            out.write_record([
                e.source.to_string(),
                e.target.to_string(),
                e.weight.to_f64_lossy().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Lower-approximation inclusion degrees for one timestep:
/// `incl[(i, j)] = L(j <- i) = min_y max(1 - R(x_i, y), R(y, x_j))`.
fn inclusion_matrix<T: Scalar>(features: ArrayView2<T>, kernel: &Kernel<T>) -> Array2<T> {
    let n = features.nrows();
    let mut sim = Array2::<T>::zeros((n, n));
    for a in 0..n {
        for b in a..n {
            let sq: T = features
                .row(a)
                .iter()
                .zip(features.row(b).iter())
                .map(|(&p, &q)| (p - q) * (p - q))
                .sum();
            let r = if a == b { T::one() } else { kernel.eval_sq_dist(sq) };
            sim[(a, b)] = r;
            sim[(b, a)] = r;
        }
    }
    let mut incl = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut lo = T::one();
            for y in 0..n {
                lo = lo.min((T::one() - sim[(i, y)]).max(sim[(y, j)]));
            }
            incl[(i, j)] = lo;
        }
    }
    incl
}

/// Connectivity score of the pair `(i, j)` at one timestep. `features_t`
/// holds one row per node.
pub fn score_at_t<T: Scalar>(
    features_t: ArrayView2<T>,
    i: usize,
    j: usize,
    alpha: T,
    kernel: &Kernel<T>,
) -> Result<T> {
    check_alpha(alpha.to_f64_lossy())?;
    let features_t = features_t.as_standard_layout();
    let n = features_t.nrows();
    if i >= n || j >= n {
        return input(format!("node index out of range for {n} nodes"));
    }
    let lower = |src: usize, dst: usize| {
        let xs = features_t.row(src);
        let xd = features_t.row(dst);
        let mut lo = T::one();
        for y in features_t.rows() {
            let r_xy = kernel.eval(xs.as_slice().unwrap(), y.as_slice().unwrap());
            let d_y = kernel.eval(y.as_slice().unwrap(), xd.as_slice().unwrap());
            lo = lo.min((T::one() - r_xy).max(d_y));
        }
        lo
    };
    Ok(alpha * lower(i, j) + (T::one() - alpha) * lower(j, i))
}

/// All pairwise scores of one timestep, `N x N`.
pub fn score_matrix_at_t<T: Scalar>(
    features_t: ArrayView2<T>,
    alpha: T,
    kernel: &Kernel<T>,
) -> Result<Array2<T>> {
    check_alpha(alpha.to_f64_lossy())?;
    let features_t = features_t.as_standard_layout();
    let incl = inclusion_matrix(features_t.view(), kernel);
    let n = incl.nrows();
    let one_minus = T::one() - alpha;
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        alpha * incl[(i, j)] + one_minus * incl[(j, i)]
    }))
}

/// Scores for every timestep of `features` (`T x N x d`).
pub fn window_scores<T: Scalar>(
    features: &Array3<T>,
    alpha: T,
    kernel: &Kernel<T>,
) -> Result<ScoreTensor<T>> {
    let (steps, n, _) = features.dim();
    let mut scores = Array3::<T>::zeros((steps, n, n));
    for (t, slice) in features.outer_iter().enumerate() {
        let m = score_matrix_at_t(slice, alpha, kernel)?;
        scores.index_axis_mut(Axis(0), t).assign(&m);
    }
    Ok(ScoreTensor { scores })
}

pub fn pool_scores<T: Scalar>(scores: &ScoreTensor<T>, method: Pooling) -> Result<Array2<T>> {
    if scores.steps() == 0 {
        return input("cannot pool an empty time axis");
    }
    Ok(match method {
        Pooling::Mean => scores
            .scores
            .mean_axis(Axis(0))
            .expect("non-empty time axis"),
        Pooling::Max => scores
            .scores
            .fold_axis(Axis(0), T::neg_infinity(), |&acc, &s| acc.max(s)),
    })
}

fn descending<T: Scalar>(a: (usize, T), b: (usize, T)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// Per-node top-`k`: node `i` gets edges to its `k` highest-scoring `j != i`,
/// ties going to the lower index.
pub fn build_graph<T: Scalar>(pooled: &Array2<T>, k: usize) -> Result<DynamicGraph<T>> {
    build_graph_with(pooled, k, EdgeSelection::PerNode, 0)
}

pub fn build_graph_with<T: Scalar>(
    pooled: &Array2<T>,
    k: usize,
    selection: EdgeSelection,
    built_from: u64,
) -> Result<DynamicGraph<T>> {
    let (n, m) = pooled.dim();
    if n != m {
        return input(format!("pooled scores must be square, got {n}x{m}"));
    }
    if n < 2 {
        return input(format!("a graph needs at least 2 nodes, got {n}"));
    }
    if k == 0 {
        return config("k must be at least 1");
    }
    let mut edges = Vec::new();
    match selection {
        EdgeSelection::PerNode => {
            for i in 0..n {
                let mut row: Vec<(usize, T)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (j, pooled[(i, j)]))
                    .collect();
                row.sort_by(|&a, &b| descending(a, b));
                edges.extend(row.into_iter().take(k).map(|(j, w)| Edge {
                    source: i,
                    target: j,
                    weight: w,
                }));
            }
        }
        EdgeSelection::Global => {
            let mut all: Vec<(usize, T)> = (0..n * n)
                .filter(|&f| f / n != f % n)
                .map(|f| (f, pooled[(f / n, f % n)]))
                .collect();
            all.sort_by(|&a, &b| descending(a, b));
            let mut kept: Vec<(usize, T)> = all.into_iter().take(k).collect();
            kept.sort_by_key(|&(f, _)| f);
            edges.extend(kept.into_iter().map(|(f, w)| Edge {
                source: f / n,
                target: f % n,
                weight: w,
            }));
        }
    }
    DynamicGraph::new(n, edges, built_from)
}

/// Window features for graph construction: the zero-filled normalized
/// values, one scalar feature per node and timestep (`T x N x 1`).
pub fn window_features<T: Scalar>(window: &MaskedWindow<T>) -> Array3<T> {
    let (t, n) = window.values.dim();
    window
        .values
        .clone()
        .into_shape_with_order((t, n, 1))
        .expect("contiguous window values")
}

/// Scores every timestep, pools over the window, then sparsifies.
pub fn construct_window_graph<T: Scalar>(
    window: &MaskedWindow<T>,
    cfg: &GraphConfig,
) -> Result<DynamicGraph<T>> {
    cfg.validate()?;
    let kernel = Kernel::gaussian(T::of(cfg.sigma))?;
    let scores = window_scores(&window_features(window), T::of(cfg.alpha), &kernel)?;
    let pooled = pool_scores(&scores, cfg.pooling)?;
    build_graph_with(&pooled, cfg.k, cfg.selection, window.window_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn symmetric_when_balanced() {
        let k = Kernel::gaussian(1.0).unwrap();
        let f = array![[0.1f64], [0.7], [0.3], [0.95]];
        for i in 0..4 {
            for j in 0..4 {
                let a = score_at_t(f.view(), i, j, 0.5, &k).unwrap();
                let b = score_at_t(f.view(), j, i, 0.5, &k).unwrap();
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identical_nodes_score_one() {
        let k = Kernel::gaussian(1.0).unwrap();
        let f = array![[0.4, 0.2], [0.4, 0.2], [0.4, 0.2]];
        let m = score_matrix_at_t(f.view(), 0.3, &k).unwrap();
        assert!(m.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn alpha_out_of_range() {
        let k = Kernel::gaussian(1.0).unwrap();
        let f = array![[0.0], [1.0]];
        assert!(matches!(
            score_at_t(f.view(), 0, 1, 1.5, &k),
            Err(crate::Error::Config(_))
        ));
        assert!(score_matrix_at_t(f.view(), -0.1, &k).is_err());
    }

    #[test]
    fn matrix_matches_pairwise() {
        let k = Kernel::gaussian(0.7).unwrap();
        let f = array![[0.1f64, 0.0], [0.7, 0.5], [0.3, 0.9], [0.95, 0.2]];
        let m = score_matrix_at_t(f.view(), 0.3, &k).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let s = score_at_t(f.view(), i, j, 0.3, &k).unwrap();
                assert!((m[(i, j)] - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pooling_examples() {
        let mut s = Array3::<f64>::from_elem((3, 2, 2), 0.4);
        let st = ScoreTensor::new(s.clone()).unwrap();
        assert!(pool_scores(&st, Pooling::Mean).unwrap().iter().all(|&v| (v - 0.4).abs() < 1e-15));
        assert!(pool_scores(&st, Pooling::Max).unwrap().iter().all(|&v| v == 0.4));

        s = Array3::zeros((2, 2, 2));
        s[(0, 0, 1)] = 0.2;
        s[(1, 0, 1)] = 0.8;
        let st = ScoreTensor::new(s).unwrap();
        assert!((pool_scores(&st, Pooling::Mean).unwrap()[(0, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(pool_scores(&st, Pooling::Max).unwrap()[(0, 1)], 0.8);

        let empty = ScoreTensor::new(Array3::<f64>::zeros((0, 2, 2))).unwrap();
        assert!(pool_scores(&empty, Pooling::Mean).is_err());
    }

    #[test]
    fn top_k_examples() {
        let p = array![[0.0, 0.9, 0.4], [0.2, 0.0, 0.3], [0.5, 0.5, 0.0]];
        let g = build_graph(&p, 2).unwrap();
        assert_eq!(g.edges().len(), 6);
        assert!(g.edges().iter().all(|e| e.source != e.target));

        let g1 = build_graph(&p, 1).unwrap();
        let from0: Vec<_> = g1.neighbors(0).collect();
        assert_eq!(from0, vec![1]);
        // tie between 0 and 1 goes to the lower index
        assert_eq!(g1.neighbors(2).collect::<Vec<_>>(), vec![0]);
        assert_eq!(g1.edges()[0].weight, 0.9);

        assert!(build_graph(&array![[1.0]], 1).is_err());
        assert!(build_graph(&p, 0).is_err());
    }

    #[test]
    fn global_selection_takes_strongest_pairs() {
        let p = array![[0.0, 0.9, 0.4], [0.2, 0.0, 0.3], [0.5, 0.6, 0.0]];
        let g = build_graph_with(&p, 2, EdgeSelection::Global, 7).unwrap();
        let pairs: Vec<_> = g.edges().iter().map(|e| (e.source, e.target)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 1)]);
        assert_eq!(g.built_from(), 7);
        assert_eq!(g.out_degree(1), 0);
    }

    #[test]
    fn csv_export() {
        let p = array![[0.0, 0.5], [0.25, 0.0]];
        let g = build_graph(&p, 1).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "source,target,weight\n0,1,0.5\n1,0,0.25\n"
        );
    }
}
