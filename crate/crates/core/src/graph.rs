//! Weighted undirected communication graphs and their Laplacian spectra.
//!
//! Node indices are zero-based throughout the library. The JSON layer in
//! [`crate::io`] converts to and from the one-based labels used in files.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};

/// Relative gap under which lambda2 and lambda3 are treated as one eigenvalue.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Unordered node pair, stored with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    lo: usize,
    hi: usize,
}

impl Edge {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
        }
        Ok(Self {
            lo: i.min(j),
            hi: i.max(j),
        })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn contains(&self, node: usize) -> bool {
        self.lo == node || self.hi == node
    }
}

/// The set of edges a design is allowed to use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyMask {
    n_agents: usize,
    edges: BTreeSet<Edge>,
}

impl TopologyMask {
    /// Build a mask over `n_agents` nodes. Duplicate pairs (in either order)
    /// collapse to one edge.
    pub fn new(n_agents: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n_agents < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least two agents, got {n_agents}"
            )));
        }
        let mut edges = BTreeSet::new();
        for (i, j) in pairs {
            if i >= n_agents || j >= n_agents {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {n_agents} nodes"
                )));
            }
            edges.insert(Edge::new(i, j)?);
        }
        Ok(Self { n_agents, edges })
    }

    pub fn complete(n_agents: usize) -> Result<Self> {
        Self::new(
            n_agents,
            (0..n_agents).flat_map(|i| ((i + 1)..n_agents).map(move |j| (i, j))),
        )
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Edges in ascending `(lo, hi)` order. This order defines the layout of
    /// edge-weight vectors used by the co-design solver.
    pub fn edges(&self) -> impl ExactSizeIterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, edge: &Edge) -> bool {
        self.edges.contains(edge)
    }
}

/// Undirected, simple graph with strictly positive symmetric weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    mask: TopologyMask,
    weights: BTreeMap<Edge, f64>,
}

impl WeightedGraph {
    /// Zero weights are dropped (the edge stays in the mask); negative or
    /// non-finite weights and edges outside the mask are rejected.
    pub fn new(mask: TopologyMask, weights: impl IntoIterator<Item = (Edge, f64)>) -> Result<Self> {
        let mut stored = BTreeMap::new();
        for (edge, w) in weights {
            if !mask.contains(&edge) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) is not in the topology mask",
                    edge.lo, edge.hi
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has invalid weight {w}",
                    edge.lo, edge.hi
                )));
            }
            if w > 0.0 {
                stored.insert(edge, w);
            } else {
                stored.remove(&edge);
            }
        }
        Ok(Self {
            mask,
            weights: stored,
        })
    }

    /// Every mask edge gets weight `w`.
    pub fn uniform(mask: TopologyMask, w: f64) -> Result<Self> {
        let weights: Vec<_> = mask.edges().map(|e| (e, w)).collect();
        Self::new(mask, weights)
    }

    /// Weights listed in mask edge order.
    pub fn from_mask_weights(mask: TopologyMask, weights: &[f64]) -> Result<Self> {
        if weights.len() != mask.n_edges() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} mask edges",
                weights.len(),
                mask.n_edges()
            )));
        }
        let pairs: Vec<_> = mask.edges().zip(weights.iter().copied()).collect();
        Self::new(mask, pairs)
    }

    /// Convenience constructor: the mask is exactly the weighted edge set.
    pub fn from_weighted_edges(n_agents: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mask = TopologyMask::new(n_agents, edges.iter().map(|&(i, j, _)| (i, j)))?;
        let mut weights = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            weights.push((Edge::new(i, j)?, w));
        }
        Self::new(mask, weights)
    }

    pub fn n_agents(&self) -> usize {
        self.mask.n_agents
    }

    pub fn mask(&self) -> &TopologyMask {
        &self.mask
    }

    /// Weighted edges in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (Edge, f64)> + '_ {
        self.weights.iter().map(|(e, w)| (*e, *w))
    }

    pub fn n_weighted_edges(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        Edge::new(i, j)
            .ok()
            .and_then(|e| self.weights.get(&e).copied())
            .unwrap_or(0.0)
    }

    /// Weights in mask edge order, zero for unweighted mask edges.
    pub fn mask_weights(&self) -> Vec<f64> {
        self.mask
            .edges()
            .map(|e| self.weights.get(&e).copied().unwrap_or(0.0))
            .collect()
    }

    /// Neighbor lists `(j, w_ij)` per node, ascending in `j`.
    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.n_agents()];
        for (e, w) in self.edges() {
            out[e.lo].push((e.hi, w));
            out[e.hi].push((e.lo, w));
        }
        for list in &mut out {
            list.sort_by_key(|&(j, _)| j);
        }
        out
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_agents()];
        for (e, w) in self.edges() {
            d[e.lo] += w;
            d[e.hi] += w;
        }
        d
    }

    pub fn max_degree(&self) -> f64 {
        self.degrees().into_iter().fold(0.0, f64::max)
    }

    /// Sum of all edge weights; the Laplacian trace is twice this.
    pub fn total_weight(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Drop every weighted edge lighter than `threshold`. The mask is kept.
    pub fn pruned(&self, threshold: f64) -> Self {
        Self {
            mask: self.mask.clone(),
            weights: self
                .weights
                .iter()
                .filter(|(_, &w)| w >= threshold)
                .map(|(e, w)| (*e, *w))
                .collect(),
        }
    }

    /// Relabel nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_agents();
        if perm.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {n} nodes",
                perm.len()
            )));
        }
        let mask = TopologyMask::new(n, self.mask.edges().map(|e| (perm[e.lo], perm[e.hi])))?;
        let mut weights = Vec::new();
        for (e, w) in self.edges() {
            weights.push((Edge::new(perm[e.lo], perm[e.hi])?, w));
        }
        Self::new(mask, weights)
    }
}

/// Weighted Laplacian `D - A`.
pub fn laplacian(g: &WeightedGraph) -> DMatrix<f64> {
    let n = g.n_agents();
    let mut l = DMatrix::zeros(n, n);
    for (e, w) in g.edges() {
        let (i, j) = (e.lo, e.hi);
        l[(i, i)] += w;
        l[(j, j)] += w;
        l[(i, j)] -= w;
        l[(j, i)] -= w;
    }
    l
}

/// Weighted adjacency matrix and degree vector.
pub fn adjacency_and_degrees(g: &WeightedGraph) -> (DMatrix<f64>, DVector<f64>) {
    let n = g.n_agents();
    let mut a = DMatrix::zeros(n, n);
    for (e, w) in g.edges() {
        a[(e.lo, e.hi)] = w;
        a[(e.hi, e.lo)] = w;
    }
    let d = DVector::from_vec(g.degrees());
    (a, d)
}

/// Sorted Laplacian spectrum with the Fiedler pair singled out.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Unit eigenvector for lambda2, orthogonal to the all-ones vector.
    pub fiedler_vector: DVector<f64>,
    pub lambda2: f64,
    pub lambda_max: f64,
    /// lambda3 - lambda2 < [`DEGENERACY_TOL`]: the Fiedler vector is not
    /// unique and lambda2 is not differentiable in the weights.
    pub degenerate_fiedler: bool,
}

impl SpectralSummary {
    /// Orthonormal basis of the lambda2 eigenspace (consensus direction
    /// excluded).
    pub fn fiedler_eigenspace(&self) -> Vec<DVector<f64>> {
        let n = self.eigenvalues.len();
        let scale = self.lambda_max.abs().max(1.0);
        let mut basis = vec![self.fiedler_vector.clone()];
        for k in 2..n {
            if (self.eigenvalues[k] - self.lambda2).abs() >= DEGENERACY_TOL * scale {
                break;
            }
            basis.push(self.eigenvectors.column(k).into_owned());
        }
        basis
    }

    /// Eigenvector belonging to the largest eigenvalue.
    pub fn max_vector(&self) -> DVector<f64> {
        let n = self.eigenvalues.len();
        self.eigenvectors.column(n - 1).into_owned()
    }
}

fn normalize_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for k in 0..v.len() {
        if v[k].abs() > v[best].abs() + 1e-12 {
            best = k;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Full eigen-decomposition of the Laplacian.
pub fn spectral_summary(g: &WeightedGraph) -> Result<SpectralSummary> {
    let l = laplacian(g);
    let n = g.n_agents();
    let eig = symmetric_eigen(&l)?;
    let eigenvalues: Vec<f64> = eig.values.iter().copied().collect();
    let scale = eigenvalues[n - 1].abs().max(1.0);

    // When lambda2 is (numerically) zero the null space is at least
    // two-dimensional and the solver may return any basis of it. Pick the
    // member orthogonal to the all-ones vector.
    let mut fiedler = eig.vectors.column(1).into_owned();
    if eigenvalues[1].abs() <= DEGENERACY_TOL * scale {
        let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let null_dim = eigenvalues
            .iter()
            .take_while(|&&x| x.abs() <= DEGENERACY_TOL * scale)
            .count();
        let mut best: Option<DVector<f64>> = None;
        for k in 0..null_dim {
            let col = eig.vectors.column(k);
            let mut cand = col - &ones * ones.dot(&col);
            let norm = cand.norm();
            if norm > 1e-6 && best.as_ref().is_none_or(|b| b.norm() < norm) {
                cand /= norm;
                best = Some(cand);
            }
        }
        if let Some(b) = best {
            fiedler = b;
        }
    }
    normalize_sign(&mut fiedler);

    let degenerate_fiedler =
        n >= 3 && (eigenvalues[2] - eigenvalues[1]).abs() < DEGENERACY_TOL * scale;
    Ok(SpectralSummary {
        lambda2: eigenvalues[1],
        lambda_max: eigenvalues[n - 1],
        eigenvalues,
        eigenvectors: eig.vectors,
        fiedler_vector: fiedler,
        degenerate_fiedler,
    })
}

/// Algebraic connectivity test: `lambda2 > tol`.
pub fn is_connected(g: &WeightedGraph, tol: f64) -> Result<bool> {
    Ok(spectral_summary(g)?.lambda2 > tol)
}

/// Number of connected components found by breadth-first search over the
/// weighted (positive) edges.
pub fn component_count(g: &WeightedGraph) -> usize {
    let n = g.n_agents();
    let adj = g.neighbors();
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    count
}

/// Combinatorial connectivity check.
pub fn is_connected_bfs(g: &WeightedGraph) -> bool {
    component_count(g) == 1
}
