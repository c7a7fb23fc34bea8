//! Graph-theoretic summaries of an estimated conditional-dependence graph.
//!
//! Everything here works on the unweighted support graph: geodesic
//! (shortest-path) distances, the shared-neighbour dissimilarity matrix and
//! the global statistics built on top of them (geodesic distance mean,
//! harmonic mean, Estrada index, average dissimilarity, degree histogram).

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetstatsError {
    #[error("graph has {0} nodes, need at least 1")]
    Empty(usize),
    #[error("edge ({0}, {1}) is out of range for {2} nodes")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("adjacency matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("every pair of nodes is disconnected")]
    AllDisconnected,
}

/// Undirected simple graph on `p` nodes.
///
/// Adjacency is kept as a packed bit matrix for O(1) lookups plus sorted
/// neighbour lists for traversal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    p: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    pub fn empty(p: usize) -> Self {
        let words_per_row = p.div_ceil(64).max(1);
        Self {
            p,
            words_per_row,
            bits: vec![0; words_per_row * p],
            neighbors: vec![Vec::new(); p],
        }
    }

    /// Builds a graph from an undirected edge list. Duplicate edges are
    /// collapsed; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges<I>(p: usize, edges: I) -> Result<Self, NetstatsError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(p);
        for (i, j) in edges {
            if i >= p || j >= p {
                return Err(NetstatsError::EdgeOutOfRange(i, j, p));
            }
            if i == j {
                return Err(NetstatsError::SelfLoop(i));
            }
            g.set_bit(i, j);
            g.set_bit(j, i);
        }
        g.rebuild_neighbors();
        Ok(g)
    }

    /// Builds a graph from a dense boolean adjacency matrix (row-major).
    pub fn from_adjacency(p: usize, adjacency: &[bool]) -> Result<Self, NetstatsError> {
        assert_eq!(adjacency.len(), p * p, "adjacency must be p*p");
        let mut g = Self::empty(p);
        for i in 0..p {
            if adjacency[i * p + i] {
                return Err(NetstatsError::SelfLoop(i));
            }
            for j in 0..p {
                if adjacency[i * p + j] != adjacency[j * p + i] {
                    return Err(NetstatsError::Asymmetric(i, j));
                }
                if adjacency[i * p + j] {
                    g.set_bit(i, j);
                }
            }
        }
        g.rebuild_neighbors();
        Ok(g)
    }

    /// Support graph of a symmetric matrix: edge wherever `|m_ij| > threshold`
    /// off the diagonal. Only the upper triangle is inspected.
    pub fn from_support(m: &DMatrix<f64>, threshold: f64) -> Self {
        let p = m.nrows();
        let mut g = Self::empty(p);
        for j in 0..p {
            for i in 0..j {
                if m[(i, j)].abs() > threshold {
                    g.set_bit(i, j);
                    g.set_bit(j, i);
                }
            }
        }
        g.rebuild_neighbors();
        g
    }

    fn set_bit(&mut self, i: usize, j: usize) {
        self.bits[i * self.words_per_row + j / 64] |= 1u64 << (j % 64);
    }

    fn rebuild_neighbors(&mut self) {
        for i in 0..self.p {
            let row = &self.bits[i * self.words_per_row..(i + 1) * self.words_per_row];
            let mut nb = Vec::new();
            for (w, &word) in row.iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    let b = word.trailing_zeros() as usize;
                    nb.push(w * 64 + b);
                    word &= word - 1;
                }
            }
            self.neighbors[i] = nb;
        }
    }

    pub fn node_count(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words_per_row + j / 64] & (1u64 << (j % 64)) != 0
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Upper-triangle edge list, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.p {
            for &j in &self.neighbors[i] {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.p, self.p);
        for i in 0..self.p {
            for &j in &self.neighbors[i] {
                a[(i, j)] = 1.0;
            }
        }
        a
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.p);
        Self::from_edges(self.p, self.edges().into_iter().map(|(i, j)| (perm[i], perm[j])))
            .expect("permutation of a valid graph is valid")
    }

    /// Subgraph induced by `nodes`, relabelled `0..nodes.len()` in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Self {
        let mut index = vec![usize::MAX; self.p];
        for (new, &old) in nodes.iter().enumerate() {
            index[old] = new;
        }
        let edges = nodes.iter().flat_map(|&u| {
            let index = &index;
            self.neighbors[u]
                .iter()
                .filter(move |&&v| index[v] != usize::MAX && u < v)
                .map(move |&v| (index[u], index[v]))
        });
        Self::from_edges(nodes.len(), edges.collect::<Vec<_>>()).expect("induced subgraph is valid")
    }

    /// Connected-component label per node (labels in order of first appearance).
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.p];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..self.p {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// Shortest-path lengths between every pair of nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeodesicMatrix {
    p: usize,
    g: Vec<u32>,
}

impl GeodesicMatrix {
    /// Marker for unreachable pairs.
    pub const INFINITE: u32 = u32::MAX;

    pub fn node_count(&self) -> usize {
        self.p
    }

    /// `None` when `i` and `j` are disconnected.
    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        let v = self.g[i * self.p + j];
        (v != Self::INFINITE).then_some(v)
    }

    pub fn raw(&self, i: usize, j: usize) -> u32 {
        self.g[i * self.p + j]
    }
}

/// Breadth-first search from every node.
pub fn geodesics(graph: &Graph) -> GeodesicMatrix {
    let p = graph.node_count();
    let mut g = vec![GeodesicMatrix::INFINITE; p * p];
    let mut queue = VecDeque::with_capacity(p);
    for s in 0..p {
        let row = &mut g[s * p..(s + 1) * p];
        row[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = row[u];
            for &v in graph.neighbors(u) {
                if row[v] == GeodesicMatrix::INFINITE {
                    row[v] = du + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    GeodesicMatrix { p, g }
}

/// How the shared-neighbour count `eta_ij` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaRule {
    /// `|N(i) ∩ N(j)| + A_ij`; keeps `sigma <= 1` and makes `d_ij = 1`
    /// exactly when `i`, `j` are neither adjacent nor share a neighbour.
    #[default]
    WithAdjacency,
    /// Bare shared-neighbour count `|N(i) ∩ N(j)|`.
    Literal,
}

/// Node dissimilarities `d_ij = 1 - eta_ij / sqrt(kappa_i kappa_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimMatrix {
    p: usize,
    d: Vec<f64>,
    eta: Vec<u32>,
}

impl DissimMatrix {
    /// Wraps an arbitrary symmetric dissimilarity matrix (no `eta`
    /// information). Used for clustering inputs that do not come from a graph.
    pub fn from_matrix(d: &DMatrix<f64>) -> Self {
        let p = d.nrows();
        assert_eq!(p, d.ncols());
        let mut flat = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                flat[i * p + j] = if i == j { 0.0 } else { d[(i, j)] };
            }
        }
        Self { p, d: flat, eta: vec![0; p * p] }
    }

    pub fn node_count(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.p + j]
    }

    #[inline]
    pub fn sigma(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        1.0 - self.d(i, j)
    }

    pub fn eta(&self, i: usize, j: usize) -> u32 {
        self.eta[i * self.p + j]
    }

    /// Upper-triangle values `d_ij`, `i < j`, in row-major order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let p = self.p;
        let mut out = Vec::with_capacity(p * p.saturating_sub(1) / 2);
        for i in 0..p {
            for j in i + 1..p {
                out.push(self.d[i * p + j]);
            }
        }
        out
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.p, self.p, &self.d)
    }
}

pub fn dissimilarities(graph: &Graph) -> DissimMatrix {
    dissimilarities_with(graph, EtaRule::WithAdjacency)
}

pub fn dissimilarities_with(graph: &Graph, rule: EtaRule) -> DissimMatrix {
    let p = graph.node_count();
    let mut eta = vec![0u32; p * p];
    // Each node contributes one shared neighbour to every pair of its neighbours.
    for u in 0..p {
        let nb = graph.neighbors(u);
        for (a, &i) in nb.iter().enumerate() {
            for &j in &nb[a + 1..] {
                eta[i * p + j] += 1;
                eta[j * p + i] += 1;
            }
        }
    }
    if rule == EtaRule::WithAdjacency {
        for i in 0..p {
            for &j in graph.neighbors(i) {
                eta[i * p + j] += 1;
            }
        }
    }
    let deg: Vec<f64> = graph.degrees().into_iter().map(|k| k as f64).collect();
    let mut d = vec![1.0; p * p];
    for i in 0..p {
        d[i * p + i] = 0.0;
        for j in 0..p {
            if i == j || deg[i] == 0.0 || deg[j] == 0.0 {
                continue;
            }
            let e = eta[i * p + j];
            if e > 0 {
                d[i * p + j] = 1.0 - f64::from(e) / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    DissimMatrix { p, d, eta }
}

/// Average finite geodesic distance over all unordered pairs; disconnected
/// pairs contribute zero.
pub fn geodesic_mean(gm: &GeodesicMatrix) -> f64 {
    let p = gm.node_count();
    if p < 2 {
        return 0.0;
    }
    let mut sum = 0u64;
    for i in 0..p {
        for j in i + 1..p {
            if let Some(v) = gm.get(i, j) {
                sum += u64::from(v);
            }
        }
    }
    2.0 * sum as f64 / (p * (p - 1)) as f64
}

/// Reciprocal of the mean reciprocal geodesic distance (`1/inf = 0`).
pub fn harmonic_mean(gm: &GeodesicMatrix) -> Result<f64, NetstatsError> {
    let p = gm.node_count();
    let mut sum = 0.0;
    for i in 0..p {
        for j in i + 1..p {
            if let Some(v) = gm.get(i, j) {
                sum += 1.0 / f64::from(v);
            }
        }
    }
    if sum == 0.0 {
        return Err(NetstatsError::AllDisconnected);
    }
    let m = (p * (p - 1)) as f64 / 2.0;
    Ok(m / sum)
}

/// `sum_j exp(gamma_j)` over the adjacency eigenvalues.
pub fn estrada_index(graph: &Graph) -> f64 {
    let p = graph.node_count();
    if graph.edge_count() == 0 {
        return p as f64;
    }
    let eig = graph.adjacency_matrix().symmetric_eigen();
    eig.eigenvalues.iter().map(|g| g.exp()).sum()
}

pub fn avg_dissimilarity(dm: &DissimMatrix) -> f64 {
    let p = dm.node_count();
    if p < 2 {
        return 0.0;
    }
    let sum: f64 = dm.upper_triangle().iter().sum();
    2.0 * sum / (p * (p - 1)) as f64
}

/// Fraction of nodes with degree `k`, for `k = 0..=max_degree`.
pub fn degree_histogram(graph: &Graph) -> Vec<f64> {
    let degrees = graph.degrees();
    let max = degrees.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for k in degrees {
        counts[k] += 1;
    }
    let p = graph.node_count().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / p).collect()
}

/// L1 distance between two degree histograms of possibly different length.
pub fn histogram_l1(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum()
}

/// One per-lambda statistics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub lambda: f64,
    pub edges: usize,
    #[serde(rename = "H")]
    pub geodesic_mean: f64,
    /// `None` when all pairs are disconnected.
    pub harmonic: Option<f64>,
    pub estrada: f64,
    #[serde(rename = "AD")]
    pub avg_dissimilarity: f64,
    pub degree_hist: Vec<f64>,
}

impl NetworkStats {
    pub fn compute(lambda: f64, graph: &Graph) -> Self {
        let gm = geodesics(graph);
        Self {
            lambda,
            edges: graph.edge_count(),
            geodesic_mean: geodesic_mean(&gm),
            harmonic: harmonic_mean(&gm).ok(),
            estrada: estrada_index(graph),
            avg_dissimilarity: avg_dissimilarity(&dissimilarities(graph)),
            degree_hist: degree_histogram(graph),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path3() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap()
    }

    fn k3() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn star3() -> Graph {
        Graph::from_edges(4, [(0, 1), (0, 2), (0, 3)]).unwrap()
    }

    #[test]
    fn rejects_bad_edges() {
        assert_eq!(Graph::from_edges(3, [(0, 0)]), Err(NetstatsError::SelfLoop(0)));
        assert!(matches!(
            Graph::from_edges(3, [(0, 3)]),
            Err(NetstatsError::EdgeOutOfRange(..))
        ));
        let asym = [false, true, false, false];
        assert_eq!(Graph::from_adjacency(2, &asym), Err(NetstatsError::Asymmetric(0, 1)));
    }

    #[test]
    fn degrees_match_rows() {
        let g = star3();
        assert_eq!(g.degrees(), vec![3, 1, 1, 1]);
        assert_eq!(g.edge_count(), 3);
        assert!(g.has_edge(2, 0) && !g.has_edge(1, 2));
    }

    #[test]
    fn geodesic_examples() {
        let gm = geodesics(&path3());
        assert_eq!(gm.get(0, 2), Some(2));
        assert_eq!(gm.get(1, 1), Some(0));
        let two = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(geodesics(&two).get(0, 2), None);
    }

    #[test]
    fn dissimilarity_examples() {
        let isolated = Graph::empty(2);
        let d = dissimilarities(&isolated);
        assert_eq!(d.sigma(0, 1), 0.0);
        assert_eq!(d.d(0, 1), 1.0);

        let d = dissimilarities(&k3());
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_eq!(d.eta(i, j), 2);
            assert_abs_diff_eq!(d.d(i, j), 0.0, epsilon = 1e-15);
        }

        let d = dissimilarities(&star3());
        assert_eq!(d.eta(0, 1), 1);
        assert_abs_diff_eq!(d.d(0, 1), 1.0 - 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.d(0, 1), 0.4226, epsilon = 1e-4);
        // leaves share the centre
        assert_abs_diff_eq!(d.d(1, 2), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn literal_eta_drops_adjacency_term() {
        let single = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(dissimilarities_with(&single, EtaRule::Literal).d(0, 1), 1.0);
        assert_eq!(dissimilarities(&single).d(0, 1), 0.0);
    }

    #[test]
    fn geodesic_mean_examples() {
        assert_eq!(geodesic_mean(&geodesics(&Graph::empty(5))), 0.0);
        assert_eq!(geodesic_mean(&geodesics(&k3())), 1.0);
        assert_abs_diff_eq!(geodesic_mean(&geodesics(&path3())), 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn harmonic_mean_examples() {
        assert_abs_diff_eq!(harmonic_mean(&geodesics(&k3())).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(harmonic_mean(&geodesics(&path3())).unwrap(), 1.2, epsilon = 1e-12);
        assert_eq!(
            harmonic_mean(&geodesics(&Graph::empty(4))),
            Err(NetstatsError::AllDisconnected)
        );
    }

    #[test]
    fn estrada_examples() {
        assert_eq!(estrada_index(&Graph::empty(6)), 6.0);
        let single = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert_abs_diff_eq!(estrada_index(&single), 3.08616, epsilon = 1e-5);
        // K3 spectrum is (2, -1, -1)
        assert_abs_diff_eq!(estrada_index(&k3()), 2f64.exp() + 2.0 * (-1f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn avg_dissimilarity_examples() {
        assert_eq!(avg_dissimilarity(&dissimilarities(&Graph::empty(4))), 1.0);
        assert_abs_diff_eq!(avg_dissimilarity(&dissimilarities(&k3())), 0.0, epsilon = 1e-15);
        let single = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(avg_dissimilarity(&dissimilarities(&single)), 0.0);
    }

    #[test]
    fn degree_histogram_examples() {
        assert_eq!(degree_histogram(&Graph::empty(3)), vec![1.0]);
        assert_eq!(degree_histogram(&k3()), vec![0.0, 0.0, 1.0]);
        assert_eq!(degree_histogram(&star3()), vec![0.0, 0.75, 0.0, 0.25]);
        assert_eq!(histogram_l1(&[1.0], &[0.0, 0.0, 1.0]), 2.0);
    }

    #[test]
    fn induced_and_components() {
        let g = Graph::from_edges(5, [(0, 1), (3, 4)]).unwrap();
        assert_eq!(g.components(), vec![0, 0, 1, 2, 2]);
        let sub = g.induced(&[4, 3, 0]);
        assert_eq!(sub.edges(), vec![(0, 1)]);
    }

    #[test]
    fn wide_graph_bitset_rows() {
        // crosses a 64-bit word boundary
        let g = Graph::from_edges(130, [(0, 129), (63, 64), (64, 128)]).unwrap();
        assert!(g.has_edge(129, 0) && g.has_edge(64, 63) && g.has_edge(128, 64));
        assert_eq!(g.edges(), vec![(0, 129), (63, 64), (64, 128)]);
    }
}
