//! Agglomerative nesting (AGNES) over a dissimilarity matrix, the
//! agglomerative coefficient, and random variable subsets that approximate
//! the coefficient on large graphs.

use std::collections::VecDeque;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netstats::{dissimilarities_with, DissimMatrix, EtaRule, Graph};
use crate::rng;

/// Merge candidates this close to the minimum are treated as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgnesError {
    #[error("every merge happened at height 0; the coefficient is undefined")]
    DegenerateDendrogram,
    #[error("no subset passed the degree-CV check after {0} tries")]
    NoSubsetFound(usize),
    #[error("invalid subset spec: {0}")]
    InvalidSubsetSpec(String),
    #[error("graph has no edges")]
    EdgelessGraph,
}

/// Inter-cluster dissimilarity update applied after a merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    /// Unweighted mean of the two old dissimilarities.
    #[default]
    Wpgma,
    /// Cluster-size weighted mean (average linkage over all point pairs).
    Upgma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Cluster ids: leaves are `0..p`, the cluster formed at step `t` is `p + t`.
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    merges: Vec<Merge>,
    first_merge_height: Vec<f64>,
    max_height: f64,
}

impl Dendrogram {
    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Height at which each node first joined another cluster.
    pub fn first_merge_heights(&self) -> &[f64] {
        &self.first_merge_height
    }

    pub fn max_height(&self) -> f64 {
        self.max_height
    }

    pub fn node_count(&self) -> usize {
        self.first_merge_height.len()
    }

    /// Merge list as TSV with a `step a b height` header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("step\ta\tb\theight\n");
        for (t, m) in self.merges.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", t + 1, m.a, m.b, m.height));
        }
        out
    }
}

/// Cached minimum of each row's upper part, `min_{j > i, active} delta_ij`.
#[derive(Clone, Copy)]
struct RowMin {
    value: f64,
    col: usize,
}

struct State {
    p: usize,
    delta: Vec<f64>,
    active: Vec<bool>,
    rowmin: Vec<RowMin>,
}

impl State {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.delta[i * self.p + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.delta[i * self.p + j] = v;
        self.delta[j * self.p + i] = v;
    }

    fn recompute_row(&mut self, i: usize) {
        let mut best = RowMin { value: f64::INFINITY, col: usize::MAX };
        for j in i + 1..self.p {
            if self.active[j] {
                let v = self.at(i, j);
                if v < best.value || best.col == usize::MAX {
                    best = RowMin { value: v, col: j };
                }
            }
        }
        self.rowmin[i] = best;
    }

    /// Lowest `(h, k)` lexicographically among the pairs at the minimum.
    /// Values within `TIE_TOL` of the minimum count as tied, so that ties
    /// which are exact in real arithmetic survive rounding in the updates.
    fn argmin(&self) -> (usize, usize, f64) {
        let min = (0..self.p)
            .filter(|&i| self.active[i] && self.rowmin[i].col != usize::MAX)
            .map(|i| self.rowmin[i].value)
            .fold(f64::INFINITY, f64::min);
        let cut = min + TIE_TOL;
        let h = (0..self.p)
            .find(|&i| self.active[i] && self.rowmin[i].col != usize::MAX && self.rowmin[i].value <= cut)
            .expect("at least two active clusters");
        let k = (h + 1..self.p).find(|&j| self.active[j] && self.at(h, j) <= cut).expect("row minimum exists");
        (h, k, self.at(h, k))
    }
}

/// Runs AGNES with the unweighted (WPGMA) update.
pub fn agnes_cluster(dm: &DissimMatrix) -> Dendrogram {
    agnes_cluster_with(dm, Linkage::Wpgma)
}

pub fn agnes_cluster_with(dm: &DissimMatrix, linkage: Linkage) -> Dendrogram {
    let p = dm.node_count();
    let mut delta = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            delta[i * p + j] = if i == j { f64::INFINITY } else { dm.d(i, j) };
        }
    }
    let mut st = State {
        p,
        delta,
        active: vec![true; p],
        rowmin: vec![RowMin { value: f64::INFINITY, col: usize::MAX }; p],
    };
    for i in 0..p {
        st.recompute_row(i);
    }

    let mut ids: Vec<usize> = (0..p).collect();
    let mut sizes = vec![1usize; p];
    let mut first = vec![f64::NAN; p];
    let mut merges = Vec::with_capacity(p.saturating_sub(1));
    let mut max_height = 0.0;

    for t in 0..p.saturating_sub(1) {
        let (h, k, height) = st.argmin();
        if sizes[k] == 1 {
            first[k] = height;
        }
        if sizes[h] == 1 {
            first[h] = height;
        }
        let (nh, nk) = (sizes[h] as f64, sizes[k] as f64);
        for j in 0..p {
            if !st.active[j] || j == h || j == k {
                continue;
            }
            let v = match linkage {
                Linkage::Wpgma => 0.5 * (st.at(k, j) + st.at(h, j)),
                Linkage::Upgma => {
                    let (a, b) = (st.at(k, j), st.at(h, j));
                    // shifted form keeps equal inputs exact
                    a + nh * (b - a) / (nk + nh)
                }
            };
            st.set(k, j, v);
        }
        st.active[h] = false;
        merges.push(Merge { a: ids[h], b: ids[k], height, size: sizes[h] + sizes[k] });
        ids[k] = p + t;
        sizes[k] += sizes[h];
        max_height = f64::max(max_height, height);

        // refresh the cached row minima touched by this merge
        for i in 0..p {
            if !st.active[i] {
                continue;
            }
            if i == k {
                st.recompute_row(i);
            } else if i < k {
                let r = st.rowmin[i];
                if r.col == h || r.col == k {
                    st.recompute_row(i);
                } else {
                    let v = st.at(i, k);
                    if v < r.value || (v == r.value && k < r.col) {
                        st.rowmin[i] = RowMin { value: v, col: k };
                    }
                }
            }
        }
    }
    if p == 1 {
        first[0] = 0.0;
    }
    Dendrogram { merges, first_merge_height: first, max_height }
}

/// `AC = mean_j (1 - delta*_j / delta*_max)`.
pub fn ac_coefficient(dend: &Dendrogram) -> Result<f64, AgnesError> {
    let max = dend.max_height();
    if max <= 0.0 {
        return Err(AgnesError::DegenerateDendrogram);
    }
    let first = dend.first_merge_heights();
    let sum: f64 = first.iter().map(|&d| 1.0 - d / max).sum();
    Ok(sum / first.len() as f64)
}

/// AC of a graph, scoring a degenerate dendrogram as 0.
pub fn graph_ac(graph: &Graph, linkage: Linkage, eta: EtaRule) -> f64 {
    if graph.node_count() < 2 {
        return 0.0;
    }
    let dend = agnes_cluster_with(&dissimilarities_with(graph, eta), linkage);
    ac_coefficient(&dend).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub m: usize,
    pub tau: f64,
    pub max_tries: usize,
}

impl SubsetSpec {
    /// `m = max(ceil(0.1 p), 30)` clamped below `p`, `tau = 0.25`, 50 tries.
    pub fn default_for(p: usize) -> Self {
        let m = ((p as f64 * 0.1).ceil() as usize).max(30).min(p.saturating_sub(1));
        Self { m, tau: 0.25, max_tries: 50 }
    }

    pub fn validate(&self, p: usize) -> Result<(), AgnesError> {
        if self.m < 2 || self.m >= p {
            return Err(AgnesError::InvalidSubsetSpec(format!(
                "need 2 <= m < p, got m = {} with p = {p}",
                self.m
            )));
        }
        if !(self.tau > 0.0) {
            return Err(AgnesError::InvalidSubsetSpec(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Coefficient of variation of the degrees in `nodes` (sample standard
/// deviation over the mean; 0 when the mean degree is 0).
pub fn degree_cv(degrees: &[usize], nodes: &[usize]) -> f64 {
    let k = nodes.len();
    if k < 2 {
        return 0.0;
    }
    let mean = nodes.iter().map(|&i| degrees[i] as f64).sum::<f64>() / k as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let var = nodes.iter().map(|&i| (degrees[i] as f64 - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    var.sqrt() / mean
}

fn cv_ratio(sub: f64, full: f64) -> f64 {
    if full == 0.0 { 1.0 } else { sub / full }
}

/// Draws `m` random seed nodes, closes them under reachability, and accepts
/// the closure once its degree CV is within `tau` (relative) of the full
/// graph's. Returns the accepted node set, sorted.
pub fn select_subset(graph: &Graph, spec: &SubsetSpec, seed: u64) -> Result<Vec<usize>, AgnesError> {
    let p = graph.node_count();
    spec.validate(p)?;
    if graph.edge_count() == 0 {
        return Err(AgnesError::EdgelessGraph);
    }
    let degrees = graph.degrees();
    let all: Vec<usize> = (0..p).collect();
    let cv_full = degree_cv(&degrees, &all);
    let mut rng = rng::stream(seed, &[rng::tag::SUBSET]);
    let mut seen = vec![false; p];
    let mut queue = VecDeque::new();
    for _ in 0..spec.max_tries {
        seen.iter_mut().for_each(|s| *s = false);
        queue.clear();
        for i in index::sample(&mut rng, p, spec.m) {
            seen[i] = true;
            queue.push_back(i);
        }
        while let Some(u) = queue.pop_front() {
            for &v in graph.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        let nodes: Vec<usize> = (0..p).filter(|&i| seen[i]).collect();
        let ratio = cv_ratio(degree_cv(&degrees, &nodes), cv_full);
        if (ratio - 1.0).abs() <= spec.tau {
            return Ok(nodes);
        }
    }
    Err(AgnesError::NoSubsetFound(spec.max_tries))
}

/// Mean AC over `draws` accepted subsets; falls back to the full graph
/// when no subset can be found or the graph has no edges.
pub fn approximate_ac(
    graph: &Graph,
    spec: &SubsetSpec,
    draws: usize,
    seed: u64,
    linkage: Linkage,
    eta: EtaRule,
) -> f64 {
    let mut total = 0.0;
    let mut used = 0usize;
    for r in 0..draws.max(1) {
        match select_subset(graph, spec, rng::derive_seed(seed, &[r as u64])) {
            Ok(nodes) => {
                total += graph_ac(&graph.induced(&nodes), linkage, eta);
                used += 1;
            }
            Err(_) => return graph_ac(graph, linkage, eta),
        }
    }
    total / used as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dm(rows: &[&[f64]]) -> DissimMatrix {
        let p = rows.len();
        DissimMatrix::from_matrix(&DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    #[test]
    fn two_nodes_single_merge() {
        let d = agnes_cluster(&dm(&[&[0.0, 0.7], &[0.7, 0.0]]));
        assert_eq!(d.merges().len(), 1);
        assert_eq!(d.merges()[0].height, 0.7);
        assert_eq!(d.first_merge_heights(), &[0.7, 0.7]);
        assert_eq!(d.max_height(), 0.7);
        assert_eq!(ac_coefficient(&d), Ok(0.0));
    }

    #[test]
    fn two_perfect_clusters() {
        let d = agnes_cluster(&dm(&[
            &[0.0, 0.0, 1.0, 1.0],
            &[0.0, 0.0, 1.0, 1.0],
            &[1.0, 1.0, 0.0, 0.0],
            &[1.0, 1.0, 0.0, 0.0],
        ]));
        let heights: Vec<f64> = d.merges().iter().map(|m| m.height).collect();
        assert_eq!(heights, vec![0.0, 0.0, 1.0]);
        assert_eq!(d.first_merge_heights(), &[0.0; 4]);
        assert_eq!(d.max_height(), 1.0);
        assert_eq!(ac_coefficient(&d), Ok(1.0));
        // lexicographic tie-break: (0,1) before (2,3)
        assert_eq!((d.merges()[0].a, d.merges()[0].b), (0, 1));
        assert_eq!((d.merges()[1].a, d.merges()[1].b), (2, 3));
        assert_eq!((d.merges()[2].a, d.merges()[2].b), (4, 5));
    }

    #[test]
    fn constant_dissimilarity_gives_zero_ac() {
        let p = 6;
        let d = DissimMatrix::from_matrix(&DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { 0.4 }));
        for linkage in [Linkage::Wpgma, Linkage::Upgma] {
            let dend = agnes_cluster_with(&d, linkage);
            assert_eq!(ac_coefficient(&dend), Ok(0.0));
        }
    }

    #[test]
    fn all_zero_is_degenerate() {
        let d = DissimMatrix::from_matrix(&DMatrix::zeros(3, 3));
        assert_eq!(ac_coefficient(&agnes_cluster(&d)), Err(AgnesError::DegenerateDendrogram));
    }

    #[test]
    fn upgma_weights_by_size() {
        // {0,1} merge first; then distance to 2 is (0.4 + 0.8)/2 under both
        // rules, but with three points in the left cluster the rules differ.
        let d = dm(&[
            &[0.0, 0.1, 0.15, 0.9],
            &[0.1, 0.0, 0.2, 0.6],
            &[0.15, 0.2, 0.0, 0.3],
            &[0.9, 0.6, 0.3, 0.0],
        ]);
        let w = agnes_cluster_with(&d, Linkage::Wpgma);
        let u = agnes_cluster_with(&d, Linkage::Upgma);
        // after {0,1}: delta to 2 = 0.175, to 3 = 0.75; merge 2 at 0.175
        // WPGMA: delta({0,1,2},3) = (0.75 + 0.3)/2 = 0.525
        // UPGMA: (2*0.75 + 0.3)/3 = 0.6
        assert!((w.max_height() - 0.525).abs() < 1e-12);
        assert!((u.max_height() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn tsv_export() {
        let d = agnes_cluster(&dm(&[&[0.0, 0.7], &[0.7, 0.0]]));
        assert_eq!(d.to_tsv(), "step\ta\tb\theight\n1\t0\t1\t0.7\n");
    }

    #[test]
    fn subset_on_connected_graph_is_everything() {
        let edges: Vec<(usize, usize)> = (0..39).map(|i| (i, i + 1)).collect();
        let g = Graph::from_edges(40, edges).unwrap();
        let spec = SubsetSpec { m: 5, tau: 0.01, max_tries: 3 };
        assert_eq!(select_subset(&g, &spec, 1).unwrap(), (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn loose_tolerance_accepts_first_draw() {
        let g = Graph::from_edges(50, [(0, 1), (2, 3), (4, 5)]).unwrap();
        let spec = SubsetSpec { m: 10, tau: 1e6, max_tries: 1 };
        let nodes = select_subset(&g, &spec, 9).unwrap();
        assert!(nodes.len() >= 10);
    }

    #[test]
    fn regular_graph_ratio_is_one() {
        // disjoint 4-cycles: every degree 2, CV = 0 everywhere
        let mut edges = Vec::new();
        for c in 0..5 {
            let b = 4 * c;
            edges.extend([(b, b + 1), (b + 1, b + 2), (b + 2, b + 3), (b + 3, b)]);
        }
        let g = Graph::from_edges(20, edges).unwrap();
        let degrees = g.degrees();
        assert_eq!(degree_cv(&degrees, &(0..20).collect::<Vec<_>>()), 0.0);
        let spec = SubsetSpec { m: 3, tau: 1e-9, max_tries: 1 };
        assert!(select_subset(&g, &spec, 4).is_ok());
    }

    #[test]
    fn impossible_tolerance_reports_failure() {
        // star plus isolated nodes: closure of a leaf-free draw has CV 0, full CV > 0
        let mut edges: Vec<(usize, usize)> = (1..10).map(|i| (0, i)).collect();
        edges.push((20, 21));
        let g = Graph::from_edges(40, edges).unwrap();
        let spec = SubsetSpec { m: 2, tau: 1e-12, max_tries: 5 };
        assert_eq!(select_subset(&g, &spec, 2), Err(AgnesError::NoSubsetFound(5)));
    }

    #[test]
    fn subset_spec_validation() {
        assert!(SubsetSpec { m: 1, tau: 0.1, max_tries: 1 }.validate(10).is_err());
        assert!(SubsetSpec { m: 10, tau: 0.1, max_tries: 1 }.validate(10).is_err());
        assert!(SubsetSpec { m: 3, tau: 0.0, max_tries: 1 }.validate(10).is_err());
        assert_eq!(SubsetSpec::default_for(700).m, 70);
        assert_eq!(SubsetSpec::default_for(100).m, 30);
        assert_eq!(SubsetSpec::default_for(20).m, 19);
    }
}
