//! Synthetic ground truth: clustered hubs-based or power-law graphs, a
//! positive-definite precision matrix on each graph, and Gaussian samples.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Zeta};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netstats::Graph;
use crate::rng::{self, tag, StreamRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cluster sizes must be nonempty and each at least 2")]
    BadClusters,
    #[error("cluster sizes sum to {sum}, expected p = {p}")]
    SizeMismatch { sum: usize, p: usize },
    #[error("probability range ({0}, {1}) must satisfy 0 <= lo <= hi <= 1")]
    BadProbability(f64, f64),
    #[error("power-law exponent must exceed 1, got {0}")]
    BadAlpha(f64),
    #[error("n must be at least 1")]
    NoSamples,
    #[error("could not realise a degree sequence for a cluster of {0} nodes")]
    InfeasibleDegreeSequence(usize),
    #[error("unknown preset {name:?}; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },
    #[error("precision matrix is not positive definite")]
    NotPositiveDefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Hubs,
    Powerlaw,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Hubs => "hubs",
            Topology::Powerlaw => "powerlaw",
        }
    }
}

/// How the between-cluster edge probability is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetweenMode {
    /// One probability for the whole dataset, applied to every cross pair.
    PerDataset,
    /// A fresh probability for every pair of clusters.
    PerClusterPair,
    /// With the dataset probability, each node gets one edge to a uniformly
    /// chosen node outside its cluster.
    #[default]
    PerNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub p: usize,
    pub n: usize,
    pub topology: Topology,
    pub cluster_sizes: Vec<usize>,
    #[serde(default = "defaults::hub_prob")]
    pub hub_prob: f64,
    #[serde(default = "defaults::background")]
    pub background_edge_prob_range: (f64, f64),
    #[serde(default = "defaults::between")]
    pub between_cluster_prob_range: (f64, f64),
    #[serde(default)]
    pub between_mode: BetweenMode,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    /// Replace the generated edges by the same number of uniformly random
    /// pairs, destroying cluster and hub structure but keeping the density.
    #[serde(default)]
    pub randomize_edges: bool,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn hub_prob() -> f64 {
        0.015
    }
    pub fn background() -> (f64, f64) {
        (0.005, 0.03)
    }
    pub fn between() -> (f64, f64) {
        (0.0, 0.1)
    }
    pub fn alpha() -> f64 {
        2.3
    }
}

/// Preset names accepted by [`SimSpec::preset`].
pub const PRESETS: &[&str] = &[
    "p50-hubs",
    "p50-powerlaw",
    "p170-hubs",
    "p170-powerlaw",
    "p290-hubs",
    "p290-powerlaw",
    "p500-hubs",
    "p500-powerlaw",
    "p170-random",
    "p170-rewired",
];

fn preset_clusters(p: usize) -> Option<Vec<usize>> {
    Some(match p {
        50 => vec![50],
        170 => vec![70, 60, 40],
        290 => vec![70, 100, 40, 50, 30],
        500 => vec![100, 100, 80, 60, 60, 70, 30],
        _ => return None,
    })
}

impl SimSpec {
    pub fn new(topology: Topology, cluster_sizes: Vec<usize>, n: usize, seed: u64) -> Self {
        Self {
            p: cluster_sizes.iter().sum(),
            n,
            topology,
            cluster_sizes,
            hub_prob: defaults::hub_prob(),
            background_edge_prob_range: defaults::background(),
            between_cluster_prob_range: defaults::between(),
            between_mode: BetweenMode::default(),
            alpha: defaults::alpha(),
            randomize_edges: false,
            seed,
        }
    }

    /// Preset such as `p170-hubs` or `p50-powerlaw`.
    ///
    /// Two non-clustered contrasts exist for `p = 170`: `p170-random` is
    /// one cluster with no hubs, i.e. an Erdős–Rényi graph with the usual
    /// background edge probability; `p170-rewired` is the `p170-hubs` graph
    /// with its edges scattered uniformly at random (same density).
    pub fn preset(name: &str, n: usize, seed: u64) -> Result<Self, SimError> {
        let unknown = || SimError::UnknownPreset { name: name.to_string(), valid: PRESETS.join(", ") };
        match name {
            "p170-random" => {
                let mut s = Self::new(Topology::Hubs, vec![170], n, seed);
                s.hub_prob = 0.0;
                return Ok(s);
            }
            "p170-rewired" => {
                let mut s = Self::preset("p170-hubs", n, seed)?;
                s.randomize_edges = true;
                return Ok(s);
            }
            _ => {}
        }
        let (p, topo) = name.strip_prefix('p').and_then(|r| r.split_once('-')).ok_or_else(unknown)?;
        let p: usize = p.parse().map_err(|_| unknown())?;
        let topology = match topo {
            "hubs" => Topology::Hubs,
            "powerlaw" => Topology::Powerlaw,
            _ => return Err(unknown()),
        };
        let clusters = preset_clusters(p).ok_or_else(unknown)?;
        Ok(Self::new(topology, clusters, n, seed))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.cluster_sizes.is_empty() || self.cluster_sizes.iter().any(|&c| c < 2) {
            return Err(SimError::BadClusters);
        }
        let sum: usize = self.cluster_sizes.iter().sum();
        if sum != self.p {
            return Err(SimError::SizeMismatch { sum, p: self.p });
        }
        for (lo, hi) in [
            (self.hub_prob, self.hub_prob),
            self.background_edge_prob_range,
            self.between_cluster_prob_range,
        ] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(SimError::BadProbability(lo, hi));
            }
        }
        if !(self.alpha > 1.0) {
            return Err(SimError::BadAlpha(self.alpha));
        }
        if self.n == 0 {
            return Err(SimError::NoSamples);
        }
        Ok(())
    }

    /// Seed for replicate `r` of this spec.
    pub fn replicate_seed(&self, r: u64) -> u64 {
        rng::derive_seed(self.seed, &[r])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub graph: Graph,
    pub omega: DMatrix<f64>,
    pub delta: f64,
    pub cluster_assignment: Vec<usize>,
}

fn uniform_in(rng: &mut StreamRng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo { rng.random_range(lo..hi) } else { lo }
}

/// Node ranges of each cluster, in order.
fn cluster_ranges(sizes: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let r = start..start + s;
            start += s;
            r
        })
        .collect()
}

fn hubs_cluster(
    rng: &mut StreamRng,
    size: usize,
    hub_prob: f64,
    background: (f64, f64),
    adj: &mut [Vec<bool>],
) {
    let b = size.div_ceil(3);
    let hubs: Vec<usize> = (0..size).filter(|_| rng.random_bool(hub_prob)).collect();
    for &h in &hubs {
        let degree = if b <= 5 {
            5.min(size - 1)
        } else {
            (rng.random_range(5.0..b as f64).floor() as usize).min(size - 1)
        };
        let mut others: Vec<usize> = (0..size).filter(|&v| v != h).collect();
        others.shuffle(rng);
        for &v in others.iter().take(degree) {
            adj[h][v] = true;
            adj[v][h] = true;
        }
    }
    let q = uniform_in(rng, background);
    for i in 0..size {
        for j in i + 1..size {
            if rng.random_bool(q) {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
}

const MATCH_ROUNDS: usize = 100;
const MAX_SEQUENCES: usize = 1000;

/// Configuration-model pairing with rejection of self-loops and repeated
/// edges. Each round matches stubs one at a time, choosing a partner
/// uniformly among the stubs that keep the graph simple; a dead end
/// restarts the round.
fn match_stubs(rng: &mut StreamRng, degrees: &[usize]) -> Option<Vec<(usize, usize)>> {
    let size = degrees.len();
    for _ in 0..MATCH_ROUNDS {
        let mut stubs: Vec<usize> = degrees.iter().enumerate().flat_map(|(v, &d)| std::iter::repeat_n(v, d)).collect();
        stubs.shuffle(rng);
        let mut adj = vec![vec![false; size]; size];
        let mut edges = Vec::with_capacity(stubs.len() / 2);
        let mut ok = true;
        while let Some(u) = stubs.pop() {
            let candidates: Vec<usize> =
                (0..stubs.len()).filter(|&k| stubs[k] != u && !adj[u][stubs[k]]).collect();
            if candidates.is_empty() {
                ok = false;
                break;
            }
            let k = candidates[rng.random_range(0..candidates.len())];
            let v = stubs.swap_remove(k);
            adj[u][v] = true;
            adj[v][u] = true;
            edges.push((u.min(v), u.max(v)));
        }
        if ok {
            return Some(edges);
        }
    }
    None
}

fn powerlaw_cluster(rng: &mut StreamRng, size: usize, alpha: f64, adj: &mut [Vec<bool>]) -> Result<(), SimError> {
    let zeta = Zeta::new(alpha).map_err(|_| SimError::BadAlpha(alpha))?;
    let cap = (size - 1) as f64;
    for _ in 0..MAX_SEQUENCES {
        // truncation by rejection: draws above size - 1 are redrawn
        let degrees: Vec<usize> = (0..size)
            .map(|_| loop {
                let k: f64 = zeta.sample(rng);
                if k <= cap {
                    break k as usize;
                }
            })
            .collect();
        if degrees.iter().sum::<usize>() % 2 == 1 {
            continue;
        }
        if let Some(edges) = match_stubs(rng, &degrees) {
            for (i, j) in edges {
                adj[i][j] = true;
                adj[j][i] = true;
            }
            return Ok(());
        }
    }
    Err(SimError::InfeasibleDegreeSequence(size))
}

/// Ground-truth graph and cluster labels. Clusters occupy contiguous node
/// ranges in the order of `spec.cluster_sizes`.
pub fn gen_topology(spec: &SimSpec) -> Result<(Graph, Vec<usize>), SimError> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[tag::TOPOLOGY]);
    let p = spec.p;
    let ranges = cluster_ranges(&spec.cluster_sizes);
    let mut adj = vec![vec![false; p]; p];
    let mut assignment = vec![0; p];
    for (c, r) in ranges.iter().enumerate() {
        let size = r.len();
        let mut local = vec![vec![false; size]; size];
        match spec.topology {
            Topology::Hubs => hubs_cluster(&mut rng, size, spec.hub_prob, spec.background_edge_prob_range, &mut local),
            Topology::Powerlaw => powerlaw_cluster(&mut rng, size, spec.alpha, &mut local)?,
        }
        for i in 0..size {
            assignment[r.start + i] = c;
            for j in 0..size {
                adj[r.start + i][r.start + j] = local[i][j];
            }
        }
    }
    let dataset_q = uniform_in(&mut rng, spec.between_cluster_prob_range);
    if spec.between_mode == BetweenMode::PerNode {
        if ranges.len() > 1 {
            for i in 0..p {
                if rng.random_bool(dataset_q) {
                    let outside: Vec<usize> = (0..p).filter(|&j| assignment[j] != assignment[i]).collect();
                    let j = outside[rng.random_range(0..outside.len())];
                    adj[i][j] = true;
                    adj[j][i] = true;
                }
            }
        }
    } else {
    for a in 0..ranges.len() {
        for b in a + 1..ranges.len() {
            let q = match spec.between_mode {
                BetweenMode::PerDataset | BetweenMode::PerNode => dataset_q,
                BetweenMode::PerClusterPair => uniform_in(&mut rng, spec.between_cluster_prob_range),
            };
            for i in ranges[a].clone() {
                for j in ranges[b].clone() {
                    if rng.random_bool(q) {
                        adj[i][j] = true;
                        adj[j][i] = true;
                    }
                }
            }
        }
    }
    }
    if spec.randomize_edges {
        let m = adj.iter().flatten().filter(|&&b| b).count() / 2;
        let pairs = p * (p - 1) / 2;
        let picked = rand::seq::index::sample(&mut rng, pairs, m);
        adj = vec![vec![false; p]; p];
        for idx in picked {
            let (i, j) = pair_from_index(idx, p);
            adj[i][j] = true;
            adj[j][i] = true;
        }
    }
    let flat: Vec<bool> = adj.concat();
    let graph = Graph::from_adjacency(p, &flat).expect("generated adjacency is a simple graph");
    Ok((graph, assignment))
}

/// Inverse of the row-major upper-triangle enumeration of pairs.
fn pair_from_index(mut idx: usize, p: usize) -> (usize, usize) {
    for i in 0..p {
        let row = p - 1 - i;
        if idx < row {
            return (i, i + 1 + idx);
        }
        idx -= row;
    }
    unreachable!("pair index out of range")
}

fn condition_number(eigs: &[f64], shift: f64) -> f64 {
    let (lo, hi) = eigs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if lo + shift <= 0.0 { f64::INFINITY } else { (hi + shift) / (lo + shift) }
}

/// Smallest `delta >= 0` (up to bisection precision, always on the feasible
/// side) with `cond(omega0 + delta I) < p`.
pub fn regularization_shift(omega0: &DMatrix<f64>) -> f64 {
    let p = omega0.nrows() as f64;
    let eigs: Vec<f64> = omega0.clone().symmetric_eigenvalues().iter().copied().collect();
    let ok = |d: f64| condition_number(&eigs, d) < p;
    if ok(0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while !ok(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) { hi = mid } else { lo = mid }
    }
    // bisection lands on cond = p; the margin keeps a recomputed
    // condition number strictly below it
    hi * (1.0 + 1e-10)
}

/// Precision matrix on `graph`: unit diagonal, off-diagonals `±U(0.5, 0.9)`
/// with random sign, then shifted by `delta I` so that `cond < p`.
pub fn gen_precision(graph: &Graph, seed: u64) -> GroundTruth {
    let p = graph.node_count();
    let mut rng = rng::stream(seed, &[tag::PRECISION]);
    let mut omega = DMatrix::identity(p, p);
    for (i, j) in graph.edges() {
        let mag: f64 = rng.random_range(0.5..0.9);
        let v = if rng.random_bool(0.5) { mag } else { -mag };
        omega[(i, j)] = v;
        omega[(j, i)] = v;
    }
    let delta = regularization_shift(&omega);
    for i in 0..p {
        omega[(i, i)] += delta;
    }
    GroundTruth { graph: graph.clone(), omega, delta, cluster_assignment: vec![0; p] }
}

/// Full ground truth for a spec: topology, cluster labels and precision.
pub fn generate(spec: &SimSpec) -> Result<GroundTruth, SimError> {
    let (graph, clusters) = gen_topology(spec)?;
    let mut gt = gen_precision(&graph, spec.seed);
    gt.cluster_assignment = clusters;
    Ok(gt)
}

/// `n` iid rows from `N(0, omega^-1)`: with `omega = L L'`, each row solves
/// `L' x = z` for standard normal `z`.
pub fn sample_mvn(omega: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>, SimError> {
    let p = omega.nrows();
    let chol = omega.clone().cholesky().ok_or(SimError::NotPositiveDefinite)?;
    let lt = chol.l().transpose();
    let mut rng = rng::stream(seed, &[tag::SAMPLES]);
    let z = DMatrix::<f64>::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
    let x = lt.solve_upper_triangular(&z).ok_or(SimError::NotPositiveDefinite)?;
    Ok(x.transpose())
}

/// One simulated replicate: ground truth plus its `n x p` data matrix.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub spec: SimSpec,
    pub truth: GroundTruth,
    pub data: DMatrix<f64>,
}

/// Replicate `r` of `spec`; every replicate has its own derived seed.
pub fn replicate(spec: &SimSpec, r: u64) -> Result<Replicate, SimError> {
    let mut rs = spec.clone();
    rs.seed = spec.replicate_seed(r);
    let truth = generate(&rs)?;
    let data = sample_mvn(&truth.omega, rs.n, rs.seed)?;
    Ok(Replicate { spec: rs, truth, data })
}
