//! Scoring selections against simulated ground truth and aggregating over
//! replicates into method-by-sample-size tables.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agnes::{graph_ac, Linkage};
use crate::estimator::{EstimatorError, LambdaGrid, Method, RegPath};
use crate::netstats::{self, EtaRule, Graph};
use crate::selector::{select_all, DataRef, SelectConfig, SelectError, SelectMethod};
use crate::simgen::{self, GroundTruth, SimError, SimSpec, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least 2 methods to rank, got {0}")]
    TooFewMethods(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl RecoveryScore {
    /// `TP / (TP + FP)`; `None` for an empty estimate.
    pub fn tdr(&self) -> Option<f64> {
        let denom = self.tp + self.fp;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }
}

pub fn recovery(est: &Graph, truth: &Graph) -> Result<RecoveryScore, EvalError> {
    let p = truth.node_count();
    if est.node_count() != p {
        return Err(EvalError::DimensionMismatch(est.node_count(), p));
    }
    let mut s = RecoveryScore { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for i in 0..p {
        for j in i + 1..p {
            match (est.has_edge(i, j), truth.has_edge(i, j)) {
                (true, true) => s.tp += 1,
                (true, false) => s.fp += 1,
                (false, true) => s.fn_ += 1,
                (false, false) => s.tn += 1,
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    /// Compared on the partial-correlation scale `-a_ij / sqrt(a_ii a_jj)`.
    Precision,
    Dissim,
}

/// Partial correlations of a precision matrix (unit diagonal).
pub fn partial_correlations(omega: &DMatrix<f64>) -> DMatrix<f64> {
    let p = omega.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            -omega[(i, j)] / (omega[(i, i)] * omega[(j, j)]).sqrt()
        }
    })
}

/// Mean squared difference over upper-triangle pairs.
pub fn matrix_mse(a: &DMatrix<f64>, b: &DMatrix<f64>, kind: MatrixKind) -> Result<f64, EvalError> {
    if a.shape() != b.shape() {
        return Err(EvalError::DimensionMismatch(a.nrows(), b.nrows()));
    }
    let (a, b) = match kind {
        MatrixKind::Precision => (partial_correlations(a), partial_correlations(b)),
        MatrixKind::Dissim => (a.clone(), b.clone()),
    };
    let p = a.nrows();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..p {
        for j in i + 1..p {
            sum += (a[(i, j)] - b[(i, j)]).powi(2);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// `sum_{i<j} |d_ij - dhat_ij(lambda)|^q` for every graph on the path.
pub fn oracle_risks(path: &RegPath, truth: &Graph, q: f64, eta: EtaRule) -> Vec<Option<f64>> {
    let d = netstats::dissimilarities_with(truth, eta).upper_triangle();
    crate::par::map_range(path.len(), |k| {
        path.graph(k).map(|g| {
            let dh = netstats::dissimilarities_with(g, eta).upper_triangle();
            d.iter().zip(&dh).map(|(a, b)| (a - b).abs().powf(q)).sum()
        })
    })
}

/// Index of the smallest risk, ties toward the larger penalty.
pub fn argmin_largest(values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v <= b) {
                best = Some((k, v));
            }
        }
    }
    best.map(|b| b.0)
}

/// Grid penalty minimising the true-dissimilarity risk.
pub fn oracle_lambda(path: &RegPath, truth: &GroundTruth, q: f64) -> Option<f64> {
    argmin_largest(&oracle_risks(path, &truth.graph, q, EtaRule::default())).map(|k| path.grid().values()[k])
}

/// Midranks, 1 for the best value.
pub fn rank_methods(values: &[f64], lower_is_better: bool) -> Result<Vec<f64>, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewMethods(values.len()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    let key = |i: usize| if lower_is_better { values[i] } else { -values[i] };
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && key(order[end]) == key(order[start]) {
            end += 1;
        }
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    Ok(ranks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatErrors {
    /// `None` when either graph is fully disconnected.
    pub harmonic: Option<f64>,
    pub ac: f64,
    pub estrada: f64,
    pub avg_dissimilarity: f64,
    pub degree_l1: f64,
}

pub fn network_stat_errors(est: &Graph, truth: &Graph) -> Result<StatErrors, EvalError> {
    if est.node_count() != truth.node_count() {
        return Err(EvalError::DimensionMismatch(est.node_count(), truth.node_count()));
    }
    let he = netstats::harmonic_mean(&netstats::geodesics(est)).ok();
    let ht = netstats::harmonic_mean(&netstats::geodesics(truth)).ok();
    let ac = |g: &Graph| graph_ac(g, Linkage::default(), EtaRule::default());
    let ad = |g: &Graph| netstats::avg_dissimilarity(&netstats::dissimilarities(g));
    Ok(StatErrors {
        harmonic: he.zip(ht).map(|(a, b)| (a - b).abs()),
        ac: (ac(est) - ac(truth)).abs(),
        estrada: (netstats::estrada_index(est) - netstats::estrada_index(truth)).abs(),
        avg_dissimilarity: (ad(est) - ad(truth)).abs(),
        degree_l1: netstats::histogram_l1(&netstats::degree_histogram(est), &netstats::degree_histogram(truth)),
    })
}

/// Distribution-free confidence interval for the median from order
/// statistics: the widest symmetric pair `(x_(j), x_(m+1-j))` whose
/// binomial coverage is at least `level`.
pub fn median_ci(values: &[f64], level: f64) -> Option<(f64, f64)> {
    let m = values.len();
    if m == 0 {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    // P(B < j) for B ~ Bin(m, 1/2)
    let mut pmf = vec![0.0; m + 1];
    pmf[0] = 0.5f64.powi(m as i32);
    for k in 1..=m {
        pmf[k] = pmf[k - 1] * (m - k + 1) as f64 / k as f64;
    }
    let mut best = (1, m);
    for j in 1..=m.div_ceil(2) {
        let below: f64 = pmf[..j].iter().sum();
        if 1.0 - 2.0 * below >= level {
            best = (j, m + 1 - j);
        } else {
            break;
        }
    }
    Some((v[best.0 - 1], v[best.1 - 1]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    Some(if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) })
}

// ---------------------------------------------------------------- scenarios

/// Penalty grid by sample size: `[0.20, 0.66]` up to `n = 100`, else `[0.03, 0.40]`; 70 points.
pub fn default_grid(n: usize) -> LambdaGrid {
    default_grid_sized(n, 70).expect("static grid is valid")
}

/// The per-n default range with `count` points.
pub fn default_grid_sized(n: usize, count: usize) -> Result<LambdaGrid, EstimatorError> {
    let (lo, hi) = if n <= 100 { (0.20, 0.66) } else { (0.03, 0.40) };
    LambdaGrid::linspace(lo, hi, count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Preset name, e.g. `p50-powerlaw`.
    pub preset: String,
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<SelectMethod>,
    pub seed: u64,
    /// Overrides the per-n default grid when set.
    pub grid: Option<LambdaGrid>,
    /// Points on the per-n default grid; 70 when unset.
    #[serde(default)]
    pub grid_count: Option<usize>,
    pub select: SelectConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: SelectMethod,
    pub lambda: Option<f64>,
    pub edges: Option<usize>,
    pub recovery: Option<RecoveryScore>,
    pub tdr: Option<f64>,
    pub precision_mse: Option<f64>,
    pub dissim_mse: Option<f64>,
    pub stat_errors: Option<StatErrors>,
    pub flags: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub preset: String,
    pub p: usize,
    pub topology: Topology,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub true_edges: usize,
    pub oracle_lambda: Option<f64>,
    pub methods: Vec<MethodRecord>,
}

impl ReplicateRecord {
    pub fn method(&self, m: SelectMethod) -> Option<&MethodRecord> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Scores one selected graph (and precision, when available) against the truth.
pub fn score_selection(
    method: SelectMethod,
    lambda: Option<f64>,
    graph: Option<&Graph>,
    omega: Option<&DMatrix<f64>>,
    truth: &GroundTruth,
) -> MethodRecord {
    let mut rec = MethodRecord {
        method,
        lambda,
        edges: None,
        recovery: None,
        tdr: None,
        precision_mse: None,
        dissim_mse: None,
        stat_errors: None,
        flags: Vec::new(),
        error: None,
    };
    if let Some(g) = graph {
        rec.edges = Some(g.edge_count());
        rec.recovery = recovery(g, &truth.graph).ok();
        rec.tdr = rec.recovery.and_then(|r| r.tdr());
        let dt = netstats::dissimilarities(&truth.graph).to_matrix();
        let de = netstats::dissimilarities(g).to_matrix();
        rec.dissim_mse = matrix_mse(&de, &dt, MatrixKind::Dissim).ok();
        rec.stat_errors = network_stat_errors(g, &truth.graph).ok();
    }
    if let Some(o) = omega {
        rec.precision_mse = matrix_mse(o, &truth.omega, MatrixKind::Precision).ok();
    }
    rec
}

/// Simulates, selects and scores one replicate.
pub fn run_replicate(
    spec: &SimSpec,
    replicate: usize,
    grid: &LambdaGrid,
    methods: &[SelectMethod],
    cfg: &SelectConfig,
    preset: &str,
) -> Result<ReplicateRecord, EvalError> {
    let rep = simgen::replicate(spec, replicate as u64)?;
    let mut cfg = cfg.clone();
    cfg.amse.seed = crate::rng::derive_seed(cfg.amse.seed, &[rep.spec.seed]);
    cfg.stars.seed = crate::rng::derive_seed(cfg.stars.seed, &[rep.spec.seed]);
    let sel = select_all(DataRef { x: &rep.data, scaling: cfg.scaling }, grid, methods, &cfg)?;
    let oracle = argmin_largest(&oracle_risks(&sel.path, &rep.truth.graph, cfg.q, cfg.agnes.eta))
        .map(|k| grid.values()[k]);
    let mut out = Vec::new();
    for o in &sel.outcomes {
        let rec = match &o.result {
            Ok(c) => {
                let k = c.selected_index;
                let graph = k.and_then(|k| sel.path.graph(k));
                let omega = if sel.path.method() == Method::Glasso {
                    k.and_then(|k| sel.path.precision(k)).map(|e| e.omega())
                } else {
                    None
                };
                let mut r = score_selection(o.method, c.selected_lambda, graph, omega, &rep.truth);
                r.flags = c.flags.iter().map(|f| f.label()).collect();
                r
            }
            Err(e) => {
                let mut r = score_selection(o.method, None, None, None, &rep.truth);
                r.error = Some(e.to_string());
                r
            }
        };
        out.push(rec);
    }
    Ok(ReplicateRecord {
        preset: preset.to_string(),
        p: rep.spec.p,
        topology: rep.spec.topology,
        n: rep.spec.n,
        replicate,
        seed: rep.spec.seed,
        true_edges: rep.truth.graph.edge_count(),
        oracle_lambda: oracle,
        methods: out,
    })
}

/// Every replicate of every sample size, in (n, replicate) order.
pub fn run_scenario(sc: &Scenario) -> Result<Vec<ReplicateRecord>, EvalError> {
    let mut out = Vec::new();
    for &n in &sc.ns {
        let spec = SimSpec::preset(&sc.preset, n, crate::rng::derive_seed(sc.seed, &[n as u64]))?;
        let grid = match (&sc.grid, sc.grid_count) {
            (Some(g), _) => g.clone(),
            (None, Some(c)) => default_grid_sized(n, c)?,
            (None, None) => default_grid(n),
        };
        let recs = crate::par::map_range(sc.replicates, |r| run_replicate(&spec, r, &grid, &sc.methods, &sc.select, &sc.preset));
        for r in recs {
            out.push(r?);
        }
    }
    Ok(out)
}

pub fn records_to_jsonl(records: &[ReplicateRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("serialisable") + "\n").collect()
}

// ---------------------------------------------------------------- tables

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Lambda,
    Tdr,
    PrecisionMse,
    DissimMse,
    Harmonic,
    Ac,
    Estrada,
    AvgDissimilarity,
    DegreeL1,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::Lambda,
        Metric::Tdr,
        Metric::PrecisionMse,
        Metric::DissimMse,
        Metric::Harmonic,
        Metric::Ac,
        Metric::Estrada,
        Metric::AvgDissimilarity,
        Metric::DegreeL1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Lambda => "lambda",
            Metric::Tdr => "tdr",
            Metric::PrecisionMse => "precision_mse",
            Metric::DissimMse => "dissim_mse",
            Metric::Harmonic => "harmonic_error",
            Metric::Ac => "ac_error",
            Metric::Estrada => "estrada_error",
            Metric::AvgDissimilarity => "avg_dissimilarity_error",
            Metric::DegreeL1 => "degree_l1_error",
        }
    }

    pub fn value(self, r: &MethodRecord) -> Option<f64> {
        match self {
            Metric::Lambda => r.lambda,
            Metric::Tdr => r.tdr,
            Metric::PrecisionMse => r.precision_mse,
            Metric::DissimMse => r.dissim_mse,
            Metric::Harmonic => r.stat_errors.and_then(|s| s.harmonic),
            Metric::Ac => r.stat_errors.map(|s| s.ac),
            Metric::Estrada => r.stat_errors.map(|s| s.estrada),
            Metric::AvgDissimilarity => r.stat_errors.map(|s| s.avg_dissimilarity),
            Metric::DegreeL1 => r.stat_errors.map(|s| s.degree_l1),
        }
    }

    /// Rank direction: rank 1 goes to the smallest value except for TDR.
    pub fn lower_is_better(self) -> bool {
        !matches!(self, Metric::Tdr)
    }
}

/// Cell key: (p, topology, method, n).
type CellKey = (usize, &'static str, SelectMethod, usize);

fn cell_table(cells: &BTreeMap<CellKey, Vec<f64>>, ns: &[usize]) -> String {
    let mut out = String::from("p,topology,method");
    for n in ns {
        out.push_str(&format!(",n={n}"));
    }
    out.push('\n');
    let mut rows: Vec<(usize, &str, SelectMethod)> = cells.keys().map(|k| (k.0, k.1, k.2)).collect();
    rows.dedup();
    for (p, topo, m) in rows {
        out.push_str(&format!("{p},{topo},{}", m.name()));
        for &n in ns {
            match cells.get(&(p, topo, m, n)) {
                Some(v) if !v.is_empty() => out.push_str(&format!(",{:.4}", v.iter().sum::<f64>() / v.len() as f64)),
                _ => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    out
}

fn sample_sizes(records: &[ReplicateRecord]) -> Vec<usize> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns
}

/// Mean of `metric` per method and sample size; undefined values are skipped.
pub fn mean_table(records: &[ReplicateRecord], metric: Metric) -> String {
    let mut cells: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        for m in &r.methods {
            let e = cells.entry((r.p, r.topology.name(), m.method, r.n)).or_default();
            if let Some(v) = metric.value(m) {
                e.push(v);
            }
        }
    }
    cell_table(&cells, &sample_sizes(records))
}

/// Per-replicate midranks of `metric` across methods, averaged.
pub fn average_ranks(records: &[ReplicateRecord], metric: Metric) -> BTreeMap<CellKey, Vec<f64>> {
    let mut cells: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        let scored: Vec<(SelectMethod, f64)> =
            r.methods.iter().filter_map(|m| metric.value(m).map(|v| (m.method, v))).collect();
        for m in &r.methods {
            cells.entry((r.p, r.topology.name(), m.method, r.n)).or_default();
        }
        let vals: Vec<f64> = scored.iter().map(|s| s.1).collect();
        if let Ok(ranks) = rank_methods(&vals, metric.lower_is_better()) {
            for ((m, _), rank) in scored.iter().zip(ranks) {
                cells.get_mut(&(r.p, r.topology.name(), *m, r.n)).expect("inserted").push(rank);
            }
        }
    }
    cells
}

pub fn rank_table(records: &[ReplicateRecord], metric: Metric) -> String {
    cell_table(&average_ranks(records, metric), &sample_sizes(records))
}

/// Mean rank of one method in one cell.
pub fn mean_rank(records: &[ReplicateRecord], metric: Metric, method: SelectMethod, n: usize) -> Option<f64> {
    average_ranks(records, metric)
        .into_iter()
        .find(|(k, _)| k.2 == method && k.3 == n)
        .and_then(|(_, v)| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64))
}

/// All output tables keyed by file name.
pub fn all_tables(records: &[ReplicateRecord]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for m in Metric::ALL {
        out.push((format!("{}_mean.csv", m.name()), mean_table(records, m)));
        if m != Metric::Tdr {
            out.push((format!("{}_rank.csv", m.name()), rank_table(records, m)));
        }
    }
    out
}
