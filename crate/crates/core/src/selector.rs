//! Penalty selection over a fitted regularisation path.
//!
//! Every selector produces a [`RiskCurve`]: one value per grid point (or
//! `None` where the value is undefined) plus the chosen index. Ties are
//! broken toward the larger penalty, i.e. the sparser graph, and flagged.

use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agnes::{self, Linkage, SubsetSpec};
use crate::estimator::{
    fit_path, EstimatorError, FitOptions, LambdaGrid, Method, RegPath, SampleCov, Scaling,
};
use crate::netstats::{self, EtaRule, Graph};
use crate::rng::{self, tag};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("no selection methods requested")]
    NoMethods,
    #[error("{0} needs precision values; fit the path with the graphical lasso")]
    MissingPrecision(SelectMethod),
    #[error("path has {got} grid points, {method} needs at least {min}")]
    PathTooShort { method: SelectMethod, min: usize, got: usize },
    #[error("initial lambda {0} is not a grid point")]
    InitNotInGrid(f64),
    #[error("initial graph at lambda {0} could not be fitted")]
    InitFitFailed(f64),
    #[error("subsample grid does not match the path grid")]
    PathMismatch,
    #[error("invalid subsample configuration: {0}")]
    InvalidSubsample(String),
    #[error("beta must lie in (0, 0.5), got {0}")]
    InvalidBeta(f64),
    #[error("q must be positive, got {0}")]
    InvalidQ(f64),
    #[error("data has {data} columns but the path has {path} variables")]
    DimensionMismatch { data: usize, path: usize },
    #[error("every grid point failed to fit")]
    AllPointsFailed,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMethod {
    Pc,
    Amse,
    Agnes,
    Stars,
    Aic,
    Bic,
}

impl SelectMethod {
    pub const ALL: [SelectMethod; 6] = [
        SelectMethod::Pc,
        SelectMethod::Amse,
        SelectMethod::Agnes,
        SelectMethod::Stars,
        SelectMethod::Aic,
        SelectMethod::Bic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectMethod::Pc => "pc",
            SelectMethod::Amse => "amse",
            SelectMethod::Agnes => "agnes",
            SelectMethod::Stars => "stars",
            SelectMethod::Aic => "aic",
            SelectMethod::Bic => "bic",
        }
    }

    pub fn needs_precision(self) -> bool {
        matches!(self, SelectMethod::Aic | SelectMethod::Bic)
    }
}

impl std::fmt::Display for SelectMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name().to_uppercase())
    }
}

impl std::str::FromStr for SelectMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown method {s:?}; expected one of pc, amse, agnes, stars, aic, bic"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
    /// Smallest penalty whose value is at or below a threshold.
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    /// Several grid points attained the extremum; the largest penalty won.
    Tie { candidates: usize },
    /// Every defined value was equal.
    AllTied,
    /// The path has no connectivity change. No penalty is selected.
    FlatPath,
    /// Grid points dropped because the running average was zero there.
    ZeroRunningAverage { indices: Vec<usize> },
    /// No penalty met the instability bound; the largest one was returned.
    NoStableLambda,
    /// Subsample fits that failed and were left out of the averages.
    FailedCells { count: usize },
    /// Grid points whose fit failed on the full data.
    FailedPoints { count: usize },
}

impl Flag {
    pub fn label(&self) -> String {
        match self {
            Flag::Tie { candidates } => format!("tie({candidates})"),
            Flag::AllTied => "all_tied".into(),
            Flag::FlatPath => "flat_path".into(),
            Flag::ZeroRunningAverage { indices } => format!("zero_running_average({})", indices.len()),
            Flag::NoStableLambda => "no_stable_lambda".into(),
            Flag::FailedCells { count } => format!("failed_cells({count})"),
            Flag::FailedPoints { count } => format!("failed_points({count})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub method: SelectMethod,
    pub grid: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub direction: Direction,
    pub selected_index: Option<usize>,
    pub selected_lambda: Option<f64>,
    pub flags: Vec<Flag>,
}

impl RiskCurve {
    fn new(method: SelectMethod, grid: &LambdaGrid, values: Vec<Option<f64>>, direction: Direction) -> Self {
        Self {
            method,
            grid: grid.values().to_vec(),
            values,
            direction,
            selected_index: None,
            selected_lambda: None,
            flags: Vec::new(),
        }
    }

    fn select(&mut self, k: usize) {
        self.selected_index = Some(k);
        self.selected_lambda = Some(self.grid[k]);
    }

    pub fn has_flag(&self, f: impl Fn(&Flag) -> bool) -> bool {
        self.flags.iter().any(f)
    }
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Indices attaining the extremum of the defined values.
fn extremum_set(values: &[Option<f64>], maximize: bool) -> Vec<usize> {
    let best = values.iter().flatten().copied().fold(None, |acc: Option<f64>, v| match acc {
        None => Some(v),
        Some(a) if (maximize && v > a) || (!maximize && v < a) => Some(v),
        keep => keep,
    });
    match best {
        None => Vec::new(),
        Some(b) => values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.filter(|&v| nearly_equal(v, b)).map(|_| k))
            .collect(),
    }
}

/// Argmax/argmin with ties toward the larger penalty. Adds tie flags.
fn select_extremum(curve: &mut RiskCurve, maximize: bool) {
    let set = extremum_set(&curve.values, maximize);
    let Some(&k) = set.last() else { return };
    let defined = curve.values.iter().flatten().count();
    if set.len() > 1 {
        if set.len() == defined {
            curve.flags.push(Flag::AllTied);
        } else {
            curve.flags.push(Flag::Tie { candidates: set.len() });
        }
    }
    curve.select(k);
}

// ---------------------------------------------------------------- PC

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunningAverage {
    /// Mean of the differences from the current point to the end of the grid.
    #[default]
    Forward,
    /// Mean of the differences from the start of the grid to the current point.
    Backward,
}

/// PC ratios `|D(k) / Bbar(k)|` from a geodesic-mean sequence ordered by
/// increasing penalty. Returns the ratios and the indices where the running
/// average vanished.
pub fn pc_ratios(h: &[f64], avg: RunningAverage) -> (Vec<Option<f64>>, Vec<usize>) {
    let m = h.len();
    let mut ratios = vec![None; m];
    let mut zero = Vec::new();
    if m < 2 {
        return (ratios, zero);
    }
    let d: Vec<f64> = (1..m).map(|k| h[k] - h[k - 1]).collect();
    for k in 1..m {
        let range = match avg {
            RunningAverage::Forward => k..m,
            RunningAverage::Backward => 1..k + 1,
        };
        let len = range.len() as f64;
        let bbar = range.map(|j| d[j - 1]).sum::<f64>() / len;
        if bbar == 0.0 {
            zero.push(k);
        } else {
            ratios[k] = Some((d[k - 1] / bbar).abs());
        }
    }
    (ratios, zero)
}

/// PC selection from a precomputed geodesic-mean sequence.
pub fn pc_from_h(grid: &LambdaGrid, h: &[f64], avg: RunningAverage) -> Result<RiskCurve, SelectError> {
    if grid.len() < 3 {
        return Err(SelectError::PathTooShort { method: SelectMethod::Pc, min: 3, got: grid.len() });
    }
    assert_eq!(h.len(), grid.len());
    let (ratios, zero) = pc_ratios(h, avg);
    let mut curve = RiskCurve::new(SelectMethod::Pc, grid, ratios, Direction::Maximize);
    if h.windows(2).all(|w| w[1] == w[0]) {
        curve.flags.push(Flag::FlatPath);
        return Ok(curve);
    }
    if !zero.is_empty() {
        curve.flags.push(Flag::ZeroRunningAverage { indices: zero });
    }
    select_extremum(&mut curve, true);
    Ok(curve)
}

/// Geodesic means along the path; failed points are `None`.
pub fn path_geodesic_means(path: &RegPath) -> Vec<Option<f64>> {
    crate::par::map_range(path.len(), |k| path.graph(k).map(|g| netstats::geodesic_mean(&netstats::geodesics(g))))
}

pub fn pc_select(path: &RegPath, avg: RunningAverage) -> Result<RiskCurve, SelectError> {
    let h = path_geodesic_means(path);
    let failed = h.iter().filter(|v| v.is_none()).count();
    if failed == h.len() {
        return Err(SelectError::AllPointsFailed);
    }
    // a failed point carries its neighbour's value so differences stay defined
    let mut filled = Vec::with_capacity(h.len());
    let mut last = h.iter().flatten().next().copied().unwrap_or(0.0);
    for v in &h {
        last = v.unwrap_or(last);
        filled.push(last);
    }
    let mut curve = pc_from_h(path.grid(), &filled, avg)?;
    if failed > 0 {
        curve.flags.push(Flag::FailedPoints { count: failed });
    }
    Ok(curve)
}

// ---------------------------------------------------------------- AGNES

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AgnesOptions {
    pub linkage: Linkage,
    pub eta: EtaRule,
    /// Approximate AC on random connected subsets instead of the full graph.
    pub subset: Option<SubsetApprox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetApprox {
    pub spec: SubsetSpec,
    pub draws: usize,
    pub seed: u64,
}

/// AC of one graph; a degenerate dendrogram scores 0.
pub fn graph_score(graph: &Graph, opts: &AgnesOptions) -> f64 {
    match &opts.subset {
        None => agnes::graph_ac(graph, opts.linkage, opts.eta),
        Some(s) => agnes::approximate_ac(graph, &s.spec, s.draws, s.seed, opts.linkage, opts.eta),
    }
}

pub fn agnes_from_values(grid: &LambdaGrid, ac: Vec<Option<f64>>) -> RiskCurve {
    let mut curve = RiskCurve::new(SelectMethod::Agnes, grid, ac, Direction::Maximize);
    select_extremum(&mut curve, true);
    curve
}

pub fn agnes_select(path: &RegPath, opts: &AgnesOptions) -> Result<RiskCurve, SelectError> {
    let ac = crate::par::map_range(path.len(), |k| path.graph(k).map(|g| graph_score(g, opts)));
    let failed = ac.iter().filter(|v| v.is_none()).count();
    if failed == ac.len() {
        return Err(SelectError::AllPointsFailed);
    }
    let mut curve = agnes_from_values(path.grid(), ac);
    if failed > 0 {
        curve.flags.push(Flag::FailedPoints { count: failed });
    }
    Ok(curve)
}

// ---------------------------------------------------------------- subsampling

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleSize {
    /// `ceil(n / 2)`.
    HalfN,
    /// `min(ceil(10 sqrt n), floor(0.8 n))`.
    TenSqrtN,
    Explicit(usize),
}

impl SubsampleSize {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            SubsampleSize::HalfN => n.div_ceil(2),
            SubsampleSize::TenSqrtN => {
                let ten = (10.0 * (n as f64).sqrt()).ceil() as usize;
                ten.min((0.8 * n as f64).floor() as usize)
            }
            SubsampleSize::Explicit(b) => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    /// Number of subsamples.
    pub t: usize,
    pub size: SubsampleSize,
    pub seed: u64,
}

impl SubsampleConfig {
    pub fn amse_default(seed: u64) -> Self {
        Self { t: 50, size: SubsampleSize::HalfN, seed }
    }

    pub fn stars_default(seed: u64) -> Self {
        Self { t: 50, size: SubsampleSize::TenSqrtN, seed }
    }

    /// Resolved subsample size. `B = n` is accepted and reproduces the full
    /// data in every replicate.
    pub fn validate(&self, n: usize) -> Result<usize, SelectError> {
        if self.t < 2 {
            return Err(SelectError::InvalidSubsample(format!("need at least 2 subsamples, got {}", self.t)));
        }
        let b = self.size.resolve(n);
        if b < 2 || b > n {
            return Err(SelectError::InvalidSubsample(format!("subsample size {b} outside [2, {n}]")));
        }
        Ok(b)
    }
}

/// Data matrix plus the recipe for turning rows into `S`.
#[derive(Debug, Clone, Copy)]
pub struct DataRef<'a> {
    pub x: &'a DMatrix<f64>,
    pub scaling: Scaling,
}

/// Sorted row indices of subsample `t`.
pub fn subsample_rows(n: usize, b: usize, seed: u64, purpose: u64, t: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, &[purpose, t as u64]);
    let mut rows = index::sample(&mut rng, n, b).into_vec();
    rows.sort_unstable();
    rows
}

/// Graphs of every subsample path: `out[t][k]`, `None` where that fit failed.
pub fn subsample_graphs(
    data: DataRef<'_>,
    grid: &LambdaGrid,
    fit: &FitOptions,
    cfg: &SubsampleConfig,
    purpose: u64,
) -> Result<Vec<Vec<Option<Graph>>>, SelectError> {
    let n = data.x.nrows();
    let b = cfg.validate(n)?;
    Ok(crate::par::map_range(cfg.t, |t| {
        let rows = subsample_rows(n, b, cfg.seed, purpose, t);
        let sub = data.x.select_rows(rows.iter());
        match SampleCov::from_data(&sub, data.scaling) {
            Ok(s) => fit_path(&s, grid, fit).graphs(),
            Err(_) => vec![None; grid.len()],
        }
    }))
}

// ---------------------------------------------------------------- A-MSE

/// Risk at one grid point from the initial dissimilarities `d_init` and
/// one dissimilarity vector per replicate (`None` for failed fits).
///
/// For `q = 2` this is the sum over pairs of the replicate variance around
/// the replicate mean plus the squared bias of that mean against `d_init`.
/// Otherwise it is the replicate average of `|d_init - d^t|^q`, summed.
pub fn amse_risk(d_init: &[f64], reps: &[Option<Vec<f64>>], q: f64) -> Option<f64> {
    let valid: Vec<&Vec<f64>> = reps.iter().flatten().collect();
    if valid.is_empty() {
        return None;
    }
    let t = valid.len() as f64;
    let mut total = 0.0;
    for (pair, &init) in d_init.iter().enumerate() {
        if q == 2.0 {
            // shifted mean: exact when every replicate agrees
            let base = valid[0][pair];
            let mean = base + valid.iter().map(|d| d[pair] - base).sum::<f64>() / t;
            let var = valid.iter().map(|d| (mean - d[pair]).powi(2)).sum::<f64>() / t;
            total += var + (mean - init).powi(2);
        } else {
            total += valid.iter().map(|d| (init - d[pair]).abs().powf(q)).sum::<f64>() / t;
        }
    }
    Some(total)
}

/// A-MSE curve from replicate graphs `reps[t][k]` and the initial graph.
pub fn amse_from_graphs(
    grid: &LambdaGrid,
    init_index: usize,
    init_graph: &Graph,
    reps: &[Vec<Option<Graph>>],
    q: f64,
    eta: EtaRule,
) -> Result<RiskCurve, SelectError> {
    if reps.iter().any(|r| r.len() != grid.len()) {
        return Err(SelectError::PathMismatch);
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(SelectError::InvalidQ(q));
    }
    let d_init = netstats::dissimilarities_with(init_graph, eta).upper_triangle();
    let values = crate::par::map_range(grid.len(), |k| {
        let ds: Vec<Option<Vec<f64>>> = reps
            .iter()
            .map(|r| r[k].as_ref().map(|g| netstats::dissimilarities_with(g, eta).upper_triangle()))
            .collect();
        amse_risk(&d_init, &ds, q)
    });
    let failed: usize = reps.iter().map(|r| r.iter().filter(|g| g.is_none()).count()).sum();
    let mut curve = RiskCurve::new(SelectMethod::Amse, grid, values, Direction::Minimize);
    let set = extremum_set(&curve.values, false);
    if let Some(&last) = set.last() {
        // among tied minima the initial penalty wins, then the largest
        let k = if set.contains(&init_index) { init_index } else { last };
        if set.len() > 1 {
            curve.flags.push(Flag::Tie { candidates: set.len() });
        }
        curve.select(k);
    }
    if failed > 0 {
        curve.flags.push(Flag::FailedCells { count: failed });
    }
    Ok(curve)
}

pub fn amse_select(
    data: DataRef<'_>,
    path: &RegPath,
    init_lambda: f64,
    cfg: &SubsampleConfig,
    q: f64,
    eta: EtaRule,
) -> Result<RiskCurve, SelectError> {
    check_dims(data, path)?;
    let init_index = path.grid().index_of(init_lambda).ok_or(SelectError::InitNotInGrid(init_lambda))?;
    let init_graph = path.graph(init_index).ok_or(SelectError::InitFitFailed(init_lambda))?;
    let reps = subsample_graphs(data, path.grid(), path.options(), cfg, tag::AMSE)?;
    amse_from_graphs(path.grid(), init_index, init_graph, &reps, q, eta)
}

fn check_dims(data: DataRef<'_>, path: &RegPath) -> Result<(), SelectError> {
    let p = path.points().iter().find_map(|pt| pt.outcome.as_ref().ok()).map(|e| e.graph.node_count());
    match p {
        Some(p) if p != data.x.ncols() => Err(SelectError::DimensionMismatch { data: data.x.ncols(), path: p }),
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------- StARS

/// Mean edge instability `2 theta (1 - theta)` over all pairs, per grid point.
pub fn edge_instability(p: usize, m: usize, reps: &[Vec<Option<Graph>>]) -> (Vec<Option<f64>>, usize) {
    let pairs = (p * (p - 1) / 2) as f64;
    let mut failed = 0;
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let mut counts = vec![0u32; p * p];
        let mut valid = 0u32;
        for r in reps {
            match &r[k] {
                Some(g) => {
                    valid += 1;
                    for (i, j) in g.edges() {
                        counts[i * p + j] += 1;
                    }
                }
                None => failed += 1,
            }
        }
        if valid == 0 {
            out.push(None);
            continue;
        }
        let t = valid as f64;
        let mut sum = 0.0;
        for i in 0..p {
            for j in i + 1..p {
                let theta = counts[i * p + j] as f64 / t;
                sum += 2.0 * theta * (1.0 - theta);
            }
        }
        out.push(Some(sum / pairs));
    }
    (out, failed)
}

/// Monotonised instability `Dbar(k) = max_{j >= k} D(j)` and the selection:
/// the smallest penalty with `Dbar <= beta`, else the largest penalty.
pub fn stars_from_instability(grid: &LambdaGrid, d: &[Option<f64>], beta: f64) -> Result<RiskCurve, SelectError> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(SelectError::InvalidBeta(beta));
    }
    let m = grid.len();
    let mut dbar = vec![None; m];
    let mut running: Option<f64> = None;
    for k in (0..m).rev() {
        if let Some(v) = d[k] {
            running = Some(running.map_or(v, |r| r.max(v)));
        }
        dbar[k] = d[k].and(running);
    }
    let mut curve = RiskCurve::new(SelectMethod::Stars, grid, dbar, Direction::Threshold);
    match (0..m).find(|&k| curve.values[k].is_some_and(|v| v <= beta)) {
        Some(k) => curve.select(k),
        None => {
            curve.flags.push(Flag::NoStableLambda);
            curve.select(m - 1);
        }
    }
    Ok(curve)
}

pub fn stars_select(
    data: DataRef<'_>,
    path: &RegPath,
    cfg: &SubsampleConfig,
    beta: f64,
) -> Result<RiskCurve, SelectError> {
    check_dims(data, path)?;
    if !(beta > 0.0 && beta < 0.5) {
        return Err(SelectError::InvalidBeta(beta));
    }
    let reps = subsample_graphs(data, path.grid(), path.options(), cfg, tag::STARS)?;
    let (d, failed) = edge_instability(data.x.ncols(), path.len(), &reps);
    let mut curve = stars_from_instability(path.grid(), &d, beta)?;
    if failed > 0 {
        curve.flags.push(Flag::FailedCells { count: failed });
    }
    Ok(curve)
}

// ---------------------------------------------------------------- AIC / BIC

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IcFlavor {
    Aic,
    Bic,
}

impl IcFlavor {
    pub fn penalty(self, n: usize) -> f64 {
        match self {
            IcFlavor::Aic => 2.0,
            IcFlavor::Bic => (n as f64).ln(),
        }
    }
}

/// `-n [log det omega - tr(S omega)] + pen * df`.
pub fn ic_score(s: &SampleCov, omega: &DMatrix<f64>, df: usize, flavor: IcFlavor) -> Option<f64> {
    let chol = omega.clone().cholesky()?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let tr = s.matrix().component_mul(omega).sum();
    Some(-(s.n() as f64) * (logdet - tr) + flavor.penalty(s.n()) * df as f64)
}

/// IC curve from per-point log-likelihood terms `log det - tr` and degrees of freedom.
pub fn ic_from_terms(grid: &LambdaGrid, n: usize, loglik: &[Option<f64>], df: &[usize], flavor: IcFlavor) -> RiskCurve {
    let method = match flavor {
        IcFlavor::Aic => SelectMethod::Aic,
        IcFlavor::Bic => SelectMethod::Bic,
    };
    let values = loglik
        .iter()
        .zip(df)
        .map(|(l, &d)| l.map(|l| -(n as f64) * l + flavor.penalty(n) * d as f64))
        .collect();
    let mut curve = RiskCurve::new(method, grid, values, Direction::Minimize);
    select_extremum(&mut curve, false);
    curve
}

pub fn ic_select(s: &SampleCov, path: &RegPath, flavor: IcFlavor) -> Result<RiskCurve, SelectError> {
    let method = match flavor {
        IcFlavor::Aic => SelectMethod::Aic,
        IcFlavor::Bic => SelectMethod::Bic,
    };
    if path.method() != Method::Glasso {
        return Err(SelectError::MissingPrecision(method));
    }
    let m = path.len();
    let mut loglik = vec![None; m];
    let mut df = vec![0; m];
    for k in 0..m {
        if let Some(est) = path.precision(k) {
            df[k] = path.graph(k).map_or(0, Graph::edge_count);
            if let Some(chol) = est.omega().clone().cholesky() {
                let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                loglik[k] = Some(logdet - s.matrix().component_mul(est.omega()).sum());
            }
        }
    }
    let failed = loglik.iter().filter(|v| v.is_none()).count();
    if failed == m {
        return Err(SelectError::AllPointsFailed);
    }
    let mut curve = ic_from_terms(path.grid(), s.n(), &loglik, &df, flavor);
    if failed > 0 {
        curve.flags.push(Flag::FailedPoints { count: failed });
    }
    Ok(curve)
}

// ---------------------------------------------------------------- connectivity indicators

/// `h_ij = 1` when nodes share a neighbour or are adjacent (positive
/// similarity), upper triangle in row-major order.
pub fn connectivity_indicators(graph: &Graph) -> Vec<bool> {
    let dm = netstats::dissimilarities(graph);
    let p = graph.node_count();
    let mut h = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in i + 1..p {
            h.push(dm.sigma(i, j) > 0.0);
        }
    }
    h
}

/// `sum (h - hhat)^2` over pairs.
pub fn binary_amse_objective(h: &[bool], hhat: &[bool]) -> i64 {
    h.iter().zip(hhat).filter(|(a, b)| a != b).count() as i64
}

/// `C_h - (TP - FP)`, with `C_h = sum h`, TP and FP counted over pairs with `hhat = 1`.
pub fn youden_form(h: &[bool], hhat: &[bool]) -> i64 {
    let c: i64 = h.iter().filter(|&&v| v).count() as i64;
    let tp = h.iter().zip(hhat).filter(|&(&a, &b)| a && b).count() as i64;
    let fp = h.iter().zip(hhat).filter(|&(&a, &b)| !a && b).count() as i64;
    c - (tp - fp)
}

// ---------------------------------------------------------------- orchestration

/// Which penalty A-MSE starts from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AmseInit {
    #[default]
    Agnes,
    Pc,
    Lambda(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub fit: FitOptions,
    pub scaling: Scaling,
    pub amse: SubsampleConfig,
    pub stars: SubsampleConfig,
    pub beta: f64,
    pub q: f64,
    pub pc_average: RunningAverage,
    pub agnes: AgnesOptions,
    pub amse_init: AmseInit,
}

impl SelectConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            fit: FitOptions::default(),
            scaling: Scaling::default(),
            amse: SubsampleConfig::amse_default(seed),
            stars: SubsampleConfig::stars_default(seed),
            beta: 0.05,
            q: 2.0,
            pc_average: RunningAverage::default(),
            agnes: AgnesOptions::default(),
            amse_init: AmseInit::default(),
        }
    }
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: SelectMethod,
    pub result: Result<RiskCurve, SelectError>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub path: RegPath,
    pub sample_cov: SampleCov,
    pub outcomes: Vec<MethodOutcome>,
}

impl Selection {
    pub fn curve(&self, m: SelectMethod) -> Option<&RiskCurve> {
        self.outcomes.iter().find(|o| o.method == m).and_then(|o| o.result.as_ref().ok())
    }

    pub fn selected_lambda(&self, m: SelectMethod) -> Option<f64> {
        self.curve(m).and_then(|c| c.selected_lambda)
    }

    pub fn selected_graph(&self, m: SelectMethod) -> Option<&Graph> {
        self.curve(m).and_then(|c| c.selected_index).and_then(|k| self.path.graph(k))
    }

    pub fn report(&self, cfg: &SelectConfig) -> SelectionReport {
        SelectionReport {
            estimator: self.path.method(),
            n: self.sample_cov.n(),
            p: self.sample_cov.p(),
            grid: self.path.grid().values().to_vec(),
            methods: self.outcomes.iter().map(|o| MethodReport::new(o, self.path.grid(), cfg)).collect(),
        }
    }
}

/// Fits one path and evaluates every requested method on it. Per-method
/// failures are recorded in the outcome list.
pub fn select_all(
    data: DataRef<'_>,
    grid: &LambdaGrid,
    methods: &[SelectMethod],
    cfg: &SelectConfig,
) -> Result<Selection, SelectError> {
    if methods.is_empty() {
        return Err(SelectError::NoMethods);
    }
    let s = SampleCov::from_data(data.x, data.scaling)?;
    let path = fit_path(&s, grid, &cfg.fit);
    if path.failed_points() == path.len() {
        return Err(SelectError::AllPointsFailed);
    }
    let mut methods = methods.to_vec();
    methods.dedup();

    let mut agnes_curve: Option<Result<RiskCurve, SelectError>> = None;
    let mut pc_curve: Option<Result<RiskCurve, SelectError>> = None;
    let need_agnes = methods.contains(&SelectMethod::Agnes)
        || (methods.contains(&SelectMethod::Amse) && cfg.amse_init == AmseInit::Agnes);
    let need_pc = methods.contains(&SelectMethod::Pc)
        || (methods.contains(&SelectMethod::Amse) && cfg.amse_init == AmseInit::Pc);
    if need_agnes {
        agnes_curve = Some(agnes_select(&path, &cfg.agnes));
    }
    if need_pc {
        pc_curve = Some(pc_select(&path, cfg.pc_average));
    }

    let mut outcomes = Vec::new();
    for &m in &methods {
        let result = match m {
            SelectMethod::Pc => pc_curve.clone().expect("computed above"),
            SelectMethod::Agnes => agnes_curve.clone().expect("computed above"),
            SelectMethod::Amse => {
                let init = match cfg.amse_init {
                    AmseInit::Agnes => agnes_curve.as_ref().and_then(|c| c.as_ref().ok()).and_then(|c| c.selected_lambda),
                    AmseInit::Pc => pc_curve.as_ref().and_then(|c| c.as_ref().ok()).and_then(|c| c.selected_lambda),
                    AmseInit::Lambda(l) => Some(l),
                };
                match init {
                    Some(l) => amse_select(data, &path, l, &cfg.amse, cfg.q, cfg.agnes.eta),
                    None => Err(SelectError::InitNotInGrid(f64::NAN)),
                }
            }
            SelectMethod::Stars => stars_select(data, &path, &cfg.stars, cfg.beta),
            SelectMethod::Aic => ic_select(&s, &path, IcFlavor::Aic),
            SelectMethod::Bic => ic_select(&s, &path, IcFlavor::Bic),
        };
        outcomes.push(MethodOutcome { method: m, result });
    }
    Ok(Selection { path, sample_cov: s, outcomes })
}

/// Serialisable per-method record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: SelectMethod,
    pub grid: Vec<f64>,
    pub risk_values: Vec<Option<f64>>,
    pub direction: Option<Direction>,
    pub selected_lambda: Option<f64>,
    pub selected_index: Option<usize>,
    pub flags: Vec<Flag>,
    pub error: Option<String>,
    pub config: serde_json::Value,
}

impl MethodReport {
    fn new(o: &MethodOutcome, grid: &LambdaGrid, cfg: &SelectConfig) -> Self {
        let config = match o.method {
            SelectMethod::Pc => serde_json::json!({ "running_average": cfg.pc_average }),
            SelectMethod::Agnes => serde_json::to_value(cfg.agnes).unwrap_or_default(),
            SelectMethod::Amse => serde_json::json!({
                "subsample": cfg.amse, "q": cfg.q, "init": cfg.amse_init
            }),
            SelectMethod::Stars => serde_json::json!({ "subsample": cfg.stars, "beta": cfg.beta }),
            SelectMethod::Aic | SelectMethod::Bic => serde_json::json!({}),
        };
        match &o.result {
            Ok(c) => Self {
                method: o.method,
                grid: c.grid.clone(),
                risk_values: c.values.clone(),
                direction: Some(c.direction),
                selected_lambda: c.selected_lambda,
                selected_index: c.selected_index,
                flags: c.flags.clone(),
                error: None,
                config,
            },
            Err(e) => Self {
                method: o.method,
                grid: grid.values().to_vec(),
                risk_values: Vec::new(),
                direction: None,
                selected_lambda: None,
                selected_index: None,
                flags: Vec::new(),
                error: Some(e.to_string()),
                config,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub estimator: Method,
    pub n: usize,
    pub p: usize,
    pub grid: Vec<f64>,
    pub methods: Vec<MethodReport>,
}
