//! ℓ1-penalised precision matrix estimation.
//!
//! Two estimators share one covariance-form lasso kernel:
//!
//! * graphical lasso, solved by block coordinate descent over the columns of
//!   the working covariance `W` (each block update is a lasso in `beta`);
//! * Meinshausen–Bühlmann neighbourhood selection, one lasso regression per
//!   node on the correlation matrix, neighbourhoods combined by the OR (or
//!   AND) rule.
//!
//! Paths are fitted from the largest to the smallest penalty with warm starts.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netstats::Graph;

/// Off-diagonal entries with `|omega_ij|` above this count as edges.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("sample covariance is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("negative diagonal entry at {0}")]
    NegativeDiagonal(usize),
    #[error("need at least {min} {what}, got {got}")]
    TooSmall { what: &'static str, min: usize, got: usize },
    #[error("lambda must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error("lambda = 0 requires a nonsingular sample covariance")]
    SingularInput,
    #[error("variable {0} has zero variance; its diagonal is unpenalised and the fit is undefined")]
    ZeroVariance(usize),
    #[error("did not converge after {iterations} sweeps (dual gap {dual_gap:.3e})")]
    NonConvergence { iterations: usize, dual_gap: f64 },
    #[error("invalid lambda grid: {0}")]
    InvalidGrid(String),
    #[error("data has {0} rows and {1} columns; dimensions do not match")]
    DimensionMismatch(usize, usize),
    #[error("precision estimate is not positive definite")]
    NotPositiveDefinite,
}

/// How raw data is turned into the second-moment matrix `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Centre and scale every column to unit variance; `S` is the sample
    /// correlation matrix. Constant columns get a unit diagonal and no
    /// off-diagonal covariance.
    #[default]
    Correlation,
    /// Centre columns; `S = n^-1 X'X`.
    Centered,
    /// Use the data as given (assumed mean zero); `S = n^-1 X'X`.
    Raw,
}

/// Empirical second-moment matrix with its sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCov {
    s: DMatrix<f64>,
    n: usize,
}

impl SampleCov {
    pub fn new(s: DMatrix<f64>, n: usize) -> Result<Self, EstimatorError> {
        let p = s.nrows();
        if s.ncols() != p {
            return Err(EstimatorError::DimensionMismatch(p, s.ncols()));
        }
        if p < 2 {
            return Err(EstimatorError::TooSmall { what: "variables", min: 2, got: p });
        }
        if n < 2 {
            return Err(EstimatorError::TooSmall { what: "samples", min: 2, got: n });
        }
        for i in 0..p {
            if !(s[(i, i)] >= 0.0) {
                return Err(EstimatorError::NegativeDiagonal(i));
            }
            for j in 0..i {
                if (s[(i, j)] - s[(j, i)]).abs() > 1e-12 {
                    return Err(EstimatorError::Asymmetric(i, j));
                }
            }
        }
        // exact symmetry from here on
        let s = (&s + s.transpose()) * 0.5;
        Ok(Self { s, n })
    }

    /// `x` is `n x p`, one observation per row.
    pub fn from_data(x: &DMatrix<f64>, scaling: Scaling) -> Result<Self, EstimatorError> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(EstimatorError::TooSmall { what: "samples", min: 2, got: n });
        }
        let z = standardize(x, scaling);
        let mut s = z.transpose() * &z / n as f64;
        if scaling == Scaling::Correlation {
            for i in 0..p {
                s[(i, i)] = 1.0;
            }
        }
        Self::new(s, n)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.s.nrows()
    }

    /// `max_{i != j} |S_ij|`, the smallest penalty giving a diagonal estimate.
    pub fn lambda_max(&self) -> f64 {
        let p = self.p();
        let mut m: f64 = 0.0;
        for j in 0..p {
            for i in 0..j {
                m = m.max(self.s[(i, j)].abs());
            }
        }
        m
    }

    /// Correlation matrix implied by `S` (zero-variance variables isolated).
    pub fn correlation(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                return 1.0;
            }
            let v = self.s[(i, i)] * self.s[(j, j)];
            if v > 0.0 { self.s[(i, j)] / v.sqrt() } else { 0.0 }
        })
    }

    /// Symmetric relabelling `P S P'` where variable `i` moves to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.p();
        let mut s = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                s[(perm[i], perm[j])] = self.s[(i, j)];
            }
        }
        Self { s, n: self.n }
    }
}

/// Column-wise centring (and scaling) according to `scaling`.
pub fn standardize(x: &DMatrix<f64>, scaling: Scaling) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut z = x.clone();
    if scaling == Scaling::Raw {
        return z;
    }
    for j in 0..p {
        let mut col = z.column_mut(j);
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        if scaling == Scaling::Correlation {
            let sd = (col.norm_squared() / n as f64).sqrt();
            if sd > 0.0 {
                col /= sd;
            } else {
                col.fill(0.0);
            }
        }
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlassoOptions {
    /// Relative change in `W` between sweeps, and KKT residual, at convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub penalize_diagonal: bool,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_iter: 200, penalize_diagonal: false, inner_tol: 1e-9, inner_max_iter: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    omega: DMatrix<f64>,
    // working covariance and per-column lasso coefficients, kept for warm starts
    w: DMatrix<f64>,
    beta: DMatrix<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    pub dual_gap: f64,
    pub kkt_residual: f64,
}

impl PrecisionEstimate {
    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn graph(&self) -> Graph {
        Graph::from_support(&self.omega, SUPPORT_THRESHOLD)
    }

    /// Turns a flagged non-converged estimate into an error.
    pub fn into_converged(self) -> Result<Self, EstimatorError> {
        if self.converged {
            Ok(self)
        } else {
            Err(EstimatorError::NonConvergence { iterations: self.iterations, dual_gap: self.dual_gap })
        }
    }
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Coordinate descent for `min 1/2 b' G b - r' b + lambda |b|_1` where `G`
/// is `gram` with row/column `skip` removed and `r` is column `skip` of
/// `rhs`. Works in the full index space; `beta[skip]` stays 0. Returns the
/// number of passes.
fn lasso_cd(
    gram: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    skip: usize,
    lambda: f64,
    beta: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> usize {
    let p = gram.nrows();
    // gb = G * beta, maintained incrementally
    let mut gb = vec![0.0; p];
    for (l, &b) in beta.iter().enumerate() {
        if b != 0.0 && l != skip {
            let col = gram.column(l);
            for (k, g) in gb.iter_mut().enumerate() {
                *g += col[k] * b;
            }
        }
    }
    let mut passes = 0;
    while passes < max_iter {
        passes += 1;
        let mut max_delta: f64 = 0.0;
        for k in 0..p {
            if k == skip {
                continue;
            }
            let gkk = gram[(k, k)];
            if gkk <= 0.0 {
                continue;
            }
            let old = beta[k];
            let r = rhs[(k, skip)] - (gb[k] - gkk * old);
            let new = soft_threshold(r, lambda) / gkk;
            if new != old {
                let delta = new - old;
                beta[k] = new;
                let col = gram.column(k);
                for (l, g) in gb.iter_mut().enumerate() {
                    *g += col[l] * delta;
                }
                max_delta = max_delta.max(delta.abs() * gkk.sqrt());
            }
        }
        if max_delta <= tol {
            break;
        }
    }
    passes
}

fn diagonal_estimate(s: &SampleCov, lambda: f64, penalize_diagonal: bool) -> PrecisionEstimate {
    let p = s.p();
    let shift = if penalize_diagonal { lambda } else { 0.0 };
    let w = DMatrix::from_fn(p, p, |i, j| if i == j { s.s[(i, i)] + shift } else { 0.0 });
    let omega = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / w[(i, i)] } else { 0.0 });
    PrecisionEstimate {
        omega,
        w,
        beta: DMatrix::zeros(p, p),
        lambda,
        converged: true,
        iterations: 0,
        dual_gap: 0.0,
        kkt_residual: 0.0,
    }
}

/// Largest violation of the optimality conditions, evaluated at `W = omega^-1`.
///
/// Off the diagonal: `|W_ij - S_ij - lambda sign(omega_ij)|` on the support
/// and `max(0, |W_ij - S_ij| - lambda)` off it. On the diagonal the penalty
/// term is present only when the diagonal is penalised.
pub fn kkt_residual(
    s: &SampleCov,
    omega: &DMatrix<f64>,
    lambda: f64,
    penalize_diagonal: bool,
) -> Result<f64, EstimatorError> {
    let p = s.p();
    let chol = omega.clone().cholesky().ok_or(EstimatorError::NotPositiveDefinite)?;
    let w = chol.inverse();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        for i in 0..p {
            let diff = w[(i, j)] - s.s[(i, j)];
            let r = if i == j {
                (diff - if penalize_diagonal { lambda } else { 0.0 }).abs()
            } else if omega[(i, j)].abs() > SUPPORT_THRESHOLD {
                (diff - lambda * omega[(i, j)].signum()).abs()
            } else {
                (diff.abs() - lambda).max(0.0)
            };
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

fn duality_gap(s: &SampleCov, omega: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> f64 {
    let p = s.p();
    let mut tr = 0.0;
    let mut l1 = 0.0;
    for j in 0..p {
        for i in 0..p {
            tr += s.s[(i, j)] * omega[(i, j)];
            if i != j || penalize_diagonal {
                l1 += omega[(i, j)].abs();
            }
        }
    }
    (tr - p as f64 + lambda * l1).abs()
}

/// Graphical lasso by block coordinate descent.
///
/// A non-converged fit is returned with `converged = false` rather than as
/// an error; use [`PrecisionEstimate::into_converged`] to be strict.
pub fn glasso_fit(
    s: &SampleCov,
    lambda: f64,
    warm_start: Option<&PrecisionEstimate>,
    opts: &GlassoOptions,
) -> Result<PrecisionEstimate, EstimatorError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(EstimatorError::InvalidLambda(lambda));
    }
    let p = s.p();
    if lambda == 0.0 && s.s.clone().cholesky().is_none() {
        return Err(EstimatorError::SingularInput);
    }
    if !opts.penalize_diagonal || lambda == 0.0 {
        if let Some(i) = (0..p).find(|&i| s.s[(i, i)] <= 0.0) {
            return Err(EstimatorError::ZeroVariance(i));
        }
    }
    if lambda >= s.lambda_max() {
        return Ok(diagonal_estimate(s, lambda, opts.penalize_diagonal));
    }

    let shift = if opts.penalize_diagonal { lambda } else { 0.0 };
    let (mut w, mut beta) = match warm_start {
        Some(ws) if ws.w.nrows() == p => (ws.w.clone(), ws.beta.clone()),
        _ => (s.s.clone(), DMatrix::zeros(p, p)),
    };
    for i in 0..p {
        w[(i, i)] = s.s[(i, i)] + shift;
    }

    let scale = {
        let mut acc = 0.0;
        for j in 0..p {
            for i in 0..p {
                if i != j {
                    acc += s.s[(i, j)].abs();
                }
            }
        }
        (acc / (p * (p - 1)) as f64).max(f64::MIN_POSITIVE)
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut omega = DMatrix::zeros(p, p);
    let mut gap = f64::INFINITY;
    let mut kkt = f64::INFINITY;
    let mut col = vec![0.0; p];
    while iterations < opts.max_iter {
        iterations += 1;
        let mut change = 0.0;
        for j in 0..p {
            col.copy_from_slice(beta.column(j).as_slice());
            lasso_cd(&w, &s.s, j, lambda, &mut col, opts.inner_tol, opts.inner_max_iter);
            beta.column_mut(j).copy_from_slice(&col);
            // w12 = W11 * beta
            for k in 0..p {
                if k == j {
                    continue;
                }
                let mut v = 0.0;
                for (l, &b) in col.iter().enumerate() {
                    if b != 0.0 {
                        v += w[(k, l)] * b;
                    }
                }
                change += (v - w[(k, j)]).abs();
                w[(k, j)] = v;
                w[(j, k)] = v;
            }
        }
        let rel = change / ((p * (p - 1)) as f64 * scale);
        if rel <= opts.tol {
            omega = precision_from_blocks(&w, &beta);
            gap = duality_gap(s, &omega, lambda, opts.penalize_diagonal);
            kkt = kkt_residual(s, &omega, lambda, opts.penalize_diagonal).unwrap_or(f64::INFINITY);
            if kkt <= opts.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        omega = precision_from_blocks(&w, &beta);
        gap = duality_gap(s, &omega, lambda, opts.penalize_diagonal);
        kkt = kkt_residual(s, &omega, lambda, opts.penalize_diagonal).unwrap_or(f64::INFINITY);
    }
    Ok(PrecisionEstimate { omega, w, beta, lambda, converged, iterations, dual_gap: gap, kkt_residual: kkt })
}

/// `omega_jj = 1 / (W_jj - w12' beta)`, `omega_12 = -beta omega_jj`, then symmetrised.
fn precision_from_blocks(w: &DMatrix<f64>, beta: &DMatrix<f64>) -> DMatrix<f64> {
    let p = w.nrows();
    let mut omega = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut dot = 0.0;
        for k in 0..p {
            if k != j {
                dot += w[(k, j)] * beta[(k, j)];
            }
        }
        let ojj = 1.0 / (w[(j, j)] - dot);
        omega[(j, j)] = ojj;
        for k in 0..p {
            if k != j {
                omega[(k, j)] = -beta[(k, j)] * ojj;
            }
        }
    }
    for j in 0..p {
        for i in 0..j {
            let a = omega[(i, j)];
            let b = omega[(j, i)];
            // an entry is zero only when both block solutions agree it is
            let v = if a == 0.0 && b == 0.0 { 0.0 } else { 0.5 * (a + b) };
            omega[(i, j)] = v;
            omega[(j, i)] = v;
        }
    }
    omega
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineRule {
    /// Edge if either regression selects it.
    #[default]
    Or,
    /// Edge only if both regressions select it.
    And,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbOptions {
    pub rule: CombineRule,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MbOptions {
    fn default() -> Self {
        Self { rule: CombineRule::Or, tol: 1e-6, max_iter: 1000 }
    }
}

/// Neighbourhood selection from a correlation matrix. Zero-variance
/// variables (zero row in `corr`) end up isolated.
fn mb_from_correlation(corr: &DMatrix<f64>, lambda: f64, opts: &MbOptions) -> Graph {
    let p = corr.nrows();
    let betas = crate::par::map_range(p, |j| {
        let mut beta = vec![0.0; p];
        lasso_cd(corr, corr, j, lambda, &mut beta, opts.tol, opts.max_iter);
        beta
    });
    combine_neighbourhoods(p, &betas, opts.rule)
}

fn combine_neighbourhoods(p: usize, betas: &[Vec<f64>], rule: CombineRule) -> Graph {
    let mut edges = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            let a = betas[j][i] != 0.0;
            let b = betas[i][j] != 0.0;
            let keep = match rule {
                CombineRule::Or => a || b,
                CombineRule::And => a && b,
            };
            if keep {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(p, edges).expect("valid edges")
}

/// Meinshausen–Bühlmann neighbourhood selection on an `n x p` data matrix.
/// Returns adjacency only.
pub fn mb_fit(x: &DMatrix<f64>, lambda: f64, opts: &MbOptions) -> Result<Graph, EstimatorError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(EstimatorError::InvalidLambda(lambda));
    }
    let s = SampleCov::from_data(x, Scaling::Correlation)?;
    Ok(mb_from_correlation(&s.correlation(), lambda, opts))
}

/// Strictly increasing, equally spaced penalty values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, EstimatorError> {
        if values.len() < 2 {
            return Err(EstimatorError::InvalidGrid(format!("need at least 2 points, got {}", values.len())));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(EstimatorError::InvalidGrid("values must be finite and nonnegative".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EstimatorError::InvalidGrid("values must be strictly increasing".into()));
        }
        let h = values[1] - values[0];
        if let Some(w) = values.windows(2).find(|w| ((w[1] - w[0]) - h).abs() > 1e-12) {
            return Err(EstimatorError::InvalidGrid(format!(
                "spacing {} differs from {h}",
                w[1] - w[0]
            )));
        }
        Ok(Self { values })
    }

    /// `count` equidistant points from `min` to `max` inclusive.
    pub fn linspace(min: f64, max: f64, count: usize) -> Result<Self, EstimatorError> {
        if count < 2 {
            return Err(EstimatorError::InvalidGrid(format!("need at least 2 points, got {count}")));
        }
        if !(min < max) {
            return Err(EstimatorError::InvalidGrid(format!("need min < max, got {min} and {max}")));
        }
        let h = (max - min) / (count - 1) as f64;
        let mut values: Vec<f64> = (0..count).map(|k| min + h * k as f64).collect();
        values[count - 1] = max;
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.values[1] - self.values[0]
    }

    pub fn index_of(&self, lambda: f64) -> Option<usize> {
        self.values.iter().position(|&v| (v - lambda).abs() <= 1e-12)
    }
}

impl TryFrom<Vec<f64>> for LambdaGrid {
    type Error = EstimatorError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LambdaGrid> for Vec<f64> {
    fn from(g: LambdaGrid) -> Self {
        g.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Glasso,
    Mb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FitOptions {
    pub method: Method,
    pub glasso: GlassoOptions,
    pub mb: MbOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub graph: Graph,
    /// Present for graphical lasso fits only.
    pub precision: Option<PrecisionEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub outcome: Result<Estimate, EstimatorError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegPath {
    grid: LambdaGrid,
    points: Vec<PathPoint>,
    options: FitOptions,
}

impl RegPath {
    pub fn grid(&self) -> &LambdaGrid {
        &self.grid
    }

    pub fn points(&self) -> &[PathPoint] {
        &self.points
    }

    pub fn options(&self) -> &FitOptions {
        &self.options
    }

    pub fn method(&self) -> Method {
        self.options.method
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn graph(&self, k: usize) -> Option<&Graph> {
        self.points[k].outcome.as_ref().ok().map(|e| &e.graph)
    }

    pub fn precision(&self, k: usize) -> Option<&PrecisionEstimate> {
        self.points[k].outcome.as_ref().ok().and_then(|e| e.precision.as_ref())
    }

    /// Graphs per grid point (`None` where the fit failed).
    pub fn graphs(&self) -> Vec<Option<Graph>> {
        (0..self.len()).map(|k| self.graph(k).cloned()).collect()
    }

    pub fn failed_points(&self) -> usize {
        self.points.iter().filter(|p| p.outcome.is_err()).count()
    }

    /// Path assembled from precomputed graphs (adjacency only).
    pub fn from_graphs(grid: LambdaGrid, graphs: Vec<Graph>) -> Result<Self, EstimatorError> {
        if graphs.len() != grid.len() {
            return Err(EstimatorError::InvalidGrid(format!(
                "{} graphs for {} grid points",
                graphs.len(),
                grid.len()
            )));
        }
        let points = grid
            .values()
            .iter()
            .zip(graphs)
            .map(|(&lambda, graph)| PathPoint { lambda, outcome: Ok(Estimate { graph, precision: None }) })
            .collect();
        Ok(Self { grid, points, options: FitOptions { method: Method::Mb, ..Default::default() } })
    }
}

/// Fits every grid point, largest penalty first, warm-starting each fit
/// from the previous one. Per-point failures are recorded, not raised.
pub fn fit_path(s: &SampleCov, grid: &LambdaGrid, opts: &FitOptions) -> RegPath {
    let m = grid.len();
    let mut points: Vec<Option<PathPoint>> = vec![None; m];
    match opts.method {
        Method::Glasso => {
            let mut warm: Option<PrecisionEstimate> = None;
            for k in (0..m).rev() {
                let lambda = grid.values()[k];
                let outcome = glasso_fit(s, lambda, warm.as_ref(), &opts.glasso).map(|est| {
                    warm = Some(est.clone());
                    Estimate { graph: est.graph(), precision: Some(est) }
                });
                points[k] = Some(PathPoint { lambda, outcome });
            }
        }
        Method::Mb => {
            let corr = s.correlation();
            let p = s.p();
            // one warm-started lasso path per node, nodes in parallel
            let per_node: Vec<Vec<Vec<f64>>> = crate::par::map_range(p, |j| {
                let mut beta = vec![0.0; p];
                let mut out = vec![Vec::new(); m];
                for k in (0..m).rev() {
                    lasso_cd(&corr, &corr, j, grid.values()[k], &mut beta, opts.mb.tol, opts.mb.max_iter);
                    out[k] = beta.clone();
                }
                out
            });
            for k in 0..m {
                let betas: Vec<Vec<f64>> = per_node.iter().map(|node| node[k].clone()).collect();
                let graph = combine_neighbourhoods(p, &betas, opts.mb.rule);
                points[k] = Some(PathPoint {
                    lambda: grid.values()[k],
                    outcome: Ok(Estimate { graph, precision: None }),
                });
            }
        }
    }
    RegPath { grid: grid.clone(), points: points.into_iter().map(Option::unwrap).collect(), options: *opts }
}

/// Convenience: `S` from data with the given scaling, then [`fit_path`].
pub fn fit_path_data(
    x: &DMatrix<f64>,
    scaling: Scaling,
    grid: &LambdaGrid,
    opts: &FitOptions,
) -> Result<RegPath, EstimatorError> {
    let s = SampleCov::from_data(x, scaling)?;
    Ok(fit_path(&s, grid, opts))
}

/// JSON metadata for a fitted path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathMetadata {
    pub method: Method,
    pub grid: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub penalize_diagonal: bool,
    pub points: Vec<PointMetadata>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointMetadata {
    pub lambda: f64,
    pub edges: Option<usize>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub dual_gap: Option<f64>,
    pub error: Option<String>,
}

impl RegPath {
    pub fn metadata(&self) -> PathMetadata {
        let (tol, max_iter) = match self.options.method {
            Method::Glasso => (self.options.glasso.tol, self.options.glasso.max_iter),
            Method::Mb => (self.options.mb.tol, self.options.mb.max_iter),
        };
        PathMetadata {
            method: self.options.method,
            grid: self.grid.values().to_vec(),
            tol,
            max_iter,
            penalize_diagonal: self.options.glasso.penalize_diagonal,
            points: self
                .points
                .iter()
                .map(|pt| match &pt.outcome {
                    Ok(e) => PointMetadata {
                        lambda: pt.lambda,
                        edges: Some(e.graph.edge_count()),
                        converged: e.precision.as_ref().map(|p| p.converged),
                        iterations: e.precision.as_ref().map(|p| p.iterations),
                        dual_gap: e.precision.as_ref().map(|p| p.dual_gap),
                        error: None,
                    },
                    Err(err) => PointMetadata {
                        lambda: pt.lambda,
                        edges: None,
                        converged: None,
                        iterations: None,
                        dual_gap: None,
                        error: Some(err.to_string()),
                    },
                })
                .collect(),
        }
    }
}
