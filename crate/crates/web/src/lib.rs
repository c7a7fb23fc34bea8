//! Browser front end. One `Explorer` holds a simulated replicate and its
//! fitted path; the page asks it for JSON snapshots to draw.
//!
//! Only the path-based selectors run here (PC, AGNES, AIC, BIC). The
//! subsampling ones refit the path twenty times, which is too slow for a
//! page that refits on every slider release.

use netsel::agnes::{ac_coefficient, agnes_cluster_with};
use netsel::estimator::{fit_path, FitOptions, RegPath, SampleCov};
use netsel::evalharness::{argmin_largest, default_grid_sized, oracle_risks, recovery};
use netsel::netstats::{self, Graph};
use netsel::selector::{agnes_select, ic_select, pc_select, IcFlavor, RiskCurve, SelectConfig};
use netsel::simgen::{self, Replicate, SimSpec, PRESETS};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Native core of the demo; the wasm wrapper only converts errors.
pub struct Session {
    rep: Replicate,
    path: RegPath,
    curves: Vec<RiskCurve>,
    oracle: Option<usize>,
}

#[derive(Serialize)]
struct Summary<'a> {
    p: usize,
    n: usize,
    true_edges: usize,
    grid: &'a [f64],
    edges: Vec<Option<usize>>,
    geodesic_mean: Vec<Option<f64>>,
    curves: Vec<CurveView<'a>>,
    oracle_index: Option<usize>,
}

#[derive(Serialize)]
struct CurveView<'a> {
    method: &'static str,
    values: &'a [Option<f64>],
    selected_index: Option<usize>,
    tdr: Option<f64>,
    flags: Vec<String>,
}

#[derive(Serialize)]
struct GraphView {
    p: usize,
    lambda: f64,
    clusters: Vec<usize>,
    /// `[i, j, is_true_edge]`
    edges: Vec<(usize, usize, bool)>,
    missed: Vec<(usize, usize)>,
    tdr: Option<f64>,
}

#[derive(Serialize)]
struct DendrogramView {
    p: usize,
    lambda: f64,
    /// `[a, b, height]` with cluster ids as in the merge table
    merges: Vec<(usize, usize, f64)>,
    ac: Option<f64>,
}

impl Session {
    pub fn new(preset: &str, n: usize, seed: u64, grid_count: usize) -> Result<Self, String> {
        let spec = SimSpec::preset(preset, n, seed).map_err(|e| e.to_string())?;
        let rep = simgen::replicate(&spec, 0).map_err(|e| e.to_string())?;
        let grid = default_grid_sized(n, grid_count).map_err(|e| e.to_string())?;
        let cfg = SelectConfig::with_seed(seed);
        let s = SampleCov::from_data(&rep.data, cfg.scaling).map_err(|e| e.to_string())?;
        let path = fit_path(&s, &grid, &FitOptions::default());
        let mut curves = Vec::new();
        for c in [
            pc_select(&path, cfg.pc_average),
            agnes_select(&path, &cfg.agnes),
            ic_select(&s, &path, IcFlavor::Aic),
            ic_select(&s, &path, IcFlavor::Bic),
        ] {
            curves.push(c.map_err(|e| e.to_string())?);
        }
        let oracle = argmin_largest(&oracle_risks(&path, &rep.truth.graph, cfg.q, cfg.agnes.eta));
        Ok(Self { rep, path, curves, oracle })
    }

    fn graph(&self, k: usize) -> Result<&Graph, String> {
        if k >= self.path.len() {
            return Err(format!("index {k} is outside the grid of {}", self.path.len()));
        }
        self.path.graph(k).ok_or_else(|| format!("the fit at index {k} failed"))
    }

    fn tdr(&self, k: usize) -> Option<f64> {
        let g = self.path.graph(k)?;
        recovery(g, &self.rep.truth.graph).ok()?.tdr()
    }

    pub fn summary_json(&self) -> String {
        let graphs: Vec<Option<&Graph>> = (0..self.path.len()).map(|k| self.path.graph(k)).collect();
        let summary = Summary {
            p: self.rep.spec.p,
            n: self.rep.spec.n,
            true_edges: self.rep.truth.graph.edge_count(),
            grid: self.path.grid().values(),
            edges: graphs.iter().map(|g| g.map(Graph::edge_count)).collect(),
            geodesic_mean: graphs
                .iter()
                .map(|g| g.map(|g| netstats::geodesic_mean(&netstats::geodesics(g))))
                .collect(),
            curves: self
                .curves
                .iter()
                .map(|c| CurveView {
                    method: c.method.name(),
                    values: &c.values,
                    selected_index: c.selected_index,
                    tdr: c.selected_index.and_then(|k| self.tdr(k)),
                    flags: c.flags.iter().map(|f| f.label()).collect(),
                })
                .collect(),
            oracle_index: self.oracle,
        };
        serde_json::to_string(&summary).expect("summary serialises")
    }

    pub fn graph_json(&self, k: usize) -> Result<String, String> {
        let g = self.graph(k)?;
        let truth = &self.rep.truth.graph;
        let view = GraphView {
            p: g.node_count(),
            lambda: self.path.grid().values()[k],
            clusters: self.rep.truth.cluster_assignment.clone(),
            edges: g.edges().iter().map(|&(i, j)| (i, j, truth.has_edge(i, j))).collect(),
            missed: truth.edges().iter().copied().filter(|&(i, j)| !g.has_edge(i, j)).collect(),
            tdr: self.tdr(k),
        };
        Ok(serde_json::to_string(&view).expect("graph serialises"))
    }

    pub fn dendrogram_json(&self, k: usize) -> Result<String, String> {
        let g = self.graph(k)?;
        let cfg = SelectConfig::default();
        let dend = agnes_cluster_with(&netstats::dissimilarities_with(g, cfg.agnes.eta), cfg.agnes.linkage);
        let view = DendrogramView {
            p: g.node_count(),
            lambda: self.path.grid().values()[k],
            merges: dend.merges().iter().map(|m| (m.a, m.b, m.height)).collect(),
            ac: ac_coefficient(&dend).ok(),
        };
        Ok(serde_json::to_string(&view).expect("dendrogram serialises"))
    }
}

#[wasm_bindgen]
pub struct Explorer(Session);

#[wasm_bindgen]
impl Explorer {
    /// Simulates replicate 0 of `preset` and fits the default grid for `n`.
    #[wasm_bindgen(constructor)]
    pub fn new(preset: &str, n: usize, seed: u32, grid_count: usize) -> Result<Explorer, JsError> {
        Session::new(preset, n, u64::from(seed), grid_count).map(Explorer).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = summaryJson)]
    pub fn summary_json(&self) -> String {
        self.0.summary_json()
    }

    #[wasm_bindgen(js_name = graphJson)]
    pub fn graph_json(&self, k: usize) -> Result<String, JsError> {
        self.0.graph_json(k).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = dendrogramJson)]
    pub fn dendrogram_json(&self, k: usize) -> Result<String, JsError> {
        self.0.dendrogram_json(k).map_err(|e| JsError::new(&e))
    }
}

#[wasm_bindgen]
pub fn presets() -> String {
    serde_json::to_string(PRESETS).expect("names serialise")
}
