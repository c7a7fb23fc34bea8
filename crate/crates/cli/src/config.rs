//! Run configuration: an optional JSON file merged with command-line flags.
//! Flags win over the file and the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use netsel::agnes::Linkage;
use netsel::estimator::{CombineRule, LambdaGrid, Method, Scaling};
use netsel::evalharness::default_grid_sized;
use netsel::selector::{RunningAverage, SelectConfig, SelectMethod, SubsampleSize};
use serde::Deserialize;

use crate::{invalid, FitFlags, SelectFlags};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Explicit grid; takes precedence over min/max/count from the file.
    pub grid: Option<Vec<f64>>,
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_count: Option<usize>,
    pub estimator: Option<String>,
    pub scaling: Option<String>,
    pub penalize_diagonal: Option<bool>,
    pub and_rule: Option<bool>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub subsamples: Option<usize>,
    pub subsample_size: Option<usize>,
    pub stars_subsample_size: Option<usize>,
    pub beta: Option<f64>,
    pub q: Option<f64>,
    pub seed: Option<u64>,
    pub pc_backward: Option<bool>,
    pub linkage: Option<String>,
    pub preset: Option<String>,
    pub ns: Option<Vec<usize>>,
    pub replicates: Option<usize>,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| invalid!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone)]
enum GridSpec {
    /// Per-n default range with this many points.
    Default(usize),
    Explicit(LambdaGrid),
}

/// Fully resolved settings for `fit`, `select` and `report`.
#[derive(Debug, Clone)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    grid: GridSpec,
    pub methods: Vec<SelectMethod>,
    pub select: SelectConfig,
    pub preset: Option<String>,
    pub ns: Option<Vec<usize>>,
    pub replicates: Option<usize>,
}

fn parse_estimator(s: &str) -> Result<Method> {
    match s.to_ascii_lowercase().as_str() {
        "glasso" => Ok(Method::Glasso),
        "mb" => Ok(Method::Mb),
        _ => Err(invalid!("unknown estimator {s:?} (expected glasso or mb)")),
    }
}

fn parse_scaling(s: &str) -> Result<Scaling> {
    match s.to_ascii_lowercase().as_str() {
        "correlation" => Ok(Scaling::Correlation),
        "centered" | "centred" => Ok(Scaling::Centered),
        "raw" => Ok(Scaling::Raw),
        _ => Err(invalid!("unknown scaling {s:?} (expected correlation, centered or raw)")),
    }
}

fn parse_linkage(s: &str) -> Result<Linkage> {
    match s.to_ascii_lowercase().as_str() {
        "wpgma" => Ok(Linkage::Wpgma),
        "upgma" => Ok(Linkage::Upgma),
        _ => Err(invalid!("unknown linkage {s:?} (expected wpgma or upgma)")),
    }
}

pub fn parse_methods<'a>(items: impl IntoIterator<Item = &'a str>) -> Result<Vec<SelectMethod>> {
    let mut out = Vec::new();
    for item in items {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let m: SelectMethod = item.parse().map_err(|e| invalid!("{e}"))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(invalid!("no selection methods given"));
    }
    Ok(out)
}

impl Overrides {
    pub fn load(fit: &FitFlags, sel: Option<&SelectFlags>) -> Result<Self> {
        let file = match &fit.config {
            Some(p) => ConfigFile::read(p)?,
            None => ConfigFile::default(),
        };
        let default_sel = SelectFlags::default();
        let sel = sel.unwrap_or(&default_sel);

        let seed = sel.seed.or(file.seed).unwrap_or(0);
        let mut cfg = SelectConfig::with_seed(seed);
        if let Some(e) = fit.estimator.as_deref().or(file.estimator.as_deref()) {
            cfg.fit.method = parse_estimator(e)?;
        }
        if let Some(s) = fit.scaling.as_deref().or(file.scaling.as_deref()) {
            cfg.scaling = parse_scaling(s)?;
        }
        cfg.fit.glasso.penalize_diagonal = fit.penalize_diagonal || file.penalize_diagonal.unwrap_or(false);
        if fit.and_rule || file.and_rule.unwrap_or(false) {
            cfg.fit.mb.rule = CombineRule::And;
        }
        if let Some(t) = fit.tol.or(file.tol) {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid!("tol must be positive, got {t}"));
            }
            cfg.fit.glasso.tol = t;
            cfg.fit.mb.tol = t.min(cfg.fit.mb.tol);
        }
        if let Some(m) = fit.max_iter.or(file.max_iter) {
            if m == 0 {
                return Err(invalid!("max_iter must be at least 1"));
            }
            cfg.fit.glasso.max_iter = m;
        }
        if let Some(t) = sel.subsamples.or(file.subsamples) {
            cfg.amse.t = t;
            cfg.stars.t = t;
        }
        if let Some(b) = sel.beta.or(file.beta) {
            if !(b > 0.0 && b < 0.5) {
                return Err(invalid!("beta must lie in (0, 0.5), got {b}"));
            }
            cfg.beta = b;
        }
        if let Some(q) = sel.q.or(file.q) {
            if !(q > 0.0 && q.is_finite()) {
                return Err(invalid!("q must be positive, got {q}"));
            }
            cfg.q = q;
        }
        if sel.pc_backward || file.pc_backward.unwrap_or(false) {
            cfg.pc_average = RunningAverage::Backward;
        }
        if let Some(l) = sel.linkage.as_deref().or(file.linkage.as_deref()) {
            cfg.agnes.linkage = parse_linkage(l)?;
        }
        if let Some(b) = sel.subsample_size.or(file.subsample_size) {
            cfg.amse.size = SubsampleSize::Explicit(b);
        }
        if let Some(b) = sel.stars_subsample_size.or(file.stars_subsample_size) {
            cfg.stars.size = SubsampleSize::Explicit(b);
        }
        if cfg.amse.t < 2 {
            return Err(invalid!("need at least 2 subsamples, got {}", cfg.amse.t));
        }

        let methods = match (&sel.methods, &file.methods) {
            (Some(s), _) => parse_methods(s.split(','))?,
            (None, Some(v)) => parse_methods(v.iter().map(String::as_str))?,
            (None, None) => SelectMethod::ALL.to_vec(),
        };
        if cfg.fit.method == Method::Mb {
            if let Some(m) = methods.iter().find(|m| m.needs_precision()) {
                return Err(invalid!("{m} requires GLasso; use --estimator glasso or drop {}", m.name()));
            }
        }

        let flag_range = fit.grid_min.is_some() || fit.grid_max.is_some() || fit.grid_count.is_some();
        let grid = if flag_range || file.grid.is_none() {
            let min = fit.grid_min.or(file.grid_min);
            let max = fit.grid_max.or(file.grid_max);
            let count = fit.grid_count.or(file.grid_count).unwrap_or(70);
            match (min, max) {
                (Some(a), Some(b)) => GridSpec::Explicit(LambdaGrid::linspace(a, b, count).map_err(|e| invalid!("{e}"))?),
                (None, None) => {
                    // keep the per-n default range, only resized
                    default_grid_sized(100, count).map_err(|e| invalid!("{e}"))?;
                    GridSpec::Default(count)
                }
                _ => return Err(invalid!("a grid needs both --grid-min and --grid-max")),
            }
        } else {
            let v = file.grid.clone().unwrap_or_default();
            GridSpec::Explicit(LambdaGrid::new(v).map_err(|e| invalid!("{e}"))?)
        };

        Ok(Self {
            input: fit.input.clone().or(file.input),
            out: fit.out.clone().or(file.out),
            grid,
            methods,
            select: cfg,
            preset: file.preset,
            ns: file.ns,
            replicates: file.replicates,
        })
    }

    /// The configured grid, or the sample-size default.
    pub fn grid_for(&self, n: usize) -> LambdaGrid {
        match &self.grid {
            GridSpec::Explicit(g) => g.clone(),
            GridSpec::Default(c) => default_grid_sized(n, *c).expect("count checked at load"),
        }
    }

    pub fn explicit_grid(&self) -> Option<LambdaGrid> {
        match &self.grid {
            GridSpec::Explicit(g) => Some(g.clone()),
            GridSpec::Default(_) => None,
        }
    }

    /// Point count for the per-n default grid, when that grid is in use.
    pub fn default_grid_count(&self) -> Option<usize> {
        match self.grid {
            GridSpec::Default(c) => Some(c),
            GridSpec::Explicit(_) => None,
        }
    }

    /// Rejects subsample sizes that cannot work for `n` observations.
    pub fn check_sample_size(&self, n: usize) -> Result<()> {
        let uses = |m| self.methods.contains(&m);
        if uses(SelectMethod::Amse) {
            self.select.amse.validate(n).map_err(|e| invalid!("A-MSE: {e}"))?;
        }
        if uses(SelectMethod::Stars) {
            self.select.stars.validate(n).map_err(|e| invalid!("StARS: {e}"))?;
        }
        Ok(())
    }

    pub fn input(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| invalid!("--input is required"))
    }

    pub fn out(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| invalid!("--out is required"))
    }
}
