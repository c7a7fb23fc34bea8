use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use nalgebra::DMatrix;
use netsel::estimator::{fit_path, Method, SampleCov};
use netsel::evalharness::{
    all_tables, records_to_jsonl, run_scenario, score_selection, EvalError, MethodRecord, ReplicateRecord, Scenario,
};
use netsel::io::{self, write_atomic};
use netsel::netstats::{Graph, NetworkStats};
use netsel::selector::{select_all, DataRef, SelectError, SelectMethod, SelectionReport};
use netsel::simgen::{self, GroundTruth, SimError, SimSpec};
use serde::{Deserialize, Serialize};

use crate::config::{parse_methods, Overrides};
use crate::{invalid, EvalArgs, ReportArgs, SimulateArgs};

const TRUTH_FILES: [&str; 4] = ["edges.tsv", "precision.tsv", "clusters.tsv", "data.csv"];

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    preset: Option<String>,
    spec: SimSpec,
    replicates: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    index: usize,
    seed: u64,
    dir: String,
    n: usize,
    p: usize,
    true_edges: usize,
    shift: f64,
    files: Vec<String>,
}

/// A selection report plus the selected estimates, as written by `select`.
#[derive(Debug, Serialize, Deserialize)]
struct SelectOutput {
    #[serde(flatten)]
    report: SelectionReport,
    selected: Vec<SelectedEstimate>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectedEstimate {
    method: SelectMethod,
    lambda: f64,
    index: usize,
    edges: Vec<(usize, usize)>,
    /// Nonzero upper triangle of the precision matrix (GLasso only).
    precision: Option<Vec<(usize, usize, f64)>>,
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn sim_error(e: SimError) -> anyhow::Error {
    match e {
        SimError::InfeasibleDegreeSequence { .. } | SimError::NotPositiveDefinite => anyhow!(e),
        _ => invalid!("{e}"),
    }
}

fn select_error(e: SelectError) -> anyhow::Error {
    match e {
        SelectError::AllPointsFailed => anyhow!(e),
        _ => invalid!("{e}"),
    }
}

fn eval_error(e: EvalError) -> anyhow::Error {
    match e {
        EvalError::Sim(s) => sim_error(s),
        EvalError::Select(s) => select_error(s),
        other => anyhow!(other),
    }
}

/// Records written files so a failed run can remove its partial output.
#[derive(Default)]
struct Written {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Written {
    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        if let Some(d) = path.parent() {
            if !d.exists() {
                fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
                self.dirs.push(d.to_path_buf());
            }
        }
        write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn rollback(self) {
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

fn guarded(f: impl FnOnce(&mut Written) -> Result<()>) -> Result<()> {
    let mut w = Written::default();
    match f(&mut w) {
        Ok(()) => Ok(()),
        Err(e) => {
            w.rollback();
            Err(e)
        }
    }
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let (mut spec, preset) = match (&a.preset, &a.spec) {
        (Some(name), None) => {
            (SimSpec::preset(name, a.n.unwrap_or(100), a.seed.unwrap_or(0)).map_err(sim_error)?, Some(name.clone()))
        }
        (None, Some(path)) => {
            let text = io::read_text(path)?;
            let spec: SimSpec = serde_json::from_str(&text).map_err(|e| invalid!("{}: {e}", path.display()))?;
            (spec, None)
        }
        _ => return Err(invalid!("give exactly one of --preset or --spec")),
    };
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.validate().map_err(sim_error)?;
    if a.replicates == 0 {
        return Err(invalid!("--replicates must be at least 1"));
    }

    guarded(|w| {
        let mut entries = Vec::new();
        for r in 0..a.replicates {
            let rep = simgen::replicate(&spec, r as u64).map_err(sim_error)?;
            let dir = format!("rep_{r:03}");
            let base = a.out.join(&dir);
            let omega = &rep.truth.omega;
            w.write(base.join(TRUTH_FILES[0]), io::edges_to_tsv(&rep.truth.graph, Some(omega)).as_bytes())?;
            w.write(base.join(TRUTH_FILES[1]), io::matrix_to_tsv(omega).as_bytes())?;
            w.write(base.join(TRUTH_FILES[2]), io::clusters_to_tsv(&rep.truth.cluster_assignment).as_bytes())?;
            w.write(base.join(TRUTH_FILES[3]), io::data_to_csv(&rep.data, None).as_bytes())?;
            entries.push(ManifestEntry {
                index: r,
                seed: rep.spec.seed,
                dir: dir.clone(),
                n: rep.spec.n,
                p: rep.spec.p,
                true_edges: rep.truth.graph.edge_count(),
                shift: rep.truth.delta,
                files: TRUTH_FILES.iter().map(|f| format!("{dir}/{f}")).collect(),
            });
            println!("{dir}: p={} n={} edges={}", rep.spec.p, rep.spec.n, rep.truth.graph.edge_count());
        }
        w.write(a.out.join("spec.json"), &to_json(&spec)?)?;
        let manifest = Manifest { preset: preset.clone(), spec: spec.clone(), replicates: entries };
        w.write(a.out.join("manifest.json"), &to_json(&manifest)?)?;
        Ok(())
    })
}

fn load_data(o: &Overrides) -> Result<DMatrix<f64>> {
    let table = io::read_data(o.input()?).map_err(|e| invalid!("{e}"))?;
    let (n, p) = table.x.shape();
    if n < 2 || p < 2 {
        return Err(invalid!("data must have at least 2 rows and 2 columns, got {n} x {p}"));
    }
    Ok(table.x)
}

fn netstats_jsonl(path: &netsel::estimator::RegPath) -> String {
    let mut out = String::new();
    for (k, &l) in path.grid().values().iter().enumerate() {
        if let Some(g) = path.graph(k) {
            out.push_str(&serde_json::to_string(&NetworkStats::compute(l, g)).expect("serialisable"));
            out.push('\n');
        }
    }
    out
}

pub fn fit(o: &Overrides) -> Result<()> {
    let x = load_data(o)?;
    let out = o.out()?.to_path_buf();
    let grid = o.grid_for(x.nrows());
    let s = SampleCov::from_data(&x, o.select.scaling).map_err(|e| invalid!("{e}"))?;
    let path = fit_path(&s, &grid, &o.select.fit);
    if path.failed_points() == path.len() {
        let first = path.points().first().and_then(|p| p.outcome.as_ref().err()).map(|e| e.to_string());
        return Err(anyhow!("every grid point failed to fit: {}", first.unwrap_or_default()));
    }
    guarded(|w| {
        for k in 0..path.len() {
            if let Some(g) = path.graph(k) {
                let values = path.precision(k).map(|e| e.omega());
                w.write(out.join("path").join(format!("lambda_{k:03}.tsv")), io::edges_to_tsv(g, values).as_bytes())?;
            }
        }
        w.write(out.join("path.json"), &to_json(&path.metadata())?)?;
        w.write(out.join("netstats.jsonl"), netstats_jsonl(&path).as_bytes())?;
        Ok(())
    })?;
    println!(
        "fitted {} grid points ({} failed) on n={} p={}",
        path.len(),
        path.failed_points(),
        s.n(),
        s.p()
    );
    Ok(())
}

fn upper_triangle(m: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let p = m.nrows();
    let mut out = Vec::new();
    for i in 0..p {
        for j in i..p {
            if m[(i, j)] != 0.0 {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

pub fn select(o: &Overrides) -> Result<()> {
    let x = load_data(o)?;
    let out = o.out()?.to_path_buf();
    o.check_sample_size(x.nrows())?;
    let grid = o.grid_for(x.nrows());
    let data = DataRef { x: &x, scaling: o.select.scaling };
    let sel = select_all(data, &grid, &o.methods, &o.select).map_err(select_error)?;
    let report = sel.report(&o.select);

    let mut selected = Vec::new();
    for m in &report.methods {
        let (Some(k), Some(l)) = (m.selected_index, m.selected_lambda) else { continue };
        let Some(g) = sel.path.graph(k) else { continue };
        let precision = sel.path.precision(k).map(|e| upper_triangle(e.omega()));
        selected.push(SelectedEstimate { method: m.method, lambda: l, index: k, edges: g.edges(), precision });
    }
    for m in &report.methods {
        match (&m.error, m.selected_lambda) {
            (Some(e), _) => println!("{:<6} error: {e}", m.method.to_string()),
            (None, Some(l)) => {
                let edges = m.selected_index.and_then(|k| sel.path.graph(k)).map_or(0, Graph::edge_count);
                let flags: Vec<String> = m.flags.iter().map(|f| f.label()).collect();
                let flags = if flags.is_empty() { String::new() } else { format!(" [{}]", flags.join(", ")) };
                println!("{:<6} lambda={l:.4} edges={edges}{flags}", m.method.to_string());
            }
            (None, None) => println!("{:<6} no selection", m.method.to_string()),
        }
    }
    let doc = SelectOutput { report, selected };
    guarded(|w| {
        w.write(out.join("report.json"), &to_json(&doc)?)?;
        w.write(out.join("netstats.jsonl"), netstats_jsonl(&sel.path).as_bytes())?;
        Ok(())
    })
}

fn read_manifest(truth: &Path) -> Result<(Manifest, usize)> {
    let dir = truth.parent().ok_or_else(|| invalid!("{}: not a replicate directory", truth.display()))?;
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path)
        .map_err(|_| invalid!("{}: no manifest.json next to the replicate; create it with `netsel simulate`", truth.display()))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| invalid!("{}: {e}", path.display()))?;
    let name = truth.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let idx = m
        .replicates
        .iter()
        .position(|e| e.dir == name)
        .ok_or_else(|| invalid!("{}: not listed in {}", truth.display(), path.display()))?;
    Ok((m, idx))
}

fn read_truth(dir: &Path) -> Result<GroundTruth> {
    let file = |f: &str| -> Result<(String, String)> {
        let p = dir.join(f);
        let text = io::read_text(&p).map_err(|e| invalid!("{e}"))?;
        Ok((text, p.display().to_string()))
    };
    let (ptext, plabel) = file("precision.tsv")?;
    // The diagonal is always stored, so the largest index fixes p.
    let p = ptext
        .lines()
        .skip(1)
        .filter_map(|l| l.split('\t').next().and_then(|s| s.parse::<usize>().ok()))
        .max()
        .map_or(0, |m| m + 1);
    let omega = io::parse_matrix(&ptext, p, &plabel).map_err(|e| invalid!("{e}"))?;
    let (etext, elabel) = file("edges.tsv")?;
    let graph = io::parse_edges(&etext, p, &elabel).map_err(|e| invalid!("{e}"))?;
    Ok(GroundTruth { graph, omega, delta: 0.0, cluster_assignment: vec![0; p] })
}

pub fn eval(a: EvalArgs) -> Result<()> {
    if a.report.len() != a.truth.len() {
        return Err(invalid!("{} --report but {} --truth; pass them in pairs", a.report.len(), a.truth.len()));
    }
    let mut records = Vec::new();
    for (rp, tp) in a.report.iter().zip(&a.truth) {
        let text = io::read_text(rp).map_err(|e| invalid!("{e}"))?;
        let doc: SelectOutput = serde_json::from_str(&text).map_err(|e| invalid!("{}: {e}", rp.display()))?;
        let truth = read_truth(tp)?;
        let (manifest, idx) = read_manifest(tp)?;
        let p = truth.omega.nrows();
        if p != doc.report.p {
            return Err(invalid!(
                "dimension mismatch: {} has p = {} but {} has p = {p}",
                rp.display(),
                doc.report.p,
                tp.display()
            ));
        }
        let mut methods: Vec<MethodRecord> = Vec::new();
        for m in &doc.report.methods {
            let sel = doc.selected.iter().find(|s| s.method == m.method);
            let mut rec = match sel {
                Some(s) => {
                    let g = Graph::from_edges(p, s.edges.iter().copied()).map_err(|e| invalid!("{}: {e}", rp.display()))?;
                    let omega = s.precision.as_ref().map(|t| {
                        let mut o = DMatrix::zeros(p, p);
                        for &(i, j, v) in t {
                            o[(i, j)] = v;
                            o[(j, i)] = v;
                        }
                        o
                    });
                    score_selection(m.method, Some(s.lambda), Some(&g), omega.as_ref(), &truth)
                }
                None => score_selection(m.method, None, None, None, &truth),
            };
            rec.flags = m.flags.iter().map(|f| f.label()).collect();
            rec.error = m.error.clone();
            methods.push(rec);
        }
        let entry = &manifest.replicates[idx];
        records.push(ReplicateRecord {
            preset: manifest.preset.clone().unwrap_or_else(|| "custom".into()),
            p,
            topology: manifest.spec.topology,
            n: doc.report.n,
            replicate: entry.index,
            seed: entry.seed,
            true_edges: truth.graph.edge_count(),
            oracle_lambda: None,
            methods,
        });
    }
    write_results(&a.out, &records)?;
    print_summary(&records);
    Ok(())
}

fn write_results(out: &Path, records: &[ReplicateRecord]) -> Result<()> {
    guarded(|w| {
        w.write(out.join("records.jsonl"), records_to_jsonl(records).as_bytes())?;
        w.write(out.join("recovery.csv"), recovery_csv(records).as_bytes())?;
        for (name, table) in all_tables(records) {
            w.write(out.join("tables").join(name), table.as_bytes())?;
        }
        Ok(())
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), io::fmt_f64)
}

fn recovery_csv(records: &[ReplicateRecord]) -> String {
    let mut out = String::from("preset,n,replicate,method,lambda,edges,tp,fp,fn,tn,tdr,precision_mse,dissim_mse\n");
    for r in records {
        for m in &r.methods {
            let (tp, fp, fne, tn) = m.recovery.map_or(
                ("NA".into(), "NA".into(), "NA".into(), "NA".into()),
                |s| (s.tp.to_string(), s.fp.to_string(), s.fn_.to_string(), s.tn.to_string()),
            );
            out.push_str(&format!(
                "{},{},{},{},{},{},{tp},{fp},{fne},{tn},{},{},{}\n",
                r.preset,
                r.n,
                r.replicate,
                m.method.name(),
                opt(m.lambda),
                m.edges.map_or_else(|| "NA".into(), |e| e.to_string()),
                opt(m.tdr),
                opt(m.precision_mse),
                opt(m.dissim_mse),
            ));
        }
    }
    out
}

fn print_summary(records: &[ReplicateRecord]) {
    let mut methods: Vec<SelectMethod> = records.iter().flat_map(|r| r.methods.iter().map(|m| m.method)).collect();
    methods.sort();
    methods.dedup();
    for m in methods {
        let tdr: Vec<f64> = records.iter().filter_map(|r| r.method(m).and_then(|x| x.tdr)).collect();
        let mse: Vec<f64> = records.iter().filter_map(|r| r.method(m).and_then(|x| x.dissim_mse)).collect();
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        println!("{:<6} mean TDR {:.4}  mean dissimilarity MSE {:.6}", m.to_string(), mean(&tdr), mean(&mse));
    }
}

pub fn report(a: ReportArgs) -> Result<()> {
    let o = Overrides::load(&a.fit, Some(&a.select))?;
    let out = o.out()?.to_path_buf();
    let preset = a.preset.clone().or(o.preset.clone()).ok_or_else(|| invalid!("--preset is required"))?;
    let ns: Vec<usize> = match (&a.ns, &o.ns) {
        (Some(s), _) => s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| invalid!("bad sample size {t:?}")))
            .collect::<Result<_>>()?,
        (None, Some(v)) => v.clone(),
        (None, None) => vec![50, 100, 200],
    };
    if ns.is_empty() || ns.iter().any(|&n| n < 2) {
        return Err(invalid!("sample sizes must be at least 2"));
    }
    for &n in &ns {
        o.check_sample_size(n)?;
    }
    SimSpec::preset(&preset, ns[0], 0).map_err(sim_error)?;
    let replicates = a.replicates.or(o.replicates).unwrap_or(10);
    if replicates == 0 {
        return Err(invalid!("--replicates must be at least 1"));
    }
    let methods = match &a.select.methods {
        Some(_) => o.methods.clone(),
        None if o.select.fit.method == Method::Mb => {
            parse_methods(["pc", "amse", "agnes", "stars"])?
        }
        None => o.methods.clone(),
    };
    let sc = Scenario {
        preset,
        ns,
        replicates,
        methods,
        seed: o.select.amse.seed,
        grid: o.explicit_grid(),
        grid_count: o.default_grid_count(),
        select: o.select.clone(),
    };
    let records = run_scenario(&sc).map_err(eval_error)?;
    guarded(|w| {
        w.write(out.join("scenario.json"), &to_json(&sc)?)?;
        Ok(())
    })?;
    write_results(&out, &records)?;
    print_summary(&records);
    Ok(())
}
