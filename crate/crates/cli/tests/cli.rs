use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn netsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsel")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    o
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(out: &Path, preset: &str, n: &str, seed: &str) {
    ok(netsel(&["simulate", "--preset", preset, "--n", n, "--seed", seed, "--out", path(out)]));
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Quick select on a replicate: a short grid and few subsamples.
fn quick_select(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "select", "--input", path(data), "--grid-min", "0.2", "--grid-max", "0.66", "--grid-count", "12",
        "--subsamples", "4", "--seed", "3", "--out", path(out),
    ];
    args.extend_from_slice(extra);
    netsel(&args)
}

#[test]
fn simulate_writes_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    simulate(&out, "p50-powerlaw", "100", "7");
    let rep = out.join("rep_000");
    for f in ["edges.tsv", "precision.tsv", "clusters.tsv", "data.csv"] {
        assert!(rep.join(f).is_file(), "{f} missing");
    }
    let m = json(&out.join("manifest.json"));
    let entry = &m["replicates"][0];
    assert_eq!(entry["p"], 50);
    assert_eq!(entry["n"], 100);
    assert_eq!(entry["files"].as_array().unwrap().len(), 4);
    let data = fs::read_to_string(rep.join("data.csv")).unwrap();
    assert_eq!(data.lines().filter(|l| !l.trim().is_empty()).count(), 101);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    simulate(&a, "p50-hubs", "60", "11");
    simulate(&b, "p50-hubs", "60", "11");
    for f in ["edges.tsv", "precision.tsv", "clusters.tsv", "data.csv"] {
        let fa = fs::read(a.join("rep_000").join(f)).unwrap();
        let fb = fs::read(b.join("rep_000").join(f)).unwrap();
        assert_eq!(fa, fb, "{f} differs");
    }
    let c = dir.path().join("c");
    simulate(&c, "p50-hubs", "60", "12");
    assert_ne!(fs::read(a.join("rep_000/data.csv")).unwrap(), fs::read(c.join("rep_000/data.csv")).unwrap());
}

#[test]
fn unknown_preset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = netsel(&["simulate", "--preset", "p999-nothing", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("p170-hubs") && e.contains("p50-powerlaw"), "{e}");
}

#[test]
fn zero_jobs_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = netsel(&["--jobs", "0", "simulate", "--preset", "p50-hubs", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn select_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "p50-hubs", "80", "5");
    let truth = sim.join("rep_000");
    let sel = dir.path().join("sel");
    let o = ok(quick_select(&truth.join("data.csv"), &sel, &[]));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 6, "{stdout}");

    let report = json(&sel.join("report.json"));
    assert_eq!(report["methods"].as_array().unwrap().len(), 6);
    assert_eq!(report["selected"].as_array().unwrap().len(), 6);
    assert_eq!(fs::read_to_string(sel.join("netstats.jsonl")).unwrap().lines().count(), 12);

    // rerunning with the same seed reproduces the report byte for byte
    let again = dir.path().join("again");
    ok(quick_select(&truth.join("data.csv"), &again, &[]));
    assert_eq!(fs::read(sel.join("report.json")).unwrap(), fs::read(again.join("report.json")).unwrap());

    let ev = dir.path().join("ev");
    let rp = sel.join("report.json");
    ok(netsel(&["eval", "--report", path(&rp), "--truth", path(&truth), "--out", path(&ev)]));
    let csv = fs::read_to_string(ev.join("recovery.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(ev.join("records.jsonl").is_file());
    assert!(ev.join("tables").join("tdr_mean.csv").is_file());
}

#[test]
fn eval_of_the_truth_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "p50-powerlaw", "80", "2");
    let truth = sim.join("rep_000");
    let sel = dir.path().join("sel");
    ok(quick_select(&truth.join("data.csv"), &sel, &["--methods", "pc,bic"]));

    // swap every selected graph for the true edge list
    let edges: Vec<Value> = fs::read_to_string(truth.join("edges.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<usize> = l.split('\t').take(2).map(|s| s.parse().unwrap()).collect();
            serde_json::json!([f[0], f[1]])
        })
        .collect();
    let mut report = json(&sel.join("report.json"));
    for s in report["selected"].as_array_mut().unwrap() {
        s["edges"] = Value::Array(edges.clone());
        s["precision"] = Value::Null;
    }
    let rp = dir.path().join("perfect.json");
    fs::write(&rp, serde_json::to_string(&report).unwrap()).unwrap();

    let ev = dir.path().join("ev");
    ok(netsel(&["eval", "--report", path(&rp), "--truth", path(&truth), "--out", path(&ev)]));
    let records = fs::read_to_string(ev.join("records.jsonl")).unwrap();
    let rec: Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    for m in rec["methods"].as_array().unwrap() {
        assert_eq!(m["tdr"], 1.0, "{m}");
        assert_eq!(m["dissim_mse"], 0.0, "{m}");
    }
}

#[test]
fn eval_rejects_bad_truth() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "p50-hubs", "60", "1");
    let sel = dir.path().join("sel");
    ok(quick_select(&sim.join("rep_000/data.csv"), &sel, &["--methods", "bic"]));
    let rp = sel.join("report.json");
    let ev = path(&dir.path().join("ev")).to_string();

    let missing = dir.path().join("nowhere");
    let o = netsel(&["eval", "--report", path(&rp), "--truth", path(&missing), "--out", &ev]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let other = dir.path().join("other");
    simulate(&other, "p170-random", "20", "1");
    let o = netsel(&["eval", "--report", path(&rp), "--truth", path(&other.join("rep_000")), "--out", &ev]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension mismatch"), "{}", stderr(&o));
}

#[test]
fn mb_with_precision_method_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "p50-hubs", "60", "1");
    let o = quick_select(&sim.join("rep_000/data.csv"), &dir.path().join("sel"), &["--estimator", "mb", "--methods", "pc,aic"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("AIC requires GLasso"), "{}", stderr(&o));
    assert!(!dir.path().join("sel").join("report.json").exists());
}

#[test]
fn fit_writes_one_edge_list_per_penalty() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "p50-powerlaw", "60", "4");
    let out = dir.path().join("fit");
    let data = sim.join("rep_000/data.csv");
    ok(netsel(&[
        "fit", "--input", path(&data), "--grid-min", "0.1", "--grid-max", "0.5", "--grid-count", "5", "--out", path(&out),
    ]));
    for k in 0..5 {
        assert!(out.join("path").join(format!("lambda_{k:03}.tsv")).is_file());
    }
    assert_eq!(fs::read_to_string(out.join("netstats.jsonl")).unwrap().lines().count(), 5);
    assert!(out.join("path.json").is_file());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "p50-hubs", "60", "8");
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"grid_min": 0.2, "grid_max": 0.6, "grid_count": 5, "methods": ["pc"]}"#).unwrap();
    let out = dir.path().join("sel");
    let data = sim.join("rep_000/data.csv");
    ok(netsel(&["select", "--input", path(&data), "--config", path(&cfg), "--grid-count", "7", "--out", path(&out)]));
    let report = json(&out.join("report.json"));
    assert_eq!(report["grid"].as_array().unwrap().len(), 7);
    assert_eq!(report["methods"].as_array().unwrap().len(), 1);

    fs::write(&cfg, r#"{"grid_count": 5, "bogus": 1}"#).unwrap();
    let o = netsel(&["select", "--input", path(&data), "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_produces_tables_for_each_sample_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rep");
    ok(netsel(&[
        "report", "--preset", "p50-hubs", "--ns", "50,100", "--replicates", "2", "--grid-count", "10", "--subsamples",
        "3", "--seed", "1", "--out", path(&out),
    ]));
    let table = fs::read_to_string(out.join("tables").join("tdr_mean.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    // p, topology, method, then one column per sample size
    assert_eq!(lines.len(), 7, "{table}");
    assert!(lines.iter().all(|l| l.split(',').count() == 5), "{table}");
    assert!(out.join("scenario.json").is_file());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "p50-powerlaw", "70", "9");
    let data = sim.join("rep_000/data.csv");
    let (one, four) = (dir.path().join("one"), dir.path().join("four"));
    ok(quick_select(&data, &one, &["--jobs", "1"]));
    ok(quick_select(&data, &four, &["--jobs", "4"]));
    assert_eq!(fs::read(one.join("report.json")).unwrap(), fs::read(four.join("report.json")).unwrap());
}
