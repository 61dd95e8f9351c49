use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn cate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cate(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, scenario: &str, n: &str, seed: &str) -> std::path::PathBuf {
    let path = dir.join(format!("s{scenario}_{n}_{seed}.csv"));
    ok(&["simulate", "--scenario", scenario, "--n", n, "--d", "2", "--seed", seed, "--out", p(&path)]);
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn fit_writes_a_complete_bundle() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "1", "1000", "7");
    let out = dir.path().join("bundle");
    ok(&["fit", "--input", p(&data), "--out", p(&out), "--min-node", "25", "--seed", "3", "--write-matches"]);

    for f in ["manifest.json", "scores.json", "tree.json", "tree.txt", "grid.csv", "matches.csv", "summary.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let text = fs::read_to_string(out.join("tree.txt")).unwrap();
    assert!(text.lines().any(|l| l.ends_with(" *")));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["config"]["min_node_size"], 25);
    assert_eq!(manifest["config"]["seed"], 3);
    assert_eq!(rows(&out.join("grid.csv")).len(), 50 * 50);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["n"], 1000);
    let k = summary["k"].as_u64().unwrap() as usize;
    assert_eq!(rows(&out.join("matches.csv")).len(), 1000 * k);
    let tree = read_json(&out.join("tree.json"));
    let leaves = tree["nodes"].as_array().unwrap().iter().filter(|n| n["split"].is_null()).count();
    assert_eq!(summary["n_leaves"], leaves);
}

#[test]
fn fit_is_deterministic_and_manifest_reruns_exactly() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "1", "600", "11");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    ok(&["fit", "--input", p(&data), "--out", p(&a), "--seed", "5"]);
    ok(&["fit", "--input", p(&data), "--out", p(&b), "--seed", "5"]);
    ok(&["fit", "--manifest", p(&a.join("manifest.json")), "--out", p(&c)]);
    for f in ["manifest.json", "scores.json", "tree.json", "tree.txt", "grid.csv", "summary.json"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f} differs between runs");
        assert_eq!(x, fs::read(c.join(f)).unwrap(), "{f} differs after manifest rerun");
    }
}

#[test]
fn missing_treatment_column_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "1", "200", "1");
    let renamed = dir.path().join("renamed.csv");
    let text = fs::read_to_string(&data).unwrap().replacen("y,z,", "y,w,", 1);
    fs::write(&renamed, text).unwrap();
    let out = cate(&["fit", "--input", p(&renamed), "--out", p(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`z`"));

    let out = cate(&["fit", "--input", p(&renamed), "--z-col", "w", "--out", p(&dir.path().join("b"))]);
    assert!(out.status.success());
}

#[test]
fn invalid_arguments_exit_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "1", "200", "2");
    let bundle = dir.path().join("b");
    for args in [
        vec!["fit", "--input", p(&data), "--out", p(&bundle), "--k", "0"],
        vec!["fit", "--input", p(&data), "--out", p(&bundle), "--min-node", "0"],
        vec!["bootstrap-ci", "--input", p(&data), "--out", p(&bundle), "--b", "10", "--level", "1.5"],
        vec!["simulate", "--scenario", "9", "--out", p(&bundle)],
        vec!["simulate", "--scenario", "2", "--d", "3", "--out", p(&bundle)],
        vec!["fit", "--input", p(&dir.path().join("absent.csv")), "--out", p(&bundle)],
    ] {
        let out = cate(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn non_finite_input_is_rejected() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    let mut text = String::from("y,z,x1\n");
    for i in 0..50 {
        text.push_str(&format!("{},{},{}\n", i, i % 2, if i == 7 { "NaN".into() } else { i.to_string() }));
    }
    fs::write(&data, text).unwrap();
    let out = cate(&["fit", "--input", p(&data), "--out", p(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x1"));
}

#[test]
fn predict_routes_units_through_a_hand_built_tree() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "1", "400", "4");
    let bundle = dir.path().join("b");
    ok(&["fit", "--input", p(&data), "--out", p(&bundle)]);

    let first = String::from_utf8(ok(&["predict", "--bundle", p(&bundle), "--input", p(&data)]).stdout).unwrap();
    let mut e: Vec<f64> = first.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    e.sort_by(f64::total_cmp);
    let threshold = e[e.len() / 2];
    let mut tree = read_json(&bundle.join("tree.json"));
    tree["nodes"] = json!([
        {"id": 0, "n": 2, "effect": 0.5, "sse": 1.0,
         "split": {"axis": "propensity", "threshold": threshold, "left": 1, "right": 2}},
        {"id": 1, "n": 1, "effect": -1.0, "sse": 0.0, "split": null},
        {"id": 2, "n": 1, "effect": 2.0, "sse": 0.0, "split": null}
    ]);
    fs::write(bundle.join("tree.json"), serde_json::to_string(&tree).unwrap()).unwrap();

    let pred = dir.path().join("pred.csv");
    ok(&["predict", "--bundle", p(&bundle), "--input", p(&data), "--out", p(&pred)]);
    let header = fs::read_to_string(&pred).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "row,e_hat,p_hat,leaf,tau_hat");
    let out = rows(&pred);
    assert_eq!(out.len(), 400);
    let mut sides = [0, 0];
    for (i, r) in out.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
        let e: f64 = r[1].parse().unwrap();
        let (leaf, tau) = if e <= threshold { ("1", -1.0) } else { ("2", 2.0) };
        assert_eq!(r[3], leaf);
        assert_eq!(r[4].parse::<f64>().unwrap(), tau);
        sides[(e > threshold) as usize] += 1;
    }
    assert!(sides[0] > 0 && sides[1] > 0);
}

#[test]
fn predict_reads_covariates_by_name() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "1", "300", "8");
    let bundle = dir.path().join("b");
    ok(&["fit", "--input", p(&data), "--out", p(&bundle)]);
    let a = String::from_utf8(ok(&["predict", "--bundle", p(&bundle), "--input", p(&data)]).stdout).unwrap();

    // covariates only, columns reordered
    let text = fs::read_to_string(&data).unwrap();
    let mut reordered = String::from("x2,x1\n");
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        reordered.push_str(&format!("{},{}\n", f[3], f[2]));
    }
    let new = dir.path().join("new.csv");
    fs::write(&new, reordered).unwrap();
    let b = String::from_utf8(ok(&["predict", "--bundle", p(&bundle), "--input", p(&new)]).stdout).unwrap();
    assert_eq!(a, b);

    fs::write(&new, "x1\n0.5\n").unwrap();
    let out = cate(&["predict", "--bundle", p(&bundle), "--input", p(&new)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x2"));
}

#[test]
fn bootstrap_reports_coverage_only_with_true_effects() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "1", "300", "9");
    let with = dir.path().join("with");
    ok(&["bootstrap-ci", "--input", p(&data), "--out", p(&with), "--b", "30", "--threads", "2"]);
    let s = read_json(&with.join("summary.json"));
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["b"], 30);
    let cov = s["coverage"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&cov));
    let iv = rows(&with.join("intervals.csv"));
    assert_eq!(iv.len(), 300);
    for r in &iv {
        let lo: f64 = r[2].parse().unwrap();
        let hi: f64 = r[3].parse().unwrap();
        assert!(lo <= hi);
    }

    // drop the tau_true column
    let text = fs::read_to_string(&data).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    assert!(stripped.starts_with("y,z,x1,x2\n"));
    let plain = dir.path().join("plain.csv");
    fs::write(&plain, stripped).unwrap();
    let without = dir.path().join("without");
    ok(&["bootstrap-ci", "--input", p(&plain), "--out", p(&without), "--b", "30", "--threads", "1"]);
    let s2 = read_json(&without.join("summary.json"));
    assert!(s2.get("coverage").is_none());
    // same data and seed: intervals do not depend on the threads or on tau_true
    assert_eq!(
        fs::read(with.join("intervals.csv")).unwrap(),
        fs::read(without.join("intervals.csv")).unwrap()
    );
}

#[test]
fn bench_and_sweep_write_reports() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.json");
    ok(&["bench", "--scenario", "1", "--n", "300", "--d", "2", "--trials", "2", "--methods", "pp,psm", "--out", p(&report)]);
    let r = read_json(&report);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["trials"].as_array().unwrap().len(), 2);
    assert_eq!(r["summary"].as_array().unwrap().len(), 2);

    let bad = cate(&["bench", "--scenario", "1", "--trials", "1", "--methods", "forest", "--out", p(&report)]);
    assert_eq!(bad.status.code(), Some(2));

    let sweep = dir.path().join("k.csv");
    ok(&["sweep-k", "--scenario", "1", "--n", "300", "--d", "2", "--trials", "2", "--k", "1,3", "--out", p(&sweep)]);
    let text = fs::read_to_string(&sweep).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,mean_mse");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("3,"));
}
