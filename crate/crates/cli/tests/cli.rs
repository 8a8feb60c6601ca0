use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sras(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sras"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SRAS_OUT_DIR")
        .env_remove("SRAS_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = sras(cwd, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).expect("utf8")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("readable")).expect("json")
}

fn operator(v: &Value) -> Vec<Vec<f64>> {
    v["operator"]
        .as_array()
        .expect("operator")
        .iter()
        .map(|r| r.as_array().expect("row").iter().map(|x| x.as_f64().expect("number")).collect())
        .collect()
}

fn write_summary(path: &Path, family: &str, op: &str) {
    fs::write(
        path,
        format!(r#"{{"class_label":null,"family_id":"{family}","k":1,"kind":"G","n_samples":1,"noise":null,"operator":{op}}}"#),
    )
    .expect("writable");
}

const LINEAR: &str = r#"{"input_dim":2,"layers":[{"kind":"dense","W":[[1.0,2.0],[3.0,4.0]],"b":[0.5,-0.5]}]}"#;

#[test]
fn summarize_linear_model_gives_gram_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("linear.json"), LINEAR).unwrap();
    fs::write(dir.join("data.csv"), "x0,x1\n0.3,-1.2\n2.0,0.1\n-0.7,0.4\n").unwrap();
    ok(dir, &["summarize", "--model", "linear.json", "--data", "data.csv", "-o", "run1"]);
    let s = json(&dir.join("run1/summary.json"));
    let expected = [[10.0, 14.0], [14.0, 20.0]];
    let got = operator(&s);
    for i in 0..2 {
        for j in 0..2 {
            assert!((got[i][j] - expected[i][j]).abs() < 1e-12, "{got:?}");
        }
    }
    assert_eq!(s["provenance"]["config"]["seed"], 0);
    assert_eq!(s["provenance"]["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(s["provenance"]["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    ok(dir, &["summarize", "--model", "linear.json", "--data", "data.csv", "-o", "run2"]);
    assert_eq!(fs::read(dir.join("run1/summary.json")).unwrap(), fs::read(dir.join("run2/summary.json")).unwrap());
}

#[test]
fn summarize_empty_dataset_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("linear.json"), LINEAR).unwrap();
    fs::write(dir.join("empty.csv"), "x0,x1\n").unwrap();
    let out = sras(dir, &["summarize", "--model", "linear.json", "--data", "empty.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("empty"));
}

#[test]
fn malformed_inputs_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("linear.json"), LINEAR).unwrap();
    fs::write(dir.join("bad.csv"), "x0,x1\n1,2\n3,oops\n").unwrap();
    let out = sras(dir, &["summarize", "--model", "linear.json", "--data", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let missing = sras(dir, &["summarize", "--model", "nope.json", "--data", "bad.csv"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn compare_identities() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_summary(&dir.join("one.json"), "f", "[[1.0]]");
    write_summary(&dir.join("e2.json"), "f", &format!("[[{}]]", 2f64.exp()));
    write_summary(&dir.join("other.json"), "g", "[[1.0]]");

    ok(dir, &["compare", "one.json", "one.json", "-o", "same"]);
    let same = json(&dir.join("same/certificate.json"));
    assert_eq!(same["s_ras"].as_f64(), Some(1.0));
    assert_eq!(same["bound_factors"]["lower"].as_f64(), Some(1.0));
    assert_eq!(same["bound_factors"]["upper"].as_f64(), Some(1.0));

    ok(dir, &["compare", "one.json", "e2.json", "-o", "scaled"]);
    let scaled = json(&dir.join("scaled/certificate.json"));
    assert!((scaled["s_ras"].as_f64().unwrap() - (-2f64).exp()).abs() < 1e-12);
    assert!((scaled["d_airm"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((scaled["bound_factors"]["upper"].as_f64().unwrap() - 2f64.exp()).abs() < 1e-10);

    let out = sras(dir, &["compare", "one.json", "other.json", "-o", "mixed"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("WARNING"));
    let mixed = json(&dir.join("mixed/certificate.json"));
    assert_eq!(mixed["family_match"], false);
    assert!(mixed["warning"].as_str().unwrap().contains("family"));
}

fn bank(dir: &Path, n: &str, classes: Option<&str>) {
    let mut args = vec!["synth", "bank", "--n-models", n, "--seed", "2", "-o", "bank"];
    if let Some(c) = classes {
        args.extend(["--classes", c]);
    }
    ok(dir, &args);
}

#[test]
fn match_layers_reports_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    bank(dir, "2", None);
    ok(dir, &[
        "match-layers", "--bank", "bank/model-0.json", "bank/model-1.json", "--layers", "2,4,6,8", "--data",
        "bank/data.csv", "--family", "bank/family.csv", "-o", "ml",
    ]);
    let report = json(&dir.join("ml/report.json"));
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&acc));
    assert_eq!(report["decay"].as_array().unwrap().len(), 4);
    assert!(dir.join("ml/pair-model-0-model-1.csv").exists());
    let avg = fs::read_to_string(dir.join("ml/average.csv")).unwrap();
    assert_eq!(avg.lines().next(), Some("id,L2,L4,L6,L8"));
}

#[test]
fn permuted_control_is_near_zero_on_a_symmetric_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    bank(dir, "8", Some("2"));
    let mut group_a = Vec::new();
    let mut group_b = Vec::new();
    let mut models = Vec::new();
    for m in 0..8 {
        let model = format!("bank/model-{m}.json");
        let out = format!("s{m}");
        ok(dir, &["summarize", "--model", &model, "--data", "bank/data.csv", "--family", "bank/family.csv", "--class-conditional", "-o", &out]);
        let summary = format!("s{m}/summary-class0.json");
        if m % 2 == 0 { group_a.push(summary) } else { group_b.push(summary) }
        models.push(model);
    }
    let mut args = vec!["probes", "--group-a"];
    args.extend(group_a.iter().map(String::as_str));
    args.push("--group-b");
    args.extend(group_b.iter().map(String::as_str));
    args.extend(["--control", "permuted", "--models"]);
    args.extend(models.iter().map(String::as_str));
    args.extend(["--data", "bank/data.csv", "--family", "bank/family.csv", "--seed", "1", "-o", "pr"]);
    ok(dir, &args);

    let csv = fs::read_to_string(dir.join("pr/scores.csv")).unwrap();
    let permuted: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(3) == Some("permuted"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(permuted.len() > 10);
    let n = permuted.len() as f64;
    let mean = permuted.iter().sum::<f64>() / n;
    let spread = (permuted.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 0.25 * spread, "mean {mean}, spread {spread}");
    let report = json(&dir.join("pr/report.json"));
    assert_eq!(report["probe_sets"].as_array().unwrap().len(), 2);
}

#[test]
fn grid_fisher_beats_chance_on_the_synthetic_cohort() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "cohort", "--seed", "3", "-o", "co"]);
    ok(dir, &["grid-fisher", "--trials", "co/trials.csv", "--grid", "co/grid.json", "--shape-only", "-o", "gf"]);
    let report = json(&dir.join("gf/report.json"));
    assert!(report["top1"].as_f64().unwrap() > 0.5, "{}", report["top1"]);
    assert_eq!(report["n_experiments"], 12);
    assert_eq!(report["experiments"].as_array().unwrap().len(), 12);
    let sim = fs::read_to_string(dir.join("gf/similarity.csv")).unwrap();
    assert_eq!(sim.lines().count(), 13);
}
