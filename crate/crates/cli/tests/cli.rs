use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sieve_ate::sim::{generate, Scenario, ScenarioSpec};
use sieve_ate_cli::write_dataset;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sieve-ate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn json_records(path: &Path) -> Vec<serde_json::Value> {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}

#[test]
fn estimate_recovers_scenario_one_effect() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("s1.csv");
    let data = generate(&ScenarioSpec::new(Scenario::I, 5000, 0.5), 17).unwrap();
    write_dataset(&input, &data, "y", "d").unwrap();
    let out = dir.path().join("est.json");
    let o = run(&[
        "estimate", "--input", input.to_str().unwrap(), "--outcome", "y", "--treatment", "d",
        "--covariates", "x1,x2,x3", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let recs = json_records(&out);
    assert_eq!(recs.len(), 3);
    let p = recs.iter().find(|r| r["method"] == "proposed").unwrap();
    let (alpha, se) = (p["alpha"].as_f64().unwrap(), p["std_error"].as_f64().unwrap());
    assert!((alpha - 0.5).abs() < 3.0 * se, "{alpha} +- {se}");
    let stdout = text(&o.stdout);
    assert!(stdout.contains("proposed") && stdout.contains("ps-regression") && stdout.contains("ps-residual"));
}

#[test]
fn simulate_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let common = ["simulate", "--scenario", "I", "--n", "300", "--alpha", "0", "--reps", "200", "--seed", "42", "--methods", "proposed"];
    let oa = run(&[&common[..], &["--out", a.to_str().unwrap(), "--threads", "1"]].concat());
    let ob = run(&[&common[..], &["--out", b.to_str().unwrap(), "--threads", "3"]].concat());
    assert!(oa.status.success(), "{}", text(&oa.stderr));
    assert!(ob.status.success(), "{}", text(&ob.stderr));
    for f in ["summary.txt", "summary.csv", "replicates.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(oa.stdout, ob.stdout);
    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    assert!(summary.starts_with("scenario,n,alpha_true,method"));
    assert_eq!(fs::read_to_string(a.join("replicates.csv")).unwrap().lines().count(), 201);
}

#[test]
fn all_treated_data_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("treated.csv");
    write(&input, "y,d,x1\n1,1,0.1\n2,1,0.3\n3,1,0.2\n4,1,0.8\n");
    let o = run(&["estimate", "--input", input.to_str().unwrap(), "--outcome", "y", "--treatment", "d", "--covariates", "x1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("treatment has no variation"), "{}", text(&o.stderr));
}

#[test]
fn yes_no_treatment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("yn.csv");
    write(&input, "y,d,x1\n1,yes,0.1\n2,no,0.3\n3,yes,0.2\n");
    let o = run(&["estimate", "--input", input.to_str().unwrap(), "--outcome", "y", "--treatment", "d", "--covariates", "x1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("recode"));
}

#[test]
fn rows_with_missing_values_are_dropped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("missing.csv");
    let mut s = String::from("y,d,x1\n");
    for i in 0..100 {
        let x = if [5, 50, 95].contains(&i) { String::new() } else { format!("{}", (i as f64 * 0.37).sin()) };
        s += &format!("{},{},{x}\n", (i as f64 * 0.11).cos(), i % 2);
    }
    write(&input, &s);
    let o = run(&[
        "estimate", "--input", input.to_str().unwrap(), "--outcome", "y", "--treatment", "d",
        "--covariates", "x1", "--methods", "ps-regression",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("3 rows dropped"));
    assert!(text(&o.stdout).contains("n = 97"));
}

#[test]
fn dumped_replicates_reproduce_recorded_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = run(&[
        "simulate", "--scenario", "II", "--n", "200", "--alpha", "0.3", "--reps", "3", "--seed", "9",
        "--out", out.to_str().unwrap(), "--dump-datasets",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let mut reader = csv::Reader::from_path(out.join("replicates.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    for rep in 1..=3 {
        let file = out.join(format!("datasets/replicate_{rep:04}.csv"));
        let est = dir.path().join(format!("est{rep}.json"));
        let o = run(&[
            "estimate", "--input", file.to_str().unwrap(), "--outcome", "y", "--treatment", "d",
            "--covariates", "x1,x2,x3", "--out", est.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        for rec in json_records(&est) {
            let method = rec["method"].as_str().unwrap();
            let row = rows
                .iter()
                .find(|r| r[col("replicate")] == rep.to_string() && r[col("method")] == *method)
                .unwrap();
            let recorded: f64 = row[col("alpha")].parse().unwrap();
            let got = rec["alpha"].as_f64().unwrap();
            assert!((got - recorded).abs() <= 1e-10, "replicate {rep} {method}: {got} vs {recorded}");
        }
    }
}

#[test]
fn birth_weight_style_fixture_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bw.csv");
    let o = run(&[
        "estimate", "--input", fixture("birthweight_synthetic.csv").to_str().unwrap(),
        "--outcome", "bweight", "--treatment", "mbsmoke",
        "--covariates", "mage,medu,nprevist",
        "--categorical", "mmarried,alcohol,fbaby,mrace",
        "--standardize", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("3 rows dropped"));
    assert!(text(&o.stdout).contains("n = 797, p = 8"), "{}", text(&o.stdout));
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let proposed = &rows[0];
    assert_eq!(&proposed[0], "proposed");
    let alpha: f64 = proposed[1].parse().unwrap();
    let se: f64 = proposed[2].parse().unwrap();
    assert!((alpha + 250.0).abs() < 4.0 * se, "{alpha} +- {se}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["estimate", "--input", "x.csv"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--scenario", "I", "--n", "50", "--alpha", "0", "--reps", "1"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn missing_input_file_is_a_data_error() {
    let o = run(&["estimate", "--input", "/nonexistent/file.csv", "--outcome", "y", "--treatment", "d", "--covariates", "x"]);
    assert_eq!(o.status.code(), Some(2));
}
