use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triboost"))
        .current_dir(dir)
        .env("TRIBOOST_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn column(path: &Path, j: usize) -> Vec<f64> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').nth(j).unwrap().parse().unwrap()).collect()
}

#[test]
fn simulate_fit_predict_evaluate() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--spec", "multi_classif_fht", "--n", "300", "--seed", "4", "--out", "d.csv"]);
    ok(d, &[
        "fit", "--data", "d.csv", "--loss", "multiclass", "--mode", "newton", "--iterations", "20",
        "--learning-rate", "0.5", "--max-depth", "3", "--min-leaf", "5", "--out", "m.json",
    ]);
    let report = ok(d, &["evaluate", "--model", "m.json", "--data", "d.csv"]);
    let err: f64 = report.trim().strip_prefix("error_rate,").unwrap().parse().unwrap();
    assert!(err < 0.5, "{report}");
    ok(d, &["predict", "--model", "m.json", "--data", "d.csv", "--out", "p.csv"]);
    let text = fs::read_to_string(d.join("p.csv")).unwrap();
    assert!(text.starts_with("p0,p1,p2,p3,p4\n"));
    assert_eq!(text.lines().count(), 301);
}

#[test]
fn upto_zero_predicts_the_constant() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--spec", "poisson_r", "--n", "100", "--seed", "1", "--out", "d.csv"]);
    ok(d, &["fit", "--data", "d.csv", "--loss", "poisson", "--mode", "hybrid", "--iterations", "5", "--out", "m.json"]);
    ok(d, &["predict", "--model", "m.json", "--data", "d.csv", "--upto", "0", "--out", "p.csv"]);
    let p = column(&d.join("p.csv"), 0);
    let y = column(&d.join("d.csv"), 2);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    assert!(p.iter().all(|v| *v == p[0]));
    assert!((p[0] - mean).abs() < 1e-9 * mean);
    let out = run(d, &["predict", "--model", "m.json", "--data", "d.csv", "--upto", "6", "--out", "p.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_deep_stump_interpolates_training_data() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("d.csv"), "x,y\n0.5,3\n1.5,-1\n2.5,4\n3.5,0.25\n4.5,10\n").unwrap();
    ok(d, &[
        "fit", "--data", "d.csv", "--loss", "squared", "--mode", "gradient", "--iterations", "1",
        "--learning-rate", "1", "--max-depth", "8", "--min-leaf", "1", "--out", "m.json",
    ]);
    ok(d, &["predict", "--model", "m.json", "--data", "d.csv", "--out", "p.csv"]);
    assert_eq!(column(&d.join("p.csv"), 0), vec![3.0, -1.0, 4.0, 0.25, 10.0]);
}

#[test]
fn one_hot_columns_are_expanded() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("d.csv"), "color,x,y\nred,1,0\nblue,2,1\nred,3,1\n").unwrap();
    let out = run(d, &["fit", "--data", "d.csv", "--loss", "binary", "--iterations", "2", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2), "string column without --one-hot");
    ok(d, &["fit", "--data", "d.csv", "--loss", "binary", "--one-hot", "--iterations", "2", "--out", "m.json"]);
    let model = triboost::io::load_model(d.join("m.json")).unwrap();
    assert_eq!(model.num_features(), 3);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["fit", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    fs::write(d.join("d.csv"), "a,b\n1,2\n").unwrap();
    let out = run(d, &["fit", "--data", "d.csv", "--loss", "squared", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a, b"));
    fs::write(d.join("h.csv"), "x,y\n0,1e308\n1,-1e308\n2,1e308\n3,-1e308\n").unwrap();
    let out = run(d, &["fit", "--data", "h.csv", "--loss", "squared", "--mode", "gradient", "--iterations", "3", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(d, &["fit", "--data", "d.csv", "--target", "b", "--loss", "squared", "--mode", "newton", "--constraint", "count", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(1), "newton requires a weighted constraint");
}

#[test]
fn benchmark_and_trace_outputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let bench = [
        "benchmark", "--spec", "tobit_r", "--n-per-partition", "60", "--splits", "2", "--seed", "3",
        "--iterations-max", "10", "--learning-rates", "0.5,0.1", "--min-leaf-values", "1,5", "--max-depth", "3",
    ];
    ok(d, &[&bench[..], &["--out", "a.csv"]].concat());
    ok(d, &[&bench[..], &["--out", "b.csv"]].concat());
    let a = fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("split_id,mode,learning_rate,min_leaf,constraint,chosen_M,valid_score,test_score\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);

    ok(d, &[
        "trace", "--spec", "msr_r", "--n-per-partition", "60", "--splits", "2", "--fixed-lr", "0.05",
        "--iterations", "7", "--max-depth", "3", "--modes", "newton,gradient", "--out-dir", "traces",
    ]);
    for mode in ["newton", "gradient"] {
        for s in 0..2 {
            let text = fs::read_to_string(d.join(format!("traces/trace_{mode}_split{s}.csv"))).unwrap();
            assert!(text.starts_with("iteration,train_loss,test_score\n"));
            assert_eq!(text.lines().count(), 8);
        }
    }
}

#[test]
fn tune_writes_score_table() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--spec", "gamma_r", "--n", "120", "--seed", "1", "--out", "t.csv"]);
    ok(d, &["simulate", "--spec", "gamma_r", "--n", "120", "--seed", "2", "--out", "v.csv"]);
    ok(d, &[
        "tune", "--data", "t.csv", "--valid", "v.csv", "--loss", "gamma", "--mode", "hybrid", "--iterations-max", "6",
        "--learning-rates", "0.3,0.1", "--min-leaf-values", "1,5,25", "--out-table", "s.csv", "--out-model", "m.json",
    ]);
    let rows = fs::read_to_string(d.join("s.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 3 * 6);
    assert!(triboost::io::load_model(d.join("m.json")).is_ok());
}
