use std::path::Path;
use std::process::{Command, Output};

fn svdkf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svdkf")).args(args).env("FK_THREADS", "2").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn simulate_writes_header_and_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = svdkf(&["simulate", "--model", "example1", "--steps", "100", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
    }
    let text = read(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,x_1,x_2,x_3,x_4,z_1");
    assert_eq!(lines.len(), 101);
    assert_eq!(text, read(&b));
}

#[test]
fn simulate_two_sensor_model_has_two_measurement_columns() {
    let o = svdkf(&["simulate", "--model", "example2:1e-3", "--steps", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().next().unwrap(), "k,x_1,x_2,x_3,x_4,z_1,z_2");
}

#[test]
fn model_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, r#"{"f":[[0.9]],"h":[[1]],"theta":[[0.1]],"r":[[1]],"x0_mean":[0],"pi0":[[1]]}"#).unwrap();
    let o = svdkf(&["run", "--model", path.to_str().unwrap(), "--runs", "3", "--steps", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 6);
}

#[test]
fn run_report_rows_agree_across_filters() {
    let o = svdkf(&["run", "--model", "example1", "--filters", "all", "--runs", "20", "--steps", "50", "--seed", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "filter");
    assert_eq!(&header[1], "rmse_x1");
    assert_eq!(&header[5], "mre_x1");
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    for row in &rows[1..] {
        for c in 1..=4 {
            let (a, b): (f64, f64) = (rows[0][c].parse().unwrap(), row[c].parse().unwrap());
            assert!((a - b).abs() <= 1e-5 * a.abs(), "{} column {c}", &row[0]);
        }
    }
}

#[test]
fn run_single_filter_and_json() {
    let o = svdkf(&["run", "--runs", "1", "--filters", "kf", "--steps", "10"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2);

    let o = svdkf(&["run", "--runs", "2", "--filters", "svd-kf,udkf", "--steps", "10", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v["filters"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["filter"], "svd-kf");
    assert_eq!(rows[0]["rmse"].as_array().unwrap().len(), 4);
    assert!(rows[0]["cpu_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn sweep_has_a_column_per_delta_and_failure_tokens() {
    let o = svdkf(&["sweep", "--runs", "5", "--steps", "40", "--filters", "kf,svd-kf"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().len(), 15);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let kf = &rows[0];
    assert_eq!(&kf[0], "kf");
    // the δ = 1e-8 column
    assert!(["NaN", "Inf", "FAIL"].contains(&&kf[8]), "kf at 1e-8: {}", &kf[8]);
    let svd = &rows[1];
    for c in 1..15 {
        assert!(svd[c].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn loglik_methods_agree_and_repeat() {
    let a = svdkf(&["loglik", "--model", "example1", "--seed", "5", "--method", "svd"]);
    let b = svdkf(&["loglik", "--model", "example1", "--seed", "5", "--method", "conventional"]);
    let c = svdkf(&["loglik", "--model", "example1", "--seed", "5", "--method", "svd"]);
    assert!(a.status.success() && b.status.success());
    let (x, y): (f64, f64) = (stdout(&a).trim().parse().unwrap(), stdout(&b).trim().parse().unwrap());
    assert!((x - y).abs() <= 1e-9 * x.abs());
    assert_eq!(stdout(&a), stdout(&c));
}

#[test]
fn degenerate_likelihood_is_an_error_not_a_crash() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.json");
    std::fs::write(&path, r#"{"f":[[1]],"h":[[1]],"theta":[[0]],"r":[[0]],"x0_mean":[0],"pi0":[[0]]}"#).unwrap();
    for method in ["svd", "conventional"] {
        let o = svdkf(&["loglik", "--model", path.to_str().unwrap(), "--steps", "1", "--method", method]);
        assert_eq!(o.status.code(), Some(2), "{method}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["simulate", "--model", "example7"][..],
        &["simulate", "--model", "/no/such/model.json"],
        &["run", "--filters", "bogus"],
        &["run", "--runs", "0"],
        &["sweep", "--deltas", "1e-3,1e-1"],
        &["sweep", "--deltas", "zero"],
        &["loglik", "--filter", "srkf", "--method", "svd"],
        &["frobnicate"],
        &["run", "--format", "xml"],
    ] {
        let o = svdkf(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}
