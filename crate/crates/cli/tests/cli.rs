use std::path::Path;
use std::process::{Command, Output};

fn corelearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corelearn")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bounds_prints_both_sample_sizes() {
    let o = ok(corelearn(&["bounds", "--eps", "0.1", "--delta", "0.05", "--M", "1"]));
    assert_eq!(stdout(&o), "eps,delta,M,k_claim1,k_claim2\n0.1,0.05,1,738,893\n");
}

#[test]
fn invalid_delta_is_a_validation_error() {
    let o = corelearn(&["bounds", "--eps", "0.1", "--delta", "1.5", "--M", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("delta"));
}

#[test]
fn usage_errors_exit_with_validation_code() {
    assert_eq!(corelearn(&["bounds", "--bogus"]).status.code(), Some(1));
    assert_eq!(corelearn(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_dataset_names_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "x,y\n1,2\n3,NaN\n").unwrap();
    let o = corelearn(&[
        "gen-queries", "--data", s(&data), "--features", "x", "--label", "y",
        "--out", s(&dir.path().join("q.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains('y'), "{err}");
}

#[test]
fn learn_baseline_eval_verify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.csv");
    ok(corelearn(&["synth", "--kind", "linear", "--n", "300", "--d", "2", "--seed", "4", "--out", s(&data)]));
    let cols = ["--data", s(&data), "--features", "x0,x1", "--label", "label"];
    let with = |extra: &[&str]| -> Vec<String> {
        extra.iter().chain(cols.iter()).map(|x| x.to_string()).collect()
    };
    let run = |args: Vec<String>| ok(corelearn(&args.iter().map(String::as_str).collect::<Vec<_>>()));

    run(with(&["gen-queries", "--n-starts", "5", "--steps", "19", "--gd-lr", "0.05", "--split", "60,20,20", "--out-dir", s(d), "--out", s(&d.join("pool.csv"))]));
    for f in ["train.csv", "validation.csv", "test.csv", "pool.csv"] {
        assert!(d.join(f).exists(), "{f}");
    }

    let learned = d.join("learned.json");
    run(with(&[
        "learn", "--train", s(&d.join("train.csv")), "--val", s(&d.join("validation.csv")), "--size", "10",
        "--epochs", "20", "--out", s(&learned), "--report", s(&d.join("report.json")),
    ]));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["epoch_train_loss"].as_array().unwrap().len(), 20);

    let lev = d.join("leverage.json");
    run(with(&["baseline", "--method", "leverage", "--size", "10", "--out", s(&lev)]));

    for c in [&learned, &lev] {
        let o = run(with(&["eval", "--coreset", s(c), "--test", s(&d.join("test.csv"))]));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert!(v["err_avg"].as_f64().unwrap() >= 0.0);
        assert!(v["err_opt"].as_f64().unwrap() >= 0.0);
    }

    let o = run(with(&["verify", "chain", "--coreset", s(&learned), "--queries", s(&d.join("train.csv"))]));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["holds"], serde_json::Value::Bool(true));

    let o = run(with(&["verify", "claim1", "--queries", s(&d.join("test.csv")), "--trials", "200"]));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], serde_json::Value::Bool(true));

    let o = run(with(&["bounds", "--eps", "0.1", "--delta", "0.05", "--estimate-M", "--queries", s(&d.join("pool.csv"))]));
    assert!(stderr(&o).contains("M_point"));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn experiment_writes_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
            "dataset": {"source": {"type": "synth", "kind": "linear", "n": 200, "d": 2}, "loss": "linear_regression"},
            "queries": {"n_starts": 4, "steps_per_start": 19, "split": [50, 15, 15]},
            "learner": {"epochs": 3, "batch_size": 10},
            "sweep": {"sizes": [5], "trials": 2}
        }"#,
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(corelearn(&["experiment", "--config", s(&cfg), "--out-dir", s(&a), "--seed", "5"]));
    ok(corelearn(&["experiment", "--config", s(&cfg), "--out-dir", s(&b), "--seed", "5", "--threads", "2"]));
    for f in ["trials.csv", "aggregate.csv", "manifest.json", "train_reports.json", "config.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read(a.join("aggregate.csv")).unwrap(), std::fs::read(b.join("aggregate.csv")).unwrap());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["root"], 5);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    // the manifest's config alone reproduces the run
    let replay = dir.path().join("replay.json");
    std::fs::write(&replay, serde_json::to_string(&manifest["config"]).unwrap()).unwrap();
    let c = dir.path().join("c");
    ok(corelearn(&["experiment", "--config", s(&replay), "--out-dir", s(&c)]));
    assert_eq!(std::fs::read(a.join("aggregate.csv")).unwrap(), std::fs::read(c.join("aggregate.csv")).unwrap());

    let o = corelearn(&["experiment", "--config", s(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));
}
