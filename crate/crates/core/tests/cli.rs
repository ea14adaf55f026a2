use magnet::estimator::evaluate_accuracy;
use magnet::io::{load_dataset, load_explanation, load_model, SavedModel};
use std::path::Path;
use std::process::{Command, Output};

fn magnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magnet"))
        .args(args)
        .current_dir(dir)
        .env_remove("MAGNET_THREADS")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn generate_table_config_is_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let out = magnet(
        &[
            "generate",
            "--setting",
            "1",
            "--n",
            "100",
            "--nodes",
            "30",
            "--important",
            "10",
            "--seed",
            "7",
            "--out",
            "d.json",
        ],
        dir.path(),
    );
    ok(&out);
    let d = load_dataset(&dir.path().join("d.json")).unwrap();
    assert_eq!((d.len(), d.n_nodes(), d.feat_dim()), (100, 30, 25));
    assert_eq!(d.important_nodes().unwrap(), (0..10).collect::<Vec<_>>().as_slice());

    let text = std::fs::read_to_string(dir.path().join("d.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["provenance"]["run_config"]["command"], "generate");
    assert_eq!(v["provenance"]["run_config"]["seed"], 7);
}

#[test]
fn evaluate_matches_in_process_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&magnet(
        &[
            "generate",
            "--n",
            "80",
            "--nodes",
            "12",
            "--important",
            "4",
            "--feat-dim",
            "6",
            "--seed",
            "2",
            "--out",
            "d.json",
        ],
        p,
    ));
    ok(&magnet(&["train", "--data", "d.json", "--seed", "2", "--k", "2", "--out", "m.json"], p));
    ok(&magnet(&["evaluate", "--data", "d.json", "--model", "m.json", "--out", "e.json"], p));

    let data = load_dataset(&p.join("d.json")).unwrap();
    let SavedModel::Magnet(model) = load_model(&p.join("m.json")).unwrap() else { panic!("expected estimator") };
    assert_eq!(model.k_orders(), 2);
    let want = evaluate_accuracy(&model, &data).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("e.json")).unwrap()).unwrap();
    assert_eq!(v["accuracy"].as_f64().unwrap(), want);

    ok(&magnet(
        &["evaluate", "--data", "d.json", "--model", "m.json", "--split", "0.7", "--seed", "2", "--out", "t.json"],
        p,
    ));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("t.json")).unwrap()).unwrap();
    assert_eq!(v["instances"], 24);
}

#[test]
fn gcn_baseline_trains_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&magnet(
        &[
            "generate",
            "--n",
            "40",
            "--nodes",
            "8",
            "--important",
            "3",
            "--feat-dim",
            "4",
            "--seed",
            "4",
            "--out",
            "d.json",
        ],
        p,
    ));
    ok(&magnet(&["train", "--data", "d.json", "--seed", "4", "--baseline", "gcn", "--out", "g.json"], p));
    assert!(matches!(load_model(&p.join("g.json")).unwrap(), SavedModel::Gcn(_)));
    ok(&magnet(&["evaluate", "--data", "d.json", "--model", "g.json"], p));
    let out = magnet(&["explain", "--data", "d.json", "--model", "g.json", "--seed", "1", "--out", "x.json"], p);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn explain_writes_explanation_document() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&magnet(
        &[
            "generate",
            "--setting",
            "2",
            "--n",
            "40",
            "--nodes",
            "8",
            "--important",
            "3",
            "--feat-dim",
            "6",
            "--seed",
            "5",
            "--out",
            "d.json",
        ],
        p,
    ));
    ok(&magnet(&["train", "--data", "d.json", "--seed", "5", "--out", "m.json"], p));
    ok(&magnet(
        &[
            "explain",
            "--data",
            "d.json",
            "--model",
            "m.json",
            "--seed",
            "5",
            "--iters",
            "40",
            "--top-m",
            "3",
            "--target-mode",
            "masked_features",
            "--lambda-edge",
            "0.01",
            "--omega-end",
            "0.2",
            "--out",
            "x.json",
        ],
        p,
    ));
    let e = load_explanation(&p.join("x.json")).unwrap();
    assert_eq!(e.loss_trajectory.len(), 40);
    assert_eq!(e.kept_nodes.len(), 3);
    assert_eq!(e.feature_scores.len(), 6);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("x.json")).unwrap()).unwrap();
    for key in ["edge_scores", "feature_scores", "kept_edges", "kept_nodes", "kept_features", "loss_trajectory"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["provenance"]["run_config"]["target_mode"], "masked_features");
}

#[test]
fn benchmark_is_byte_identical_and_report_renders() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let args = |out: &'static str| {
        [
            "benchmark",
            "--repeats",
            "1",
            "--seed",
            "7",
            "--n",
            "80",
            "--nodes",
            "12",
            "--important",
            "6",
            "--iters",
            "50",
            "--out",
            out,
        ]
    };
    ok(&magnet(&args("a.csv"), p));
    ok(&magnet(&args("b.csv"), p));
    let a = std::fs::read(p.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(p.join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("setting,n,nodes,important,method,metric,mean,sd,repeats"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("1,80,12,6,magnet,accuracy,"));
    assert!(rows.iter().all(|r| r.ends_with(",0,1")), "single repetition has sd 0: {rows:?}");
    assert!(p.join("a.provenance.json").exists());

    let out = magnet(&["report", "--data", "a.csv", "--out", "r.svg"], p);
    ok(&out);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.starts_with("setting"));
    assert_eq!(table.lines().count(), 6);
    let svg = std::fs::read_to_string(p.join("r.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("recovery_rate"));
}

#[test]
fn benchmark_to_stdout_with_workers() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "benchmark",
        "--repeats",
        "3",
        "--seed",
        "1",
        "--n",
        "60",
        "--nodes",
        "10",
        "--important",
        "4",
        "--iters",
        "20",
        "--baseline",
        "gcn",
    ];
    let one = magnet(&args, dir.path());
    ok(&one);
    let three = Command::new(env!("CARGO_BIN_EXE_magnet")).args(args).env("MAGNET_THREADS", "3").output().unwrap();
    ok(&three);
    assert_eq!(one.stdout, three.stdout);
    assert!(String::from_utf8_lossy(&one.stdout).contains("gcn,accuracy"));
}

#[test]
fn validation_errors_exit_2_and_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cases: [(&[&str], &str); 6] = [
        (&["generate", "--setting", "3", "--seed", "1", "--out", "x.json"], "--setting"),
        (&["generate", "--important", "30", "--nodes", "30", "--seed", "1", "--out", "x.json"], "--important"),
        (&["generate", "--setting", "2", "--feat-dim", "2", "--seed", "1", "--out", "x.json"], "--feat-dim"),
        (&["benchmark", "--split", "1.5", "--seed", "1"], "--split"),
        (&["benchmark", "--omega-start", "0.1", "--omega-end", "1", "--seed", "1"], "--omega-end"),
        (&["train", "--data", "d.json", "--out", "m.json"], "--seed"),
    ];
    for (args, flag) in cases {
        let out = magnet(args, p);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).contains(flag), "{args:?} should mention {flag}: {}", stderr(&out));
    }
    let out = Command::new(env!("CARGO_BIN_EXE_magnet"))
        .args(["benchmark", "--seed", "1", "--repeats", "1"])
        .env("MAGNET_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("MAGNET_THREADS"));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = magnet(&["evaluate", "--data", "missing.json", "--model", "m.json"], p);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(p.join("bad.json"), "{\"schema_version\": 1, \"n_nodes\": 3").unwrap();
    let out = magnet(&["train", "--data", "bad.json", "--seed", "1", "--out", "m.json"], p);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("schema error"), "{}", stderr(&out));

    std::fs::write(p.join("old.json"), "{\"schema_version\": 9}").unwrap();
    let out = magnet(&["train", "--data", "old.json", "--seed", "1", "--out", "m.json"], p);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("version"), "{}", stderr(&out));
}
