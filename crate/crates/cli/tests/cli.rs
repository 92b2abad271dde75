use std::path::Path;
use std::process::{Command, Output};

fn metacgnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metacgnn"))
        .args(args)
        .current_dir(cwd)
        .env_remove("METACGNN_DATA_ROOT")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bad_arguments_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(metacgnn(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(metacgnn(&["gen", "--family", "none", "--out", "x"], dir.path()).status.code(), Some(2));
    assert_eq!(metacgnn(&["bench", "--set", "epochs"], dir.path()).status.code(), Some(2));
    assert_eq!(metacgnn(&["bench", "--set", "unknown_key=1"], dir.path()).status.code(), Some(2));
    assert_eq!(metacgnn(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = metacgnn(&["baseline", "--method", "reci", "--db", "absent"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_train_score_baseline_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = metacgnn(&["gen", "--family", "multi", "--n-pairs", "4", "--n-points", "30", "--seed", "2", "--out", "db"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(p.join("db/manifest.json").exists());

    let o = metacgnn(&["baseline", "--method", "igci", "--db", "db"], p);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 5);
    assert!(out.lines().last().unwrap().starts_with("accuracy "));

    let o = metacgnn(
        &["train", "--db", "db", "--out", "models", "--epochs", "3", "--ensemble-size", "2", "--decoder-hidden", "5"],
        p,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(p.join("models/member_001.ckpt").exists());
    assert_eq!(std::fs::read_to_string(p.join("models/progress.jsonl")).unwrap().lines().count(), 6);

    let o = metacgnn(&["score", "--models", "models", "--file", "db/multi_0000.txt", "--seed", "1"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let s = v["s"].as_f64().unwrap();
    assert!((s - (v["m_yx"].as_f64().unwrap() - v["m_xy"].as_f64().unwrap())).abs() < 1e-15);
    assert!(["x_to_y", "y_to_x", "tie"].contains(&v["direction"].as_str().unwrap()));
}

#[test]
fn bench_runs_from_config_file_and_check_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("bench.cfg"),
        "n_train = 2\nn_test = 2\nn_points = 30\nepochs = 2\nensemble_size = 1\ndecoder_hidden = 5\n\
         repetition_seeds = 1\nmethods = meta, reci\nplots = false\n",
    )
    .unwrap();
    let o = metacgnn(&["bench", "--config", "bench.cfg", "--output-dir", "out"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("meta"));
    let o = metacgnn(&["bench", "--check", "out/report.json"], p);
    assert!(o.status.success());
    assert!(stdout(&o).contains("reci"));
}

#[test]
fn data_root_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let o = metacgnn(&["gen", "--n-pairs", "3", "--n-points", "20", "--out", root.join("db").to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_metacgnn"))
        .args(["baseline", "--method", "cds", "--db", "db"])
        .current_dir(dir.path())
        .env("METACGNN_DATA_ROOT", &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
