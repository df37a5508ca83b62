use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sis"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sis(args);
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

fn quick_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("cfg.json");
    fs::write(
        &path,
        format!(r#"{{"batch": 4, "sample_points": 60, "val_every": 1, "eval_points": [60] {extra}}}"#),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn synthetic_train_eval_infer_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-synthetic", "--count", "8", "--level", "2", "--seed", "1", "--out", p(&data)]);
    assert!(data.join("manifest.json").exists());

    let cfg = quick_config(dir.path(), "");
    let run = dir.path().join("run");
    ok(&["train-superres", "--config", &cfg, "--epochs", "1", "--data", p(&data), "--out", p(&run)]);
    assert!(run.join("model.sis").exists());
    assert!(run.join("eval_60.csv").exists());

    let eval = dir.path().join("eval");
    ok(&["eval", "--config", &cfg, "--checkpoint", p(&run.join("model.sis")), "--out", p(&eval)]);
    let a = fs::read_to_string(eval.join("eval_60.json")).unwrap();
    let b = fs::read_to_string(run.join("eval_60.json")).unwrap();
    let mean = |s: &str| serde_json::from_str::<serde_json::Value>(s).unwrap()["mean"].as_f64().unwrap();
    assert_eq!(mean(&a), mean(&b));

    let obj = dir.path().join("up.obj");
    ok(&[
        "infer",
        "--config",
        &cfg,
        "--checkpoint",
        p(&run.join("model.sis")),
        "--input",
        p(&data.join("meshes/mesh_0000.obj")),
        "--resolution",
        "icosphere:3",
        "--out",
        p(&obj),
    ]);
    let text = fs::read_to_string(&obj).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 642);

    let bci = dir.path().join("bci");
    ok(&["bci", "--data", p(&data), "--points", "100", "--out", p(&bci)]);
    let csv = fs::read_to_string(bci.join("bci_100.csv")).unwrap();
    assert!(csv.starts_with("index,path,error"));
}

#[test]
fn param_writes_embedding_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-synthetic", "--count", "2", "--level", "2", "--out", p(&data)]);
    let emb = dir.path().join("emb.ply");
    ok(&["param", "--in", p(&data.join("meshes/mesh_0001.obj")), "--out", p(&emb)]);
    assert!(fs::read_to_string(&emb).unwrap().starts_with("ply"));
    let side = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|f| f.extension().is_some_and(|e| e == "json"))
        .expect("sidecar written");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(side).unwrap()).unwrap();
    assert!(v["centroid_norm"].as_f64().unwrap() < 1e-3);
}

#[test]
fn fit_reports_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-synthetic", "--count", "2", "--level", "1", "--out", p(&data)]);
    let cfg = dir.path().join("fit.json");
    fs::write(&cfg, r#"{"task": "fit", "fit_steps": 40}"#).unwrap();
    let out = dir.path().join("fit");
    ok(&["fit", "--config", p(&cfg), "--in", p(&data.join("meshes/mesh_0000.obj")), "--out", p(&out)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert!(v["mean_error"].as_f64().unwrap().is_finite());
    assert!(out.join("fitted.obj").exists());
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"latent": 32}"#).unwrap();
    let out = sis(&["gen-synthetic", "--config", p(&bad), "--count", "2", "--out", p(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&bad, r#"{"no_such_key": 1}"#).unwrap();
    let out = sis(&["bci", "--config", p(&bad), "--data", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = sis(&["bci", "--data", p(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = sis(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn coordinate_outside_unit_square_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-synthetic", "--count", "6", "--level", "1", "--out", p(&data)]);
    let run = dir.path().join("run");
    let cfg = quick_config(dir.path(), "");
    ok(&["train-recon", "--config", &cfg, "--epochs", "1", "--data", p(&data), "--out", p(&run)]);
    let grid = dir.path().join("grid.txt");
    fs::write(&grid, "0.2 0.4\n0.5 -0.1\n").unwrap();
    let out = sis(&[
        "infer",
        "--checkpoint",
        p(&run.join("model.sis")),
        "--input",
        p(&data.join("meshes/mesh_0000.obj")),
        "--resolution",
        p(&grid),
        "--out",
        p(&dir.path().join("o.obj")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-synthetic", "--count", "6", "--level", "1", "--out", p(&data)]);
    let cfg = quick_config(dir.path(), r#", "lr": 1e30"#);
    let out = sis(&["train-recon", "--config", &cfg, "--epochs", "3", "--data", p(&data), "--out", p(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
