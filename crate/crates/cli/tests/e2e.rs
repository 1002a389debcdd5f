use std::path::Path;
use std::process::{Command, Output};

fn dare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dare")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dare(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn err_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).lines().next().unwrap_or("").to_string()
}

const TINY: &str = r#"{
  "model": {"field": {"spatial_res": 8, "temporal_res": 4, "app_ranks": [2, 2, 2], "den_ranks": [1, 1, 1], "feature_dim": 4},
            "render": {"n_samples": 16}, "mlp_hidden": 8},
  "train": {"iterations": 12, "batch_rays": 64, "upsample": [{"iter": 6, "res": 12}], "emptiness_iters": [8], "emptiness_res": 8}
}"#;

fn setup(dir: &Path, scene: &str, frames: &str) -> (String, String) {
    let data = dir.join("data");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, TINY).unwrap();
    ok(&["generate", "--scene", scene, "--out", data.to_str().unwrap(), "--size", "12", "--frames", frames]);
    (data.to_str().unwrap().to_string(), cfg.to_str().unwrap().to_string())
}

#[test]
fn every_subcommand_on_a_tiny_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (data, cfg) = setup(d, "moving-edge", "3");
    let p = |n: &str| d.join(n).to_str().unwrap().to_string();
    ok(&[
        "--threads", "2", "fit", "--data", &data, "--config", &cfg, "--rep", "dare", "--wavelet", "nearsymb",
        "--lambda-mask", "0.01", "--out", &p("m.dare"), "--log", &p("m.csv"), "--checkpoint", &p("ck.json"),
    ]);
    let csv = std::fs::read_to_string(p("m.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "iter,loss,photometric,tv,mask,psnr,sparsity,lr");
    assert_eq!(csv.lines().count(), 13);

    let table = ok(&["eval", "--model", &p("m.dare"), "--data", &data]);
    assert!(table.lines().any(|l| l.starts_with("mean") && l.contains("train")));
    assert!(table.lines().any(|l| l.starts_with("mean") && l.contains("test")));

    ok(&["render", "--model", &p("m.dare"), "--data", &data, "--camera", "1", "--time", "0.5", "--out", &p("a.ppm")]);
    ok(&["render", "--model", &p("ck.json"), "--scene", "moving-edge", "--camera", "1", "--time", "0.5", "--out", &p("b.ppm")]);
    let img = std::fs::read(p("a.ppm")).unwrap();
    assert!(img.starts_with(b"P6"));

    ok(&["compress", "--checkpoint", &p("ck.json"), "--out", &p("c.dare")]);
    assert_eq!(std::fs::read(p("c.dare")).unwrap(), std::fs::read(p("m.dare")).unwrap());
    ok(&["decompress", "--model", &p("c.dare"), "--out", &p("d.json")]);
    ok(&["compress", "--checkpoint", &p("d.json"), "--out", &p("e.dare")]);
    assert_eq!(std::fs::read(p("e.dare")).unwrap(), std::fs::read(p("m.dare")).unwrap());
}

#[test]
fn fit_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (data, cfg) = setup(d, "static-blobs", "1");
    let p = |n: &str| d.join(n).to_str().unwrap().to_string();
    for (name, threads) in [("a", "--deterministic"), ("b", "--deterministic")] {
        ok(&[threads, "fit", "--data", &data, "--config", &cfg, "--rep", "dwt", "--seed", "7", "--out", &p(&format!("{name}.dare")), "--log", &p(&format!("{name}.csv"))]);
    }
    assert_eq!(std::fs::read(p("a.dare")).unwrap(), std::fs::read(p("b.dare")).unwrap());
    assert_eq!(std::fs::read(p("a.csv")).unwrap(), std::fs::read(p("b.csv")).unwrap());
}

#[test]
fn bench_reports_perfect_reconstruction() {
    let out = ok(&["bench", "--wavelet", "nearsyma", "--size", "64", "--reps", "3"]);
    let err: f64 = out.lines().find_map(|l| l.strip_prefix("pr_max_error ")).unwrap().parse().unwrap();
    assert!(err <= 1e-9);
    assert!(out.contains("round_trips_per_sec"));
    let out = ok(&["bench", "--wavelet", "daub4", "--size", "32", "--reps", "2"]);
    assert!(out.contains("pr_max_error"));
}

#[test]
fn failures_are_one_line_and_distinct() {
    let out = dare(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(err_line(&out).starts_with("error: usage:"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage:"));

    let out = dare(&["bench", "--wavelet", "nearsyma", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(err_line(&out).starts_with("error: usage:"));

    let out = dare(&["eval", "--model", "/nonexistent/m.dare", "--data", "/nonexistent"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(err_line(&out).starts_with("error: io:"));

    let out = dare(&["bench", "--wavelet", "nosuch"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(err_line(&out).starts_with("error: config:"));

    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (data, _) = setup(d, "static-blobs", "1");
    let bad = d.join("bad.json");
    std::fs::write(&bad, r#"{"train": {"iterations": 1, "learning_rate": 3}}"#).unwrap();
    let out = dare(&["fit", "--data", &data, "--config", bad.to_str().unwrap(), "--out", d.join("x.dare").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(err_line(&out).contains("learning_rate"));

    let junk = d.join("junk.dare");
    std::fs::write(&junk, b"DARE\x01\x00garbage").unwrap();
    let out = dare(&["eval", "--model", junk.to_str().unwrap(), "--data", &data]);
    assert_eq!(out.status.code(), Some(5));
    assert!(err_line(&out).starts_with("error: codec:"));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
}
