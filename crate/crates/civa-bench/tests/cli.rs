use std::fs;
use std::path::Path;
use std::process::Command;

use civa_bench::report;

fn bench(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_civa-bench")).args(args).output().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(
        &path,
        format!(
            "seed = 5\nthreads = 1\ntiming = \"omit\"\n{extra}\n[hybrid]\nn = 4\nk = 3\nv = 1200\nm = 2\n[solver]\nmax_iters = 200\n"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_then_run_matches_a_single_point_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let sim = dir.path().join("sim");
    let out = bench(&["simulate", "--config", &cfg, "--out", sim.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let run_dir = dir.path().join("run");
    let out = bench(&[
        "run", "--config", &cfg, "--input", sim.to_str().unwrap(), "--variant", "ar-civa", "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (single, _) = report::read_run_report(&run_dir.join("report.jsonl")).unwrap();

    let sweep_dir = dir.path().join("sweep");
    let out = bench(&["sweep", "--config", &cfg, "--variant", "ar-civa", "--out", sweep_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (swept, _) =
        report::read_run_report(&sweep_dir.join("reports").join("single-run0-ar-civa.jsonl")).unwrap();
    assert_eq!(single.joint_isi, swept.joint_isi);
    assert_eq!(single.sf, swept.sf);
    assert_eq!(single.final_objective, swept.final_objective);
    assert_eq!(single.seed, swept.seed);

    let summary = fs::read_to_string(sweep_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);

    let w = run_dir.join("W.ivamat");
    let out = bench(&["metrics", "--mixing", sim.join("mixing.ivamat").to_str().unwrap(), "--w", w.to_str().unwrap(), "--w", w.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["joint_isi"][0].as_f64(), single.joint_isi);
    assert!(v["cross_joint_isi"][0].as_f64().unwrap() < 1e-12);
}

#[test]
fn overrides_reach_the_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("o");
    let out = bench(&[
        "sweep", "--config", &cfg, "--variant", "ar-civa", "--gamma", "20", "--mu-max", "3", "--eta0", "0.05",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (r, _) = report::read_run_report(&out_dir.join("reports").join("single-run0-ar-civa.jsonl")).unwrap();
    assert_eq!(r.solver.eta0, 0.05);
    let text = serde_json::to_string(&r.method).unwrap();
    assert!(text.contains("\"gamma\":20.0") && text.contains("\"mu_max\":3.0"), "{text}");

    let out = bench(&["sweep", "--config", &cfg, "--variant", "tf-civa", "--rho", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = bench(&["sweep", "--config", &cfg, "--gamma", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_rejects_zero_tolerance_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"hybrid": {"n": 4, "k": 3, "v": 500, "m": 2}, "solver": {"tol": 0.0}}"#).unwrap();
    let out = bench(&["verify", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config validation") && err.contains("tol"), "{err}");
    assert!(out.stdout.is_empty());
}
