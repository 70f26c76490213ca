use std::path::{Path, PathBuf};
use std::process::Command;

use chernoff_lab::output::sha256_hex;
use tempfile::TempDir;

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lab"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

/// Runs `lab <cmd>` on an inline config; returns (exit code, stdout + stderr, output dir).
fn run(cmd: &str, config: &str, extra: &[&str]) -> (i32, String, TempDir) {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), config);
    let out = dir.path().join("out");
    let o = lab()
        .args([cmd, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .output()
        .unwrap();
    let text = format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    (o.status.code().unwrap(), text, dir)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.into_iter().map(|r| r[i].clone()).collect()
}

fn reals(path: &Path, name: &str) -> Vec<f64> {
    column(path, name).iter().map(|v| v.parse().unwrap()).collect()
}

#[test]
fn identity_kernel_has_no_curvature() {
    let cfg = r#"{ "model": { "points": [0, 1, 3], "rule": { "name": "identity" } }, "horizon": 5 }"#;
    let (code, text, dir) = run("curvature", cfg, &[]);
    assert_eq!(code, 0, "{text}");
    let csv = dir.path().join("out/curvature.csv");
    assert!(reals(&csv, "kappa").iter().all(|&k| k == 0.0));
    assert!(reals(&csv, "sigma").iter().all(|&s| (s - 1.0).abs() < 1e-12));
}

#[test]
fn one_step_mixing_has_full_curvature() {
    let cfg = r#"{ "model": { "points": [0, 1, 3], "rule": { "name": "mixing", "pi": [0.2, 0.5, 0.3] } }, "horizon": 5 }"#;
    let (code, text, dir) = run("curvature", cfg, &[]);
    assert_eq!(code, 0, "{text}");
    let csv = dir.path().join("out/curvature.csv");
    assert!(reals(&csv, "kappa").iter().all(|&k| k == 1.0));
    assert!(reals(&csv, "sigma").iter().all(|&s| s.abs() < 1e-12));
}

#[test]
fn dyadic_grid_curvature_is_one_half() {
    let cfg = r#"{ "model": { "rule": { "name": "dyadic", "level": 5, "diameter": 32 } }, "horizon": 10 }"#;
    let (code, text, dir) = run("curvature", cfg, &[]);
    assert_eq!(code, 0, "{text}");
    assert!(reals(&dir.path().join("out/curvature.csv"), "kappa").iter().all(|&k| k == 0.5));
    // constant κ_t = 1/2 gives 1 + Σ 2^{-j} = 2 − 2^{-T} as the worst sum
    let eff = reals(&dir.path().join("out/aggregates.csv"), "kappa_eff")[0];
    assert!((eff - 1.0 / (2.0 - 2f64.powi(-10))).abs() < 1e-15, "{eff}");
}

#[test]
fn constant_observable_never_crosses() {
    let cfg = r#"{
        "model": { "rule": { "name": "random-lazy", "size": 3, "seed": 4 } },
        "observable": { "kind": "constant", "matrix": [[1, 0.5], [0.5, -2]] },
        "simulate": { "n": 50, "reps": 2000, "eps": [0.001, 0.1, 1.0] }
    }"#;
    let (code, text, dir) = run("simulate", cfg, &[]);
    assert_eq!(code, 0, "{text}");
    let csv = dir.path().join("out/tail.csv");
    assert!(column(&csv, "count").iter().all(|c| c == "0"));
    for name in ["bound_curv", "bound_spec", "bound_olv_pt", "bound_olv_avg"] {
        assert!(column(&csv, name).iter().all(|v| v.is_empty() || v.parse::<f64>().unwrap() >= 0.0));
    }
}

#[test]
fn empty_event_flag_starts_past_the_oscillation() {
    let cfg = r#"{ "bounds": {
        "n": 500,
        "params": { "m": 2, "lipschitz": 1, "diameter": 2, "delta_op": 1.5, "delta_f": 2, "kappa": 0.25, "lambda": 0.3 },
        "eps_sweep": { "from": 0.1, "to": 2.5, "points": 25 }
    } }"#;
    let (code, text, dir) = run("bounds", cfg, &[]);
    assert_eq!(code, 0, "{text}");
    let csv = dir.path().join("out/bounds.csv");
    let eps = reals(&csv, "eps");
    for name in ["empty_spec", "empty_curv_diam"] {
        for (e, flag) in eps.iter().zip(column(&csv, name)) {
            assert_eq!(flag == "1", *e > 1.5, "{name} at eps = {e}");
        }
    }
    for (e, flag) in eps.iter().zip(column(&csv, "empty_curv")) {
        assert_eq!(flag == "1", *e > 2.0, "curv at eps = {e}");
    }
    // no sigma_inf given: the Ollivier columns stay empty
    assert!(column(&csv, "bound_ollivier_point").iter().all(String::is_empty));
}

#[test]
fn shipped_verify_config_passes() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/verify.json");
    let dir = TempDir::new().unwrap();
    let o = lab()
        .args(["verify", "--config", root.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(column(&dir.path().join("verify.csv"), "passed").iter().all(|p| p == "1"));
}

#[test]
fn manifest_hashes_match_outputs() {
    let cfg = r#"{ "seed": 3, "model": { "points": [0, 1], "kernels": [[[0.9, 0.1], [0.2, 0.8]]] },
                  "observable": { "kind": "scalar", "values": [1, -1] },
                  "simulate": { "n": 20, "reps": 500, "grid_points": 4 } }"#;
    let (code, text, dir) = run("simulate", cfg, &["--threads", "2"]);
    assert_eq!(code, 0, "{text}");
    let out = dir.path().join("out");
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["threads"], 2);
    assert_eq!(manifest["config_sha256"], sha256_hex(cfg.as_bytes()));
    let files = manifest["outputs"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    for f in files {
        let bytes = std::fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    let (header, _) = read_csv(&out.join("tail.csv"));
    assert_eq!(&header[..10], ["eps", "count", "N", "p_hat", "ci_lo", "ci_hi", "bound_curv", "bound_spec", "bound_olv_pt", "bound_olv_avg"]);
}

#[test]
fn seed_flag_overrides_config() {
    let cfg = r#"{ "seed": 3, "model": { "points": [0, 1], "kernels": [[[0.5, 0.5], [0.5, 0.5]]] },
                  "observable": { "kind": "scalar", "values": [1, -1] },
                  "simulate": { "n": 10, "reps": 200, "eps": [0.5] } }"#;
    let (_, _, dir) = run("simulate", cfg, &["--seed", "99"]);
    let manifest = std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 99"));
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), r#"{ "model": { "points": [0, 1], "rule": { "name": "identity" } }, "horizon": 2 }"#);
    let target = dir.path().join("from-env");
    let o = lab()
        .args(["curvature", "--config", path.to_str().unwrap()])
        .env("LAB_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("curvature.csv").exists() && target.join("manifest.json").exists());
}

#[test]
fn config_errors_exit_with_two_and_locate_the_problem() {
    let cases = [
        (r#"{ "horizon": 3, }"#, "line 1"),
        (r#"{ "horizon": 3, "modle": {} }"#, "modle"),
        (r#"{ "model": { "points": [0, 1], "rule": { "name": "mixing", "pi": "x" } }, "horizon": 2 }"#, "model.rule"),
        (
            r#"{ "model": { "points": [0, 1], "kernels": [[[0.5, 0.5], [0.7, 0.2]]] }, "horizon": 2 }"#,
            "model.kernels[0]",
        ),
        (
            r#"{ "model": { "points": [0, 1], "rule": { "name": "identity" } }, "horizon": 2,
                 "observable": { "kind": "constant", "matrix": [[1, 2], [0, 1]] } }"#,
            "observable.matrix",
        ),
    ];
    for (cfg, needle) in cases {
        let (code, text, _) = run("curvature", cfg, &[]);
        assert_eq!(code, 2, "{cfg}: {text}");
        assert!(text.contains(needle), "expected `{needle}` in: {text}");
    }
}

#[test]
fn elo_step_size_must_respect_environment_contraction() {
    let cfg = r#"{ "elo": { "n": 4, "M": 2, "eta": 0.15, "nu": 0.2, "env": { "kind": "ar-contract", "params": { "noise_radius": 0.1 } },
                   "T": 100, "T0": 10, "reps": 4, "eps": 0.5, "delta": 0.1, "C_sweep": [1] } }"#;
    let (code, text, _) = run("elo", cfg, &[]);
    assert_eq!(code, 2);
    assert!(text.contains("exceeds nu/2"), "{text}");
}

#[test]
fn elo_run_writes_tracking_tables_and_match_log() {
    let cfg = r#"{ "elo": { "n": 4, "M": 2, "eta": 0.1, "nu": 0.2,
                   "env": { "kind": "ar-contract", "params": { "noise_radius": 0.1 } },
                   "T": 200, "T0": 50, "reps": 16, "seed": 5, "eps": 0.5, "delta": 0.1,
                   "C_sweep": [1e-9, 1], "match_log": 3 } }"#;
    let (code, text, dir) = run("elo", cfg, &[]);
    assert_eq!(code, 0, "{text}");
    let out = dir.path().join("out");
    let (header, rows) = read_csv(&out.join("elo_steps.csv"));
    assert_eq!(header, ["t", "mean_err2", "lemma_rhs", "min_ci", "max_ci"]);
    assert_eq!(rows.len(), 200);
    assert_eq!(read_csv(&out.join("elo_windows.csv")).1.len(), 2);
    let (_, log) = read_csv(&out.join("matches.csv"));
    assert_eq!(log.len(), 200);
    assert!(log.iter().all(|r| r[1] != r[2]));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("elo_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["C_sweep"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_command_is_a_usage_error() {
    let o = lab().arg("plot").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
