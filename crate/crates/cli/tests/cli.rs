use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_qsflow");

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn load(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(example(name)).unwrap()).unwrap()
}

struct Run {
    code: i32,
    stdout: Vec<u8>,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.stdout).expect("stdout is JSON")
    }
}

fn run_path(cmd: &str, config: &Path, extra: &[&str]) -> Run {
    let out = Command::new(BIN).arg(cmd).arg("--config").arg(config).args(extra).output().unwrap();
    Run {
        code: out.status.code().expect("exited"),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn run(cmd: &str, config: &Value, extra: &[&str]) -> Run {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_vec(config).unwrap()).unwrap();
    run_path(cmd, &path, extra)
}

fn real(x: f64) -> Value {
    json!([[[x, 0.0]]])
}

/// `d = 1` model with one noise mode and no Kraus terms: `Θ_t(I) = e^{−2κt}`.
fn scalar_damped(kappa: f64) -> Value {
    json!({ "dim": 1, "multiplicity": 1, "K": real(kappa), "K_list": [real(0.0)], "kraus": [] })
}

fn f64_at(v: &Value, pointer: &str) -> f64 {
    v.pointer(pointer).and_then(Value::as_f64).unwrap_or_else(|| panic!("no number at {pointer}"))
}

#[test]
fn verify_algebra_passes_and_reports_residuals() {
    let r = run_path("verify-algebra", &example("verify-algebra.json"), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc = r.json();
    assert_eq!(doc["pass"], json!(true));
    assert!(f64_at(&doc, "/report/max_axiom_residual") < 1e-13);
    assert_eq!(doc["report"]["axioms"]["table_identities_exact"], json!(true));
    assert_eq!(doc["manifest"]["command"], json!("verify-algebra"));
    assert_eq!(doc["manifest"]["seed"], json!(7));
    // defaults are echoed
    assert_eq!(doc["manifest"]["config"]["weyl_samples"], json!(200));
    assert_eq!(doc["manifest"]["config"]["inject_fault"], json!(false));
}

#[test]
fn verify_algebra_rejects_zero_samples() {
    let mut cfg = load("verify-algebra.json");
    cfg["samples"] = json!(0);
    let r = run("verify-algebra", &cfg, &[]);
    assert_eq!(r.code, 2);
    assert!(r.stdout.is_empty());
}

#[test]
fn injected_fault_is_detected() {
    let mut cfg = load("verify-algebra.json");
    cfg["inject_fault"] = json!(true);
    let r = run("verify-algebra", &cfg, &[]);
    assert_eq!(r.code, 1);
    assert_eq!(r.json()["report"]["axioms"]["table_identities_exact"], json!(false));
}

#[test]
fn config_errors_exit_2() {
    let mut unknown = load("germ-amplitude-damping.json");
    unknown["colour"] = json!("blue");
    assert_eq!(run("germ", &unknown, &[]).code, 2);

    let mut nested = load("germ-amplitude-damping.json");
    nested["model"]["extra"] = json!(1);
    assert_eq!(run("germ", &nested, &[]).code, 2);

    let mut future = load("germ-amplitude-damping.json");
    future["schema_version"] = json!(2);
    assert_eq!(run("germ", &future, &[]).code, 2);

    let mut missing = load("germ-amplitude-damping.json");
    missing.as_object_mut().unwrap().remove("schema_version");
    assert_eq!(run("germ", &missing, &[]).code, 2);

    let mut mismatched = load("germ-amplitude-damping.json");
    mismatched["model"]["dim"] = json!(3);
    assert_eq!(run("germ", &mismatched, &[]).code, 2);

    let dir = TempDir::new().unwrap();
    let garbage = dir.path().join("bad.json");
    std::fs::write(&garbage, "{ not json").unwrap();
    assert_eq!(run_path("germ", &garbage, &[]).code, 2);
    assert_eq!(run_path("germ", &dir.path().join("absent.json"), &[]).code, 2);
}

#[test]
fn flag_errors_exit_2() {
    let germ = example("germ-amplitude-damping.json");
    assert_eq!(run_path("germ", &germ, &["--seed", "3"]).code, 2);
    assert_eq!(run_path("germ", &germ, &["--format", "csv"]).code, 2);
    assert_eq!(run_path("germ", &germ, &["--format", "xml"]).code, 2);
    assert_eq!(run_path("simulate", &example("simulate-jump-absorbing.json"), &["--threads", "0"]).code, 2);
    let out = Command::new(BIN).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(BIN).arg("germ").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn germ_amplitude_damping_is_filtering() {
    let r = run_path("germ", &example("germ-amplitude-damping.json"), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc = r.json();
    assert_eq!(doc["report"]["dissipativity"]["class"], json!("filtering"));
    assert_eq!(doc["report"]["ccp"]["pass"], json!(true));
    assert_eq!(doc["report"]["germ_blocks"].as_array().unwrap().len(), 4);
    assert!(f64_at(&doc, "/report/gauge_fixed/max_vacuum_expectation") <= 1e-12);
    assert!(doc["manifest"].get("seed").is_none());
}

#[test]
fn transpose_perturbation_fails_ccp() {
    let mut cfg = load("germ-amplitude-damping.json");
    cfg["perturb"] = json!("transpose");
    let r = run("germ", &cfg, &[]);
    assert_eq!(r.code, 1);
    let doc = r.json();
    assert_eq!(doc["report"]["ccp"]["pass"], json!(false));
    assert!(f64_at(&doc, "/report/ccp/min_eig") < -1e-8);
    assert!(doc["report"]["ccp_witness"].is_array());
}

#[test]
fn empty_kraus_zero_k_is_trivially_filtering() {
    let zero2 = json!([[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]);
    let cfg = json!({
        "schema_version": 1,
        "model": { "dim": 2, "multiplicity": 1, "K": zero2, "K_list": [zero2], "kraus": [] }
    });
    let r = run("germ", &cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json()["report"]["dissipativity"]["class"], json!("filtering"));
}

#[test]
fn dilate_round_trip() {
    let r = run_path("dilate", &example("dilate-amplitude-damping.json"), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc = r.json();
    assert!(f64_at(&doc, "/report/round_trip_distance") <= 1e-10);
    assert_eq!(doc["report"]["kraus_rank"], json!(1));
    assert_eq!(doc["report"]["unitarity"]["pass"], json!(true));
}

#[test]
fn semigroup_csv_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("theta.csv");
    let r = run_path(
        "semigroup",
        &example("semigroup-amplitude-damping.json"),
        &["--format", "csv", "--out", out.to_str().unwrap()],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("t,min_eig_theta_identity,conservativity_residual,theta_identity_re_00"));
    assert_eq!(lines.count(), 3);
    let sidecar: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("theta.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(sidecar["manifest"]["format"], json!("csv"));
    assert_eq!(sidecar["report"]["semigroup_law_pass"], json!(true));
    assert_eq!(sidecar["report"]["conservative"], json!(true));
}

#[test]
fn semigroup_damped_scalar_matches_closed_form() {
    let cfg = json!({ "schema_version": 1, "model": scalar_damped(0.4), "times": [0.5, 1.0, 2.0], "method": "expm" });
    let r = run("semigroup", &cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc = r.json();
    for (i, t) in [0.5f64, 1.0, 2.0].into_iter().enumerate() {
        let got = f64_at(&doc, &format!("/report/times/{i}/min_eig"));
        assert!((got - (-0.8 * t).exp()).abs() < 1e-12);
    }
    assert_eq!(doc["report"]["monotone"], json!(true));
}

#[test]
fn genfun_zero_family_gives_normalization() {
    let cfg = json!({
        "schema_version": 1,
        "model": scalar_damped(0.3),
        "t": 1.0,
        "family": [{ "m": 1, "horizon": 1.0, "breakpoints": [0.0, 1.0],
                     "values": [{ "m": 1, "exchange": real(0.0), "creation": real(0.0),
                                  "annihilation": real(0.0), "time": [0.0, 0.0] }] }],
        "etas": [[[1.0, 0.0]]]
    });
    let r = run("genfun", &cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc = r.json();
    let entry = f64_at(&doc, "/report/kernel/entries/0/0/0");
    assert!((entry - (-0.6f64).exp()).abs() < 1e-9, "{entry}");
}

#[test]
fn genfun_wiener_family_is_psd() {
    let r = run_path("genfun", &example("genfun-wiener.json"), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc = r.json();
    assert!(f64_at(&doc, "/report/kernel/min_eig") >= -1e-8);
    assert!(f64_at(&doc, "/report/kernel/monotone_min_eig") >= -1e-8);
    assert_eq!(doc["report"]["dissipativity"]["class"], json!("subfiltering"));
}

#[test]
fn simulate_filtering_diffusive_is_a_martingale() {
    let r = run_path("simulate", &example("simulate-diffusive-filtering.json"), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc = r.json();
    let rec = &doc["report"]["stats"]["records"][1];
    let (mean, se) = (f64_at(rec, "/mean_norm2"), f64_at(rec, "/stderr_norm2"));
    assert!((mean - 1.0).abs() <= 4.0 * se, "{mean} ± {se}");
    assert_eq!(doc["report"]["martingale"]["test"], json!("martingale"));
    assert_eq!(doc["manifest"]["rng"].as_str().map(|s| s.starts_with("ChaCha20")), Some(true));
}

#[test]
fn simulate_noise_free_columns_are_deterministic() {
    let mut cfg = load("simulate-diffusive-filtering.json");
    cfg["trajectory"]["L"] = real(0.0);
    cfg["trajectory"]["n_traj"] = json!(50);
    let r = run("simulate", &cfg, &["--format", "csv"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = String::from_utf8(r.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for (row, steps) in rows.iter().zip([500, 1000]) {
        // Euler step multiplies ψ by 1 − hK each step
        let expected = (1.0f64 - 0.0005).powi(2 * steps);
        let mean: f64 = row[1].parse().unwrap();
        let se: f64 = row[2].parse().unwrap();
        assert!((mean - expected).abs() <= 1e-12 * expected, "{mean} vs {expected}");
        assert_eq!(se, 0.0);
    }
}

#[test]
fn simulate_absorbing_jump_survival() {
    let r = run_path("simulate", &example("simulate-jump-absorbing.json"), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rec = &r.json()["report"]["stats"]["records"][1];
    let (frac, se) = (f64_at(rec, "/survival_frac"), f64_at(rec, "/survival_stderr"));
    assert!((frac - (-1.0f64).exp()).abs() <= 4.0 * se, "{frac} ± {se}");
}

#[test]
fn simulate_rejects_bad_trajectory_config() {
    let mut cfg = load("simulate-jump-absorbing.json");
    cfg["trajectory"]["L"] = real(1.0);
    assert_eq!(run("simulate", &cfg, &[]).code, 2);
    let mut cfg = load("simulate-diffusive-filtering.json");
    cfg["trajectory"]["h"] = json!(2.0);
    assert_eq!(run("simulate", &cfg, &[]).code, 2);
}

#[test]
fn crosscheck_amplitude_damping_passes() {
    let r = run_path("crosscheck", &example("crosscheck-amplitude-damping.json"), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let checks = r.json()["report"]["checks"].as_array().unwrap().clone();
    assert_eq!(checks.len(), 5);
    assert!(checks.iter().all(|c| c["pass"] == json!(true)));
}

#[test]
fn crosscheck_zero_model_residuals_are_exactly_zero() {
    let zero2 = json!([[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]);
    let cfg = json!({
        "schema_version": 1,
        "model": { "dim": 2, "multiplicity": 1, "K": zero2, "K_list": [zero2], "kraus": [] },
        "trajectory": { "n_traj": 500 }
    });
    let r = run("crosscheck", &cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for c in r.json()["report"]["checks"].as_array().unwrap() {
        assert_eq!(c["residual"], json!(0.0), "{c}");
    }
}

#[test]
fn crosscheck_coarse_step_fails() {
    let mut cfg = load("crosscheck-amplitude-damping.json");
    let rate: f64 = 4.0;
    let l = json!([[[0.0, 0.0], [rate.sqrt(), 0.0]], [[0.0, 0.0], [0.0, 0.0]]]);
    cfg["model"]["K"] = json!([[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [rate / 2.0, 0.0]]]);
    cfg["model"]["K_list"] = json!([l]);
    cfg["model"]["kraus"][0]["plus"] = l;
    cfg["t"] = json!(0.5);
    cfg["trajectory"] = json!({ "h": 0.1 });
    let r = run("crosscheck", &cfg, &[]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    let doc = r.json();
    let checks = doc["report"]["checks"].as_array().unwrap();
    let failed: Vec<&str> =
        checks.iter().filter(|c| c["pass"] == json!(false)).map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(failed, ["trajectory_vs_master_equation"]);
}

#[test]
fn seeded_output_is_reproducible_across_runs_and_threads() {
    let cases = [
        ("verify-algebra", "verify-algebra.json"),
        ("weyl-check", "weyl-check.json"),
        ("simulate", "simulate-jump-absorbing.json"),
    ];
    for (cmd, file) in cases {
        let path = example(file);
        let a = run_path(cmd, &path, &[]);
        let b = run_path(cmd, &path, &[]);
        let one = run_path(cmd, &path, &["--threads", "1"]);
        let four = run_path(cmd, &path, &["--threads", "4"]);
        assert_eq!(a.code, 0, "{cmd}: {}", a.stderr);
        assert_eq!(a.stdout, b.stdout, "{cmd}");
        assert_eq!(a.stdout, one.stdout, "{cmd}");
        assert_eq!(a.stdout, four.stdout, "{cmd}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let path = example("simulate-jump-absorbing.json");
    let base = run_path("simulate", &path, &[]);
    let moved = run_path("simulate", &path, &["--seed", "99"]);
    assert_eq!(moved.code, 0);
    let doc = moved.json();
    assert_eq!(doc["manifest"]["seed"], json!(99));
    assert_eq!(doc["manifest"]["config"]["trajectory"]["seed"], json!(99));
    assert_ne!(base.stdout, moved.stdout);

    let mut cfg = load("simulate-jump-absorbing.json");
    cfg["trajectory"]["seed"] = json!(99);
    assert_eq!(run("simulate", &cfg, &[]).stdout, moved.stdout);
}
