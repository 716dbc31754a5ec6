//! End-to-end tests of the command-line runner: exit codes, file layout,
//! and byte-level reproducibility.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_yamabe-lab"))
}

fn read_summary(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("summary.json")).expect("summary exists");
    serde_json::from_str(&text).expect("valid json")
}

#[test]
fn spectrum_reports_kernel_dimension_two_at_the_critical_length() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["spectrum", "--set", "l=1.0", "--set", "grid_n=128"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let doc = read_summary(dir.path());
    assert_eq!(doc["results"]["spectrum"]["kernel_dim"], 2);
    assert_eq!(doc["subcommand"], "spectrum");
    assert!(dir.path().join("spectrum.csv").exists());
    // config and version embedded
    assert_eq!(doc["config"]["grid_n"], "128");
    assert!(doc["version"].as_str().is_some());
}

#[test]
fn exponent_fits_the_quadratic_law_below_the_critical_length() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["exponent", "--set", "l=0.8", "--set", "grid_n=128"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let doc = read_summary(dir.path());
    let gamma = doc["results"]["fit"]["gamma_hat"].as_f64().unwrap();
    let r2 = doc["results"]["fit"]["r2"].as_f64().unwrap();
    assert!(gamma.abs() < 0.05, "gamma_hat {gamma}");
    assert!(r2 > 0.99, "r2 {r2}");
    assert!(dir.path().join("samples.csv").exists());
}

#[test]
fn invalid_config_exits_1_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sub");
    let status = bin()
        .args(["minimize", "--set", "l=-1.0"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(
        !out.exists(),
        "no files may be written on validation errors"
    );
}

#[test]
fn unknown_subcommand_exits_1() {
    let status = bin().arg("frobnicate").status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn unknown_config_key_exits_1() {
    let status = bin()
        .args(["spectrum", "--set", "bogus=1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_2_with_diagnostics() {
    // the superquadratic family needs a degenerate base; l = 0.8 has none
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["superquadratic", "--set", "l=0.8", "--set", "grid_n=64"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let doc = read_summary(dir.path());
    assert!(doc["results"]["error"].as_str().unwrap().contains("kernel"));
}

#[test]
fn identical_config_and_seed_reproduce_byte_identical_csv() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let status = bin()
            .args([
                "exponent",
                "--set",
                "l=0.8",
                "--set",
                "grid_n=64",
                "--seed",
                seed,
            ])
            .arg("--out")
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(dir.path().join("samples.csv")).unwrap()
    };
    let a = run("77");
    let b = run("77");
    assert_eq!(a, b, "same seed must give byte-identical CSV");
    let c = run("78");
    assert_ne!(a, c, "different seed must change the samples");
}

#[test]
fn config_file_plus_override_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, "l = 0.9\ngrid_n = 64\n").unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .arg("spectrum")
        .arg("--config")
        .arg(&cfg)
        .args(["--set", "l=1.0"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let doc = read_summary(&out);
    // override wins over the file
    assert_eq!(doc["config"]["l"], "1e0");
    assert_eq!(doc["config"]["grid_n"], "64");
    assert_eq!(doc["results"]["spectrum"]["kernel_dim"], 2);
}

#[test]
fn bifurcate_writes_the_diagram() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "bifurcate",
            "--set",
            "grid_n=64",
            "--set",
            "l_steps=11",
            "--set",
            "l_min=0.9",
            "--set",
            "l_max=1.1",
        ])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let doc = read_summary(dir.path());
    let crossing = doc["results"]["crossing"].as_f64().unwrap();
    assert!((crossing - 1.0).abs() < 1e-3, "crossing {crossing}");
    let csv = std::fs::read_to_string(dir.path().join("bifurcation.csv")).unwrap();
    let data_rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(data_rows, 12); // header + 11 sweep rows
}

#[test]
fn loja_synthetic_polynomials() {
    for (poly, expect) in [("quad", 0.0), ("quartic", 2.0)] {
        let dir = tempfile::tempdir().unwrap();
        let status = bin()
            .args(["loja", "--set", &format!("loja_poly={poly}")])
            .arg("--out")
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
        let doc = read_summary(dir.path());
        let gamma = doc["results"]["result"]["gamma_star"].as_f64().unwrap();
        assert!((gamma - expect).abs() < 0.05, "{poly}: gamma_star {gamma}");
    }
}
