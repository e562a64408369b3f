//! End-to-end smoke tests of the command-line surface.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sphar"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sphar-cli-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_then_fit_roundtrip() {
    let dir = temp_dir("simfit");
    let out = bin()
        .args([
            "simulate",
            "--model",
            "T1",
            "--n-obs",
            "60",
            "--truncation",
            "8",
            "--seed",
            "17",
            "--format",
            "both",
            "--out-dir",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = dir.join("sample_T1.csv");
    let binf = dir.join("sample_T1.bin");
    assert!(csv.exists() && binf.exists());
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("ell,m,t,value\n"));

    let out = bin()
        .args(["fit", "--sample"])
        .arg(&binf)
        .args(["--lambda", "0.1", "--out-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fit_text = std::fs::read_to_string(dir.join("lasso_fit.json")).unwrap();
    let fit: serde_json::Value = serde_json::from_str(&fit_text).unwrap();
    assert_eq!(fit["lambda"], 0.1);
    assert_eq!(fit["phi_hat"].as_array().unwrap().len(), 8);
    assert!(fit["diagnostics"][0]["kkt"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn experiment_emits_table_and_manifest() {
    let dir = temp_dir("exp");
    let out = bin()
        .args([
            "experiment",
            "--model",
            "T1",
            "--n-obs",
            "40",
            "--truncation",
            "6",
            "--replications",
            "2",
            "--grid-size",
            "200",
            "--burn-in",
            "200",
            "--lambda",
            "0.001",
            "--lambda",
            "0.1",
            "--seed",
            "5",
            "--threads",
            "2",
            "--out-dir",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = std::fs::read_to_string(dir.join("mse_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "lambda,T1");
    assert_eq!(lines.count(), 3);
    assert!(dir.join("manifest.json").exists());
    assert!(dir.join("kernel_curves_T1_lambda_0.1.csv").exists());
}

#[test]
fn bounds_and_diagnostics_commands() {
    let dir = temp_dir("diag");
    let out = bin()
        .args([
            "bounds",
            "--model",
            "T1",
            "--truncation",
            "6",
            "--n-obs",
            "100",
            "--lambda",
            "0.1",
            "--out-dir",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("stability_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["report"]["per_ell"].as_array().unwrap().len(), 6);
    assert!(report["oracle_bounds"][0]["l2_bound"].as_f64().unwrap() > 0.0);

    let out = bin()
        .args([
            "re-check",
            "--model",
            "T1",
            "--truncation",
            "5",
            "--n-obs",
            "50",
            "--replications",
            "4",
            "--burn-in",
            "200",
            "--out-dir",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let diagnostics = std::fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
    assert!(diagnostics.starts_with("diagnostic,model,n_obs,ell,metric,value\n"));
    assert!(diagnostics.contains("re_floor,T1"));

    let out = bin()
        .args([
            "deviation",
            "--model",
            "T1",
            "--truncation",
            "5",
            "--n-obs",
            "40",
            "--n-obs",
            "80",
            "--replications",
            "4",
            "--burn-in",
            "200",
            "--out-dir",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let diagnostics = std::fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
    assert!(diagnostics.contains("deviation,T1,40"));
    assert!(diagnostics.contains("deviation,T1,80"));
}

#[test]
fn custom_model_file_roundtrip() {
    let dir = temp_dir("custom");
    let model_path = dir.join("model.json");
    std::fs::write(
        &model_path,
        r#"{
            "p": 2, "L": 4,
            "phi_sparse": [{"ell": 2, "j": 1, "value": -0.7}, {"ell": 3, "j": 2, "value": 0.5}],
            "noise_spectrum": [1.0, 0.5, 0.25, 0.125]
        }"#,
    )
    .unwrap();
    let out = bin()
        .args(["simulate", "--model"])
        .arg(&model_path)
        .args(["--n-obs", "30", "--seed", "3", "--out-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("sample_model.csv").exists());
}
