use std::path::Path;
use std::process::{Command, Output};

fn qbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbm"))
        .args(args)
        .output()
        .expect("spawn qbm")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn header_and_rows(text: &str) -> (serde_json::Value, Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let manifest = lines.next().and_then(|l| l.strip_prefix("# ")).expect("manifest line");
    let manifest = serde_json::from_str(manifest).expect("manifest json");
    let header = lines.next().expect("header").split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (manifest, header, rows)
}

#[test]
fn validate_config_accepts_defaults() {
    let out = qbm(&["validate-config"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sbme_without_thermal_occupation_is_rejected() {
    let out = qbm(&["validate-config", "--model", "sbme", "--ntherm", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model") && err.contains("n_t > 0"), "{err}");
}

#[test]
fn bad_fields_exit_with_config_code() {
    for args in [
        &["validate-config", "--dt", "-1"][..],
        &["validate-config", "--initial", "squeezed:1"],
        &["validate-config", "--model", "sse", "--burn-in", "20"],
        &["validate-config", "--dim", "0"],
    ] {
        let out = qbm(args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"model": "lbme", "colour": "blue"}"#).unwrap();
    let out = qbm(&["validate-config", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn master_equation_run_writes_series_without_error_bars() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = qbm(&[
        "run",
        "--model",
        "lbme",
        "--dim",
        "12",
        "--dt",
        "1e-3",
        "--t-final",
        "0.5",
        "--out",
        out_dir,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (manifest, header, rows) = header_and_rows(&read(&dir.path().join("lbme.csv")));
    assert_eq!(manifest["config"]["model"], "lbme");
    assert_eq!(header, ["t", "mean_n", "mean_n2", "purity", "min_eigenvalue"]);
    assert!(!header.iter().any(|h| h.starts_with("std_err")));
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[0][1], 0.0);
    assert!(rows.last().unwrap()[1] > 0.0);
}

#[test]
fn sse_run_writes_error_bars_and_steady_table() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let args = [
        "run",
        "--model",
        "sse",
        "--dim",
        "24",
        "--dt",
        "1e-3",
        "--t-final",
        "1",
        "--burn-in",
        "0.5",
        "--trajectories",
        "8",
        "--record-stride",
        "0.02",
        "--out",
        out_dir,
    ];
    let out = qbm(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, header, rows) = header_and_rows(&read(&dir.path().join("sse.csv")));
    assert_eq!(header[..3], ["t", "mean_n", "std_err"]);
    assert_eq!(rows.len(), 51);
    assert!(rows.iter().all(|r| r.len() == header.len()));

    let steady = read(&dir.path().join("sse_steady.csv"));
    let mut lines = steady.lines().skip(1);
    assert_eq!(lines.next(), Some("quantity,value,std_err"));
    assert!(lines.next().unwrap().starts_with("mean_n,"));
    assert_eq!(steady.lines().filter(|l| l.starts_with("p_")).count(), 24);
}

#[test]
fn rerunning_from_a_manifest_reproduces_the_output() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let args = [
        "run",
        "--model",
        "sse",
        "--hamiltonian",
        "kerr",
        "--gamma",
        "1",
        "--dim",
        "16",
        "--dt",
        "1e-3",
        "--t-final",
        "0.6",
        "--burn-in",
        "0.3",
        "--trajectories",
        "70",
        "--seed",
        "17",
        "--record-stride",
        "0.02",
        "--out",
    ];
    let out = qbm(&[&args[..], &[first.path().to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = first.path().join("sse.csv");
    let out = qbm(&[
        "run",
        "--config",
        csv.to_str().unwrap(),
        "--out",
        second.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["sse.csv", "sse_steady.csv"] {
        assert_eq!(
            read(&first.path().join(name)),
            read(&second.path().join(name)),
            "{name}"
        );
    }
}

#[test]
fn figure_commands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let common = [
        "--dim",
        "16",
        "--dt",
        "1e-3",
        "--t-final",
        "0.6",
        "--burn-in",
        "0.2",
        "--trajectories",
        "4",
        "--record-stride",
        "0.02",
        "--out",
        out_dir,
    ];
    let out = qbm(&[&["fig1"][..], &common].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["fig1_lbme.csv", "fig1_pbme.csv"] {
        let (_, header, _) = header_and_rows(&read(&dir.path().join(name)));
        assert_eq!(header, ["t", "mean_n"]);
    }
    let (_, header, _) = header_and_rows(&read(&dir.path().join("fig1_sse.csv")));
    assert_eq!(header, ["t", "mean_n", "std_err"]);

    let out = qbm(&[
        "fig2",
        "--gammas",
        "2,4",
        "--dim",
        "24",
        "--trajectories",
        "2",
        "--out",
        out_dir,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (manifest, header, rows) = header_and_rows(&read(&dir.path().join("fig2_sweep.csv")));
    assert_eq!(
        header,
        ["gamma", "mean_n2_sse", "std_err", "mean_n2_lbme", "mean_n2_thermal"]
    );
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [2.0, 4.0]);
    assert_eq!(manifest["extra"]["schedule"].as_array().unwrap().len(), 2);
    for gamma in ["2.0", "4.0"] {
        let (_, header, rows) = header_and_rows(&read(&dir.path().join(format!("fig2_populations_gamma_{gamma}.csv"))));
        assert_eq!(header, ["n", "p_sse", "std_err", "p_thermal", "p_lbme"]);
        assert_eq!(rows.len(), 24);
        let total: f64 = rows.iter().map(|r| r[4]).sum();
        assert!((total - 1.0).abs() < 1e-9, "lbme populations sum to {total}");
    }
}
