use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mixclt"));
    c.env_remove("MIXCLT_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn mixclt")
}

fn spec_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn coeffs_two_state_example() {
    let p = spec_path("two_state_a025_n4.json");
    let o = run(&["coeffs", "--spec", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rho: Vec<f64> = v["rho_k"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (got, want) in rho.iter().zip([0.5, 0.25, 0.125]) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn verify_iid_passes_with_sharp_margins() {
    let p = spec_path("iid_three_state_n5.json");
    let o = run(&["verify", "--spec", p.to_str().unwrap(), "--out", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(!out.contains(",fail"));
    let margin = |name: &str| -> f64 {
        let line = out.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
        line.split(',').nth(3).unwrap().parse().unwrap()
    };
    assert!(margin("variance_lower").abs() <= 1e-10);
    assert!(margin("variance_upper").abs() <= 1e-10);
}

#[test]
fn failed_check_exits_one() {
    // demanding strict room breaks the sharp iid bounds
    let p = spec_path("iid_three_state_n5.json");
    let o = run(&["verify", "--spec", p.to_str().unwrap(), "--checks", "variance", "--tol-rel", "-1e-6"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"fail\""));
}

#[test]
fn usage_and_io_errors_exit_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["coeffs"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--spec", "/nonexistent/spec.json"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--family", "two-state:a=0.3"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--family", "nope", "--n", "3"]).status.code(), Some(2));
    assert_eq!(
        run(&["verify", "--family", "iid", "--n", "3", "--checks", "bogus"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["clt", "--family", "iid", "--n", "10,5"]).status.code(), Some(2));
    assert_eq!(run(&["clt", "--family", "iid", "--n", "10", "--replicates", "0"]).status.code(), Some(2));
    assert_eq!(run(&["selftest", "--threads", "0"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_spec_reports_path_field_and_reason() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"m": 2, "n": 2, "initial": [0.5, 0.5], "transitions": [[[0.9, 0.2], [0.5, 0.5]]], "f": [[-1, 1], [-1, 1]]}"#,
    )
    .unwrap();
    let o = run(&["coeffs", "--spec", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("bad.json"), "{err}");
    assert!(err.contains("stochastic") || err.contains("transitions"), "{err}");
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("MIXCLT_OUT_DIR", dir.path())
        .args(["variance", "--family", "two-state:a=0.25", "--n", "3", "--out", "csv"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let body = std::fs::read_to_string(dir.path().join("variance.csv")).unwrap();
    assert!(body.contains("sigma2,5.5000000000000000e0"), "{body}");
    assert!(dir.path().join("variance_checks.csv").exists());
}

#[test]
fn clt_csv_and_plot_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "clt", "--family", "two-state:a=c", "--c", "0.3", "--n", "500,1000,2000", "--replicates", "20000", "--seed", "42",
        "--out", "csv",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("n,lambda,sigma,ks,cond_dob,cond_log2,cond_cd,flags"));
    let ks: Vec<f64> = lines.map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(ks.len(), 3);
    assert!(ks.windows(2).all(|w| w[1] < w[0]), "{ks:?}");
    assert!(ks[2] < 0.02);

    let o = run(&[
        "clt", "--family", "gaussian-ar1:phi=0.5", "--n", "100,200", "--replicates", "500", "--out", "plot", "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["ks.dat", "cond_dob.dat", "cond_log2.dat", "cond_cd.dat"] {
        let body = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(body.lines().count(), 3, "{f}: {body}");
    }
}

#[test]
fn family_commands() {
    let o = run(&["family", "list"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("two-state:a=0.5*n^(-0.25)"));
    let o = run(&["family", "describe", "degenerate:c=0.5", "--n", "5000", "--out", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("5000,9.9980000000000002e-1,2.0000000000000001e-4"), "{}", stdout(&o));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let args = ["verify", "--family", "random:m=3,seed=7,floor=0.1", "--n", "6", "--out", "json"];
    let a = run(&args);
    let b = run(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}
