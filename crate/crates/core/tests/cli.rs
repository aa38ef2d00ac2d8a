use std::path::Path;
use std::process::{Command, Output};

fn qsmooth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsmooth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn run_writes_csv_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = qsmooth(&[
            "run",
            "classical-z",
            "--param",
            "dt=0.01",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = read(a.path(), "classical-z.csv");
    assert_eq!(csv, read(b.path(), "classical-z.csv"));
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("t,wp_F_e,wp_S_e\n"));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 1 + 953);
}

#[test]
fn config_errors_exit_2() {
    for args in [
        vec!["run", "no-such-preset"],
        vec!["run", "classical-z", "--param", "gamma=-1"],
        vec!["run", "classical-z", "--param", "colour=blue"],
        vec!["run", "classical-z", "--param", "dt"],
        vec!["run", "homodyne-z", "--param", "fpe_grid=64"],
        vec!["run", "classical-z", "--param", "preset=swv-demo"],
    ] {
        let out = qsmooth(&args);
        assert_eq!(code(&out), 2, "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}

#[test]
fn numerical_failure_exits_3() {
    // The built-in ensemble has no real eigenvectors this far from its rates.
    let dir = tempfile::tempdir().unwrap();
    let out = qsmooth(&[
        "run",
        "adaptive-bloch",
        "--param",
        "epsilon=0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dry = qsmooth(&["run", "swv-demo", "--param", "scan_resolution=11", "--dry-run"]);
    assert_eq!(code(&dry), 0);
    let path = dir.path().join("swv.conf");
    std::fs::write(&path, &dry.stdout).unwrap();
    let again = qsmooth(&["run", "swv-demo", "--config", path.to_str().unwrap(), "--dry-run"]);
    assert_eq!(again.stdout, dry.stdout);
    let wrong = qsmooth(&["run", "classical-z", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&wrong), 2);
}

#[test]
fn pre_solve_json() {
    let out = qsmooth(&["pre-solve", "--format", "json", "--param", "multistart=2"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["states"].as_array().map(Vec::len), Some(3));
}
