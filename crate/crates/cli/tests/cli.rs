use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ietjoin"))
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn iet_info_reports_rotation_parameters() {
    let out = run(&["iet-info", "--l", "0.2,0.3,0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let r = &v["result"];
    assert!((r["alpha"].as_f64().unwrap() - 0.8 / 1.3).abs() < 1e-15);
    assert!((r["kappa"].as_f64().unwrap() - 1.0 / 1.3).abs() < 1e-15);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["iet"]["mode"], "rational");
}

#[test]
fn kr_on_two_atom_files() {
    let out = run(&[
        "kr",
        "--mu",
        data("two_atom_mu.csv").to_str().unwrap(),
        "--nu",
        data("two_atom_nu.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.1");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    let out = run(&["iet-info", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--help"));
    assert_eq!(
        run(&["iet-info", "--l", "0.2,0.3,0.5", "--alpha", "0.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["iet-info", "--l", "0.2,0.8"]).status.code(), Some(1));
    assert_eq!(
        run(&["tower", "--l", "0.2,0.3,0.5", "--a", "0.1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn verification_failure_exits_two() {
    let out = run(&[
        "weak-closure",
        "--l",
        "0.2,0.3,0.5",
        "--k",
        "1",
        "--horizon",
        "5",
        "--samples",
        "200",
        "--tol",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["result"]["pass"], false);
}

#[test]
fn joining_sample_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "joining-sample",
        "--l",
        "0.2,0.3,0.5",
        "--power",
        "0",
        "--samples",
        "50",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("joining.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y,w"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 50);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[0], f[1], "power 0 lies on the diagonal");
        let mantissa = f[2].split('e').next().unwrap();
        assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
    }
    assert!(!csv.contains('\r'));
    let report = fs::read_to_string(dir.path().join("joining-sample.json")).unwrap();
    assert_eq!(report.as_bytes(), out.stdout.as_slice());
}

#[test]
fn tower_levels_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "tower",
        "--l",
        "0.2,0.3,0.5",
        "--a",
        "0",
        "--b",
        "0.1",
        "--n",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("tower_levels.csv")).unwrap();
    assert!(csv.starts_with("a,b\n"));
    assert_eq!(csv.lines().count(), 4);
    let v = json(&out);
    assert!(v["result"]["stats"]["coverage"].as_f64().unwrap() > 0.0);
}

#[test]
fn orbit_modes_agree() {
    let a = json(&run(&[
        "orbit",
        "--l",
        "0.25,0.25,0.5",
        "--x",
        "0.1",
        "--len",
        "20",
    ]));
    let b = json(&run(&[
        "orbit",
        "--l",
        "0.25,0.25,0.5",
        "--x",
        "0.1",
        "--len",
        "20",
        "--mode",
        "f64x",
    ]));
    let (a, b) = (
        a["result"].as_array().unwrap(),
        b["result"].as_array().unwrap(),
    );
    assert_eq!(a.len(), 20);
    for (x, y) in a.iter().zip(b) {
        assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn switch_verifies() {
    let out = run(&[
        "switch",
        "--a",
        "0",
        "--b",
        "1",
        "--eps",
        "0.05",
        "--samples",
        "1000",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["result"]["verified"], true);
    assert_eq!(v["result"]["n"], -489);
}

#[test]
fn witness_is_deterministic() {
    let args = [
        "witness",
        "--alpha-cf",
        "golden",
        "--kappa",
        "0.769230769",
        "--levels",
        "3",
        "--seed",
        "7",
        "--samples",
        "500",
        "--atoms",
        "2000",
    ];
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let o1 = bin()
        .args(args)
        .args(["--out", d1.path().to_str().unwrap()])
        .output()
        .unwrap();
    let o2 = bin()
        .args(args)
        .args(["--out", d2.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        matches!(o1.status.code(), Some(0) | Some(2)),
        "{}",
        String::from_utf8_lossy(&o1.stderr)
    );
    assert_eq!(o1.status.code(), o2.status.code());
    assert_eq!(o1.stdout, o2.stdout);
    for f in ["witness.json", "final_joining.csv", "schedule_replay.json"] {
        let a = fs::read(d1.path().join(f)).unwrap();
        let b = fs::read(d2.path().join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f} differs");
    }
}
