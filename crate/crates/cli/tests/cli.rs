use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qmon_cli::{Manifest, EXIT_FAILURE, EXIT_OK, EXIT_VALIDATION};

fn qmon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmon"))
        .args(args)
        .output()
        .expect("spawn qmon")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const LANGEVIN: &str = "experiment = \"langevin\"
n_paths = 200
[langevin]
big_omega = 1.0
eps = 1.0
x0 = 2.0
[time]
dt = 1e-3
t_end = 2.0
";

#[test]
fn missing_gamma_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        "experiment = \"qnd-observer\"\n[qnd]\n[measure]\nkind = \"two-point\"\nlo = -1.0\nhi = 1.0\np_hi = 0.5\n[time]\ndt = 0.01\nt_end = 1.0\n",
    );
    let o = qmon(&[
        "run",
        &cfg,
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_VALIDATION);
    assert!(stderr(&o).contains("qnd.gamma"), "{}", stderr(&o));
    assert!(!tmp.path().join("run").join("manifest.json").exists());
}

#[test]
fn unknown_key_and_bad_grid_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = write_config(tmp.path(), "extra.toml", &format!("{LANGEVIN}typo = 1\n"));
    let o = qmon(&["run", &extra]);
    assert_eq!(code(&o), EXIT_VALIDATION);
    assert!(stderr(&o).contains("typo"));
    let grid = write_config(
        tmp.path(),
        "grid.toml",
        &LANGEVIN.replace("t_end = 2.0", "t_end = 2.00005"),
    );
    let o = qmon(&["run", &grid]);
    assert_eq!(code(&o), EXIT_VALIDATION);
    assert!(stderr(&o).contains("time.t_end"));
}

#[test]
fn langevin_run_writes_csvs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "l.toml", LANGEVIN);
    let out = tmp.path().join("run");
    let o = qmon(&["run", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let m = Manifest::load(&out).unwrap();
    assert_eq!(m.seed, 7);
    assert_eq!(m.experiment, "langevin");
    for f in ["trajectory.csv", "ensemble.csv", "variance_law.csv"] {
        assert!(m.outputs.contains_key(f), "{f}");
    }
    let law = fs::read_to_string(out.join("variance_law.csv")).unwrap();
    let header = law.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t,variance,variance_se,closed_form");
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.lines().any(|l| l.starts_with("t,x,v")));

    let echo = qmon(&["manifest", out.to_str().unwrap()]);
    assert_eq!(code(&echo), EXIT_OK);
    let echoed: Manifest = serde_json::from_slice(&echo.stdout).unwrap();
    assert_eq!(echoed, m);
}

#[test]
fn replay_is_identical_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "l.toml", LANGEVIN);
    let out = tmp.path().join("run");
    assert_eq!(
        code(&qmon(&["run", &cfg, "--out", out.to_str().unwrap()])),
        EXIT_OK
    );

    let o = qmon(&["replay", out.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));

    let mut m = Manifest::load(&out).unwrap();
    m.seed += 1;
    m.write(&out).unwrap();
    let o = qmon(&[
        "replay",
        out.to_str().unwrap(),
        "--out",
        tmp.path().join("again").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_FAILURE);
    assert!(stderr(&o).contains("checksum"));
}

#[test]
fn corrupt_manifest_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("manifest.json"), "{ not json").unwrap();
    assert_eq!(
        code(&qmon(&["manifest", tmp.path().to_str().unwrap()])),
        EXIT_VALIDATION
    );
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&qmon(&["replay", empty.path().to_str().unwrap()])),
        EXIT_VALIDATION
    );
}

#[test]
fn verify_subset_reports_each_criterion() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("suite");
    let o = qmon(&[
        "verify",
        "--criteria",
        "A10,a3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout
        .lines()
        .any(|l| l.starts_with("A10") && l.contains("PASS")));
    assert!(stdout
        .lines()
        .any(|l| l.starts_with("A3") && l.contains("PASS")));
    let suite = fs::read_to_string(out.join("suite.csv")).unwrap();
    assert!(suite.contains("criterion,passed,retried,detail"));
    assert_eq!(
        code(&qmon(&["verify", "--criteria", "A99"])),
        EXIT_VALIDATION
    );
}

#[test]
fn example_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            qmon_cli::ExperimentConfig::parse(&fs::read_to_string(&path).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 10);
}
