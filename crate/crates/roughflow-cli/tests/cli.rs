use std::path::Path;
use std::process::{Command, Output};

fn roughflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughflow"))
        .args(args)
        .current_dir(dir)
        .env_remove("ROUGHFLOW_OUTPUT")
        .output()
        .unwrap()
}

const TINY: &str = r#"
timings = false
forcing = { modes = [] }

[sweep]
epsilons = [0.5, 0.25, 0.125]

[approx]
times = [0.05, 0.1]
cell = { modes = 8, degree = 24, z_max = 4.0 }
strip = { modes = 16, degree = 16, height = 2.0 }

[ns]
horizon = 0.1
dt_scale = 0.01
grid = { per_period = 8, levels = 24, height = 2.0 }
"#;

#[test]
fn weight_suite_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = roughflow(&["check", "--suite", "weight", "--output", "o"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("[PASS]")));
    assert!(dir.path().join("o/checks.json").exists());
}

#[test]
fn bad_epsilon_is_reported_with_its_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = roughflow(&["--epsilons", "0.25,0.3", "sweep"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("sweep.epsilons[1]") && err.contains("1/ε must be an integer"),
        "{err}"
    );
}

#[test]
fn zero_forcing_sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let a = roughflow(
        &["--config", "tiny.toml", "--output", "a", "sweep"],
        dir.path(),
    );
    let b = roughflow(
        &[
            "--config",
            "tiny.toml",
            "--output",
            "b",
            "sweep",
            "--formats",
            "csv,json",
        ],
        dir.path(),
    );
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    let ca = std::fs::read(dir.path().join("a/sweep.csv")).unwrap();
    assert_eq!(ca, std::fs::read(dir.path().join("b/sweep.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&ca).lines().count(), 4);
    assert!(dir.path().join("a/sweep.svg").exists());
    let rep = roughflow(&["--output", "c", "report", "a/sweep.json"], dir.path());
    assert!(
        rep.status.success(),
        "{}",
        String::from_utf8_lossy(&rep.stdout)
    );
    assert_eq!(std::fs::read(dir.path().join("c/sweep.csv")).unwrap(), ca);
}

#[test]
fn run_ns_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let out = roughflow(
        &[
            "--config",
            "tiny.toml",
            "--output",
            "o",
            "run-ns",
            "--epsilon",
            "0.25",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines = String::from_utf8_lossy(&out.stdout);
    assert!(lines.lines().next().unwrap().starts_with("{\""));
    let f = std::fs::File::open(dir.path().join("o/ns_eps_4/omega.f64")).unwrap();
    let (h, m) = roughflow::harness::read_field(f).unwrap();
    assert_eq!(h.shape, [25, 32]);
    assert!(m.iter().all(|&v| v == 0.0));
}
