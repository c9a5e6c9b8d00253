use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_soliton-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small strongly coupled setup so the PDE subcommands finish in seconds.
const SMALL: [&str; 10] = [
    "--set", "lambda=1.0", "--set", "mass=8.0", "--set", "grid.r_max=30.0", "--set", "grid.n=599", "--set",
    "linearization.r_max=20.0",
];

#[test]
fn help_and_version() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("experiment"));
    let out = run(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains(env!("CARGO_PKG_VERSION")) && text.contains("rustc"), "{text}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["spectrum", "--config", "/nonexistent/run.toml", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    let out = run(&["spectrum", "--set", "lambda=0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["spectrum", "--set", "potential.depth=2.0", "--out", dir.path().to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn spectrum_report_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("a");
    let out = run(&["spectrum", "--out", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&d.join("spectrum.json"));
    assert!((rep["e0"].as_f64().unwrap() + 9.97871).abs() < 1e-4, "{rep}");
    assert!((rep["e1"].as_f64().unwrap() + 2.29983).abs() < 1e-4);
    assert_eq!(rep["resonance_ok"].as_bool(), Some(true));

    // the resolved config reproduces the run
    let echo = d.join("config.json");
    let d2 = dir.path().join("b");
    let out = run(&["spectrum", "--config", echo.to_str().unwrap(), "--out", d2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&d2.join("spectrum.json")), rep);
    assert_eq!(json(&d2.join("config.json")), json(&echo));
}

#[test]
fn ground_and_linearize() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["ground", "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let g = json(&dir.path().join("ground.json"));
    assert!((g["mass"].as_f64().unwrap() - 4.0).abs() < 1e-7);
    let branch = std::fs::read_to_string(dir.path().join("branch.csv")).unwrap();
    assert!(branch.starts_with("E,w,mass,residual"));
    assert!(dir.path().join("branch.bin").exists());

    let mut args = vec!["linearize", "--out", d];
    args.extend(SMALL);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("linearization.json").exists());
}

#[test]
fn nf_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["nf", "--set", "nf.t_end=1000.0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let nf = std::fs::read_to_string(dir.path().join("nf.csv")).unwrap();
    assert_eq!(nf.lines().next(), Some("t,rho,omega,bracket_lo,bracket_hi"));
    assert_eq!(nf.lines().count(), 1002);
    let facts = json(&dir.path().join("facts.json"));
    assert_eq!(facts["example"]["fact_c"].as_bool(), Some(true));
}

#[test]
fn evolve_then_decompose() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut args = vec![
        "evolve", "--out", d, "--set", "evolution.t_end=0.5", "--set", "evolution.dt=0.001", "--set",
        "evolution.checkpoint=true", "--set", "evolution.perturbation=0.01", "--set", "evolution.cap.start_radius=20.0",
    ];
    args.extend(SMALL);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("t,mass,energy,fidelity"));
    let ck = dir.path().join("checkpoint.bin");
    assert!(ck.exists());

    let d2 = dir.path().join("dec");
    let mut args = vec!["decompose", "--checkpoint", ck.to_str().unwrap(), "--out", d2.to_str().unwrap()];
    args.extend(SMALL);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&d2.join("decomposition.json"));
    assert!((rep["t"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!(rep["orthogonality_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn experiment_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let frames: Vec<String> = ["x", "y"]
        .iter()
        .map(|name| {
            let d = dir.path().join(name);
            let mut args = vec![
                "experiment", "--out", d.to_str().unwrap(), "--set", "scenario.t_end=0.5", "--set", "scenario.eta0_scale=1.0",
                "--set", "evolution.cap.start_radius=20.0", "--jobs", "1",
            ];
            args.extend(SMALL);
            let out = run(&args);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            for f in ["config.json", "frame.csv", "nf.csv", "fits.json", "monitor.json"] {
                assert!(d.join(f).exists(), "missing {f}");
            }
            std::fs::read_to_string(d.join("frame.csv")).unwrap()
        })
        .collect();
    assert_eq!(frames[0], frames[1]);
}

#[test]
fn experiment_needs_a_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "lambda = 1.0\nmass = 8.0\n[grid]\nr_max = 30.0\nn = 599\n").unwrap();
    let out = run(&["experiment", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
