use std::fs;
use std::path::Path;
use std::process::Command;

use nonlocal_dbc::analysis::{fit_decay, Column, DecayModel};
use nonlocal_dbc::cli::config::ExperimentConfig;
use nonlocal_dbc::cli::csv::{num, parse_trajectory_csv};
use nonlocal_dbc::cli::experiment::{run_experiment, trajectory_svg};
use nonlocal_dbc::cli::{emit_svg, PlotStyle, Series};
use nonlocal_dbc::Error;

const TOY3: &str = r#"{"fixture": "toy3", "initial": "two-bump", "t_end": 1.0, "dt": 0.01}"#;

fn nldbc(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nldbc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn nldbc")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn toy3_svg_matches_golden() {
    let cfg = ExperimentConfig::from_json(TOY3).unwrap();
    let run = run_experiment(&cfg).unwrap();
    let svg = trajectory_svg(&run.trajectory, "linear-p (explicit)").unwrap();
    let golden = fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/toy3_decay.svg"),
    )
    .unwrap();
    assert_eq!(svg, golden);
}

#[test]
fn two_point_series_is_one_polyline() {
    let s = Series {
        label: "y".into(),
        x: vec![0.0, 1.0],
        y: vec![2.0, 1.0],
    };
    let svg = emit_svg(&[s], &PlotStyle::default()).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
    let pts = line
        .split("points=\"")
        .nth(1)
        .unwrap()
        .trim_end_matches("\"/>");
    assert_eq!(pts.split(' ').count(), 2);
    assert!(matches!(
        emit_svg(&[], &PlotStyle::default()),
        Err(Error::EmptySeries)
    ));
}

#[test]
fn evolve_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"h": 0.03125, "variant": "plaplace-p", "p": 3, "t_end": 0.2, "dt": 0.01,
            "integrator": "implicit", "initial": "random"}"#,
    );
    for k in 0..2 {
        let out = nldbc(
            &[
                "evolve",
                "--config",
                &cfg,
                "--seed",
                "11",
                "--out",
                &format!("t{k}.csv"),
                "--svg",
                &format!("t{k}.svg"),
            ],
            dir.path(),
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("t0.csv"), read("t1.csv"));
    assert_eq!(read("t0.svg"), read("t1.svg"));
    let other = nldbc(
        &[
            "evolve", "--config", &cfg, "--seed", "12", "--out", "t2.csv",
        ],
        dir.path(),
    );
    assert!(other.status.success());
    assert_ne!(read("t0.csv"), read("t2.csv"));
}

#[test]
fn decay_fit_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"h": 0.03125, "t_end": 2.0, "dt": 0.01, "initial": "eigenmode(1)"}"#,
    );
    let out = nldbc(
        &["evolve", "--config", &cfg, "--out", "traj.csv", "--quiet"],
        dir.path(),
    );
    assert!(out.status.success());
    let fit = nldbc(
        &[
            "decay-fit",
            "--input",
            "traj.csv",
            "--column",
            "d2^2",
            "--model",
            "exponential",
            "--window",
            "0,1.5",
        ],
        dir.path(),
    );
    assert!(fit.status.success());
    let printed = String::from_utf8(fit.stdout).unwrap();

    let mut parsed =
        ExperimentConfig::from_json(&fs::read_to_string(dir.path().join(&cfg)).unwrap()).unwrap();
    parsed.out = None;
    let run = run_experiment(&parsed).unwrap();
    let column: Column = "d2^2".parse().unwrap();
    let direct = fit_decay(&run.trajectory, column, DecayModel::Exponential, (0.0, 1.5)).unwrap();
    let expected = format!(
        "exponential,{},{},{},{}\n",
        num(direct.rate),
        num(direct.r2),
        num(direct.window.0),
        num(direct.window.1)
    );
    assert_eq!(printed, expected);

    let reread =
        parse_trajectory_csv(&fs::read_to_string(dir.path().join("traj.csv")).unwrap()).unwrap();
    assert_eq!(reread.times, run.trajectory.times);
    assert_eq!(reread.diag, run.trajectory.diag);
}

#[test]
fn exit_codes_follow_categories() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"kernel": "singular", "variant": "linear-p"}"#,
    );
    let out = nldbc(&["evolve", "--config", &bad, "--out", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]"));

    let out = nldbc(&["decay-fit", "--input", "missing.csv"], dir.path());
    assert_eq!(out.status.code(), Some(4));

    // no interior equation can converge in a single Newton step at this tolerance
    let hard = write(
        dir.path(),
        "hard.json",
        r#"{"h": 0.03125, "variant": "plaplace-p", "p": 1.2, "max_iter": 1, "tol": 1e-14,
            "t_end": 0.1, "dt": 0.01, "integrator": "implicit"}"#,
    );
    let out = nldbc(&["evolve", "--config", &hard, "--out", "x.csv"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn grid_and_solve_elliptic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"h": 0.25, "r": 0.25, "kernel_radius": 0.5}"#,
    );
    let out = nldbc(&["grid", "--config", &cfg, "--out", "grid.csv"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grid = fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines[0], "index,x,class,bdist,mu");
    assert_eq!(lines.len(), 5);
    assert!(String::from_utf8_lossy(&out.stdout).contains("nnz="));

    let strip = write(dir.path(), "strip.csv", "index,value\n0,1\n3,1\n");
    let out = nldbc(
        &[
            "solve-elliptic",
            "--config",
            &cfg,
            "--strip",
            &strip,
            "--out",
            "full.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let full = fs::read_to_string(dir.path().join("full.csv")).unwrap();
    for line in full.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{line}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged=true"));
}

#[test]
fn validate_reports_on_toy3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", TOY3);
    let out = nldbc(&["validate", "--config", &cfg], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PASS integrators"), "{text}");
    assert!(text.trim_end().ends_with("overall: pass"), "{text}");
}
