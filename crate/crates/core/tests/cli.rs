use std::fs;
use std::process::Command;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mirror-td"))
}

#[test]
fn run_writes_a_result_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.cfg");
    fs::write(&cfg, "env = grid 4 3\nlearner = mirror\nlink = euclidean\nepisodes = 5\nmax_steps = 30\ntrials = 2\n").unwrap();
    let out = tmp.path().join("out");
    let status = cli()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    for name in [
        "resolved.cfg",
        "runs.csv",
        "timing.csv",
        "divergences.csv",
        "values.csv",
        "plots/heatmap.svg",
        "snapshots/trial_001.txt",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let header = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert!(header
        .starts_with("trial,episode,steps,return,bellman_error,delta_l2,delta_linf,l1_norm,nnz\n"));
    let resolved = fs::read_to_string(out.join("resolved.cfg")).unwrap();
    assert!(resolved.contains("improve_every = 0"));

    let plot = cli()
        .args(["plot", "--panel", "delta_l2", "--table"])
        .arg(out.join("runs.csv"))
        .output()
        .unwrap();
    assert_eq!(plot.status.code(), Some(0));
    assert!(out.join("delta_l2.svg").exists());
    let bad = cli()
        .args(["plot", "--panel", "heatmap", "--table"])
        .arg(out.join("runs.csv"))
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "env = chain 5\nlearnr = td0\n").unwrap();
    let out = cli().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 2") && msg.contains("learnr"), "{msg}");
}

#[test]
fn divergence_only_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("hot.cfg");
    fs::write(&cfg, "env = chain 5\nlearner = td\nalpha = constant 50\ngamma = 0.99\nepisodes = 20\nmax_steps = 50\n").unwrap();
    let out = cli()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("base.cfg");
    let grid = tmp.path().join("grid.cfg");
    fs::write(
        &cfg,
        "env = chain 6\nlearner = mirror\nbasis = pvf 3\nepisodes = 4\nmax_steps = 20\n",
    )
    .unwrap();
    fs::write(&grid, "p = fixed 2, fixed, decay 100\n").unwrap();
    let out = tmp.path().join("sw");
    let res = cli()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--grid")
        .arg(&grid)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert_eq!(
        fs::read_to_string(out.join("summary.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
}

#[test]
fn solve_exact_prints_values() {
    let out = cli()
        .args(["solve-exact", "--env", "chain 3", "--gamma", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "state,value");
    // Entering the right end pays 1: V* = (γ/(1 − γ), 1/(1 − γ), 1/(1 − γ)).
    for (line, want) in lines[1..].iter().zip([1.0, 2.0, 2.0]) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((v - want).abs() < 1e-9, "{line}");
    }
    let pi = cli()
        .args([
            "solve-exact",
            "--env",
            "chain 3",
            "--gamma",
            "0.5",
            "--policy",
            "constant 0",
        ])
        .output()
        .unwrap();
    let text = String::from_utf8(pi.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",0"));
    let car = cli()
        .args(["solve-exact", "--env", "mountain_car", "--gamma", "0.9"])
        .output()
        .unwrap();
    assert_eq!(car.status.code(), Some(1));
}

#[test]
fn check_suites_report_rows() {
    let out = cli()
        .args(["check", "--suite", "contraction"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("suite,case,value,tolerance,pass\n"));
    assert_eq!(text.lines().count(), 5);
    let bad = cli().args(["check", "--suite", "nope"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
