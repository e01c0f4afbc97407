use std::fs;
use std::path::Path;

use mirror_td::harness::{
    parse_config, read_runs, read_values, run_experiment, run_experiment_with_threads, sweep,
    write_outputs, ParameterGrid, RUNS_FILE, SUMMARY_FILE, TIMING_FILE, VALUES_FILE,
};

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn td0_on_chain_reaches_its_fixed_point() {
    let cfg = parse_config(
        "env = chain 5\nlearner = td\nepisodes = 500\npolicy = constant 1\nmax_steps = 20\nalpha = constant 0.1\n",
    )
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let rows = out.records();
    assert_eq!(rows.len(), 500);
    assert!(rows.iter().all(|r| r.wall_clock_per_step > 0.0));
    assert!(
        rows.last().unwrap().bellman_error <= 1e-2,
        "{:?}",
        rows.last()
    );
}

#[test]
fn identical_across_runs_and_thread_counts() {
    let cfg = parse_config(
        "env = random 12 2 3\nlearner = sparse_mirror\nbasis = pvf 4\nnoise = 6\nbeta = 0.001\n\
         alpha = constant 0.02\nepisodes = 15\nmax_steps = 40\ntrials = 4\nseed = 9\n",
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for (k, threads) in [1, 4, 4].into_iter().enumerate() {
        let dir = tmp.path().join(format!("run{k}"));
        write_outputs(&run_experiment_with_threads(&cfg, threads).unwrap(), &dir).unwrap();
        let tree: Vec<_> = files(&dir)
            .into_iter()
            .filter(|(name, _)| name != TIMING_FILE)
            .collect();
        trees.push(tree);
    }
    assert!(trees[0].len() >= 5);
    assert_eq!(trees[0], trees[1]);
    assert_eq!(trees[1], trees[2]);

    let rows = read_runs(&tmp.path().join("run0").join(RUNS_FILE)).unwrap();
    assert_eq!(rows.len(), 4 * 15);
    assert!(rows
        .windows(2)
        .all(|w| (w[0].trial, w[0].episode) < (w[1].trial, w[1].episode)));
}

#[test]
fn trial_seeds_are_offsets_of_the_base_seed() {
    let text = "env = chain 5\nlearner = td\nepisodes = 3\nmax_steps = 10\n";
    let three =
        run_experiment(&parse_config(&format!("{text}trials = 3\nseed = 10\n")).unwrap()).unwrap();
    let alone =
        run_experiment(&parse_config(&format!("{text}trials = 1\nseed = 12\n")).unwrap()).unwrap();
    assert_eq!(three.trials[2].seed, 12);
    assert_eq!(
        three.trials[2].learner.weights(),
        alone.trials[0].learner.weights()
    );
}

#[test]
fn divergence_is_recorded_per_trial() {
    let cfg = parse_config(
        "env = chain 5\nlearner = td\nalpha = constant 50\ngamma = 0.99\nepisodes = 50\nmax_steps = 50\ntrials = 2\n",
    )
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let events = out.divergences();
    assert_eq!(events.len(), 2);
    assert!(events.iter().all(|e| e.norm > 1e8 || !e.norm.is_finite()));
    let tmp = tempfile::tempdir().unwrap();
    write_outputs(&out, tmp.path()).unwrap();
    let text = fs::read_to_string(tmp.path().join("divergences.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn control_runs_on_finite_and_continuous_worlds() {
    let cfg = parse_config(
        "env = chain 4\nlearner = mirror\nlink = euclidean\ntask = control\nepsilon = 0.3\n\
         alpha = constant 0.1\nepisodes = 200\nmax_steps = 10\n",
    )
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let last = out.records().last().cloned().unwrap();
    assert!(
        last.bellman_error.is_finite() && last.bellman_error < 0.5,
        "{last:?}"
    );
    let values = out.trials[0].values.as_ref().unwrap();
    assert!(values[3] > values[0]);

    let car = parse_config(
        "env = mountain_car\nlearner = mirror\nlink = pnorm\nbasis = fourier 3\nepisodes = 3\nmax_steps = 200\n\
         alpha = constant 0.001\nepsilon = 0.05\nepsilon_decay = 0.9\n",
    )
    .unwrap();
    let out = run_experiment(&car).unwrap();
    let rows = out.records();
    assert_eq!(rows.len(), 3);
    assert!(rows
        .iter()
        .all(|r| r.bellman_error.is_nan() && r.steps <= 200));
    assert!(rows.iter().all(|r| r.ret == -(r.steps as f64)));

    let rbf = parse_config(
        "env = mountain_car\nlearner = td\nbasis = rbf 4 0.3\nepisodes = 2\nmax_steps = 50\n",
    )
    .unwrap();
    assert_eq!(run_experiment(&rbf).unwrap().records().len(), 2);
}

#[test]
fn grid_runs_draw_a_heat_map_over_free_cells() {
    let cfg = parse_config(
        "env = two_room\nlearner = td\nbasis = pvf 20\ngamma = 0.95\nepisodes = 20\nmax_steps = 200\nimprove_every = 5\n",
    )
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    write_outputs(&out, tmp.path()).unwrap();
    let values = read_values(&tmp.path().join(VALUES_FILE)).unwrap();
    let svg = fs::read_to_string(tmp.path().join("plots").join("heatmap.svg")).unwrap();
    assert_eq!(svg.matches("class=\"cell\"").count(), values.len());
    let n_free = mirror_td::envs::two_room_world(0.95)
        .unwrap()
        .layout()
        .unwrap()
        .n_free();
    assert_eq!(values.len(), n_free);
    assert!(out.records().iter().all(|r| r.bellman_error.is_finite()));

    let chain = parse_config("env = chain 5\nlearner = td\nepisodes = 2\nmax_steps = 5\n").unwrap();
    let dir = tmp.path().join("chain");
    write_outputs(&run_experiment(&chain).unwrap(), &dir).unwrap();
    assert!(!dir.join("plots").join("heatmap.svg").exists());
}

#[test]
fn beta_sweep_summary_is_sparser_with_larger_beta() {
    let base = parse_config(
        "env = random 20 2 5\nlearner = sparse_mirror\nbasis = pvf 10 normalized\nnoise = 40\nlink = pnorm\n\
         alpha = constant 0.01\nepisodes = 10\nmax_steps = 1000\n",
    )
    .unwrap();
    let grid = ParameterGrid::parse("beta = 0, 0.001, 0.01, 0.1\n").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let rows = sweep(&base, &grid, Some(tmp.path())).unwrap();
    assert_eq!(rows.len(), 4);
    let nnz: Vec<f64> = rows.iter().map(|r| r.final_nnz_mean).collect();
    assert!(nnz.windows(2).all(|w| w[1] <= w[0]), "{nnz:?}");
    assert!(nnz[3] < nnz[0]);
    let summary = fs::read_to_string(tmp.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(tmp.path().join("cell_003").join(RUNS_FILE).exists());
}
