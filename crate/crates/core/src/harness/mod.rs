//! Experiment orchestration: configs, seeded trials, CSV tables and plots.
//!
//! A run directory holds `resolved.cfg`, `runs.csv`, `timing.csv`,
//! `divergences.csv`, `values.csv` (finite environments), one learner
//! snapshot per trial under `snapshots/`, and SVG panels under `plots/`.
//! Only `timing.csv` depends on the machine.

mod checks;
mod config;
mod output;
mod plot;
mod run;
mod sweep;

pub use checks::{bound_suite, contraction_suite, geometry_suite, run_suite, CheckRow, Suite};
pub use config::{
    parse_config, BasisSpec, EnvSpec, ExperimentConfig, LearnerKind, PolicySpec, Task, CONFIG_KEYS,
};
pub use output::{
    read_csv, read_runs, read_values, write_csv, write_outputs, ValueRow, DIVERGENCE_FILE,
    RESOLVED_FILE, RUNS_FILE, TIMING_FILE, VALUES_FILE,
};
pub use plot::{has_data, heatmap_svg, line_svg, Panel};
pub use run::{
    run_experiment, run_experiment_with_threads, DivergenceEvent, ExperimentOutput, RunRecord,
    TrialResult,
};
pub use sweep::{mean_sd, sweep, ParameterGrid, SummaryRow, SUMMARY_FILE, SWEEP_KEYS};
