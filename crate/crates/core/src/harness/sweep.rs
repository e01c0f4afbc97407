//! Cross-product parameter sweeps with per-cell summaries.

use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::output::{write_csv, write_outputs};
use super::run::{run_experiment, ExperimentOutput, RunRecord};
use crate::error::{Error, Result};
use crate::kv;

/// Keys a grid may vary.
pub const SWEEP_KEYS: &[&str] = &[
    "basis",
    "noise",
    "learner",
    "link",
    "scaler",
    "scaler_floor",
    "alpha",
    "lambda",
    "beta",
    "p",
    "epsilon",
    "epsilon_decay",
    "trace",
    "gamma",
    "improve_every",
];

pub const SUMMARY_FILE: &str = "summary.csv";

/// One axis per line: `key = v1, v2, ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGrid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl ParameterGrid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes = Vec::new();
        for e in kv::parse(text)? {
            if !SWEEP_KEYS.contains(&e.key.as_str()) {
                return Err(Error::Config {
                    line: e.line,
                    message: format!("`{}` cannot be swept", e.key),
                });
            }
            let values: Vec<String> = e.value.split(',').map(|v| v.trim().to_string()).collect();
            if values.iter().any(|v| v.is_empty()) {
                return Err(Error::Config {
                    line: e.line,
                    message: format!("empty value in the `{}` axis", e.key),
                });
            }
            axes.push((e.key, values));
        }
        let grid = ParameterGrid { axes };
        grid.cells()?;
        Ok(grid)
    }

    /// Settings of every cell; the last axis varies fastest.
    pub fn cells(&self) -> Result<Vec<Vec<(String, String)>>> {
        if self.axes.is_empty() {
            return Err(Error::invalid("parameter grid is empty"));
        }
        let mut cells = vec![Vec::new()];
        for (key, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix: Vec<(String, String)>| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push((key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        Ok(cells)
    }
}

/// Mean ± sample standard deviation over the trials of one cell. Final
/// values are taken from each trial's last episode; diverged trials are
/// counted but left out of the statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub settings: String,
    pub trials: usize,
    pub diverged: usize,
    pub final_return_mean: f64,
    pub final_return_sd: f64,
    pub final_bellman_error_mean: f64,
    pub final_bellman_error_sd: f64,
    pub final_l1_norm_mean: f64,
    pub final_l1_norm_sd: f64,
    pub final_nnz_mean: f64,
    pub final_nnz_sd: f64,
    pub last10_steps_mean: f64,
    pub last10_steps_sd: f64,
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    match xs.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (xs[0], 0.0),
        n => {
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (mean, var.sqrt())
        }
    }
}

fn summarize(cell: usize, settings: &[(String, String)], out: &ExperimentOutput) -> SummaryRow {
    let healthy: Vec<&Vec<RunRecord>> = out
        .trials
        .iter()
        .filter(|t| t.divergence.is_none() && !t.records.is_empty())
        .map(|t| &t.records)
        .collect();
    let last = |f: fn(&RunRecord) -> f64| -> (f64, f64) {
        mean_sd(
            &healthy
                .iter()
                .map(|r| f(r.last().unwrap()))
                .collect::<Vec<_>>(),
        )
    };
    let (final_return_mean, final_return_sd) = last(|r| r.ret);
    let (final_bellman_error_mean, final_bellman_error_sd) = last(|r| r.bellman_error);
    let (final_l1_norm_mean, final_l1_norm_sd) = last(|r| r.l1_norm);
    let (final_nnz_mean, final_nnz_sd) = last(|r| r.nnz as f64);
    let tail: Vec<f64> = healthy
        .iter()
        .map(|r| {
            let t = &r[r.len().saturating_sub(10)..];
            t.iter().map(|x| x.steps as f64).sum::<f64>() / t.len() as f64
        })
        .collect();
    let (last10_steps_mean, last10_steps_sd) = mean_sd(&tail);
    SummaryRow {
        cell,
        settings: settings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("; "),
        trials: out.trials.len(),
        diverged: out.trials.len() - healthy.len(),
        final_return_mean,
        final_return_sd,
        final_bellman_error_mean,
        final_bellman_error_sd,
        final_l1_norm_mean,
        final_l1_norm_sd,
        final_nnz_mean,
        final_nnz_sd,
        last10_steps_mean,
        last10_steps_sd,
    }
}

/// Runs every cell. With `out` set, each cell writes its run directory to
/// `out/cell_NNN` and the summary goes to `out/summary.csv`.
pub fn sweep(
    base: &ExperimentConfig,
    grid: &ParameterGrid,
    out: Option<&Path>,
) -> Result<Vec<SummaryRow>> {
    let cells = grid.cells()?;
    let mut rows = Vec::with_capacity(cells.len());
    for (k, settings) in cells.iter().enumerate() {
        let mut cfg = base.clone();
        for (key, value) in settings {
            cfg.set(key, value)?;
        }
        if let Some(dir) = out {
            cfg.out = dir.join(format!("cell_{k:03}"));
        }
        cfg.validate()?;
        let result = run_experiment(&cfg)?;
        if out.is_some() {
            write_outputs(&result, &cfg.out)?;
        }
        rows.push(summarize(k, settings, &result));
    }
    if let Some(dir) = out {
        write_csv(&dir.join(SUMMARY_FILE), &rows, &[])?;
    }
    Ok(rows)
}
