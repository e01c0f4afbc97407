//! Result files of a run directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plot::{has_data, heatmap_svg, line_svg, Panel};
use super::run::{ExperimentOutput, RunRecord};
use crate::error::{Error, Result};

pub const RUNS_FILE: &str = "runs.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const DIVERGENCE_FILE: &str = "divergences.csv";
pub const VALUES_FILE: &str = "values.csv";
pub const RESOLVED_FILE: &str = "resolved.cfg";

#[derive(Debug, Serialize)]
struct TimingRow {
    trial: usize,
    episode: usize,
    steps: usize,
    wall_clock_per_step: f64,
}

/// One row per state of a finite environment. Grid environments fill in
/// the cell coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueRow {
    pub trial: usize,
    pub state: usize,
    pub row: Option<usize>,
    pub col: Option<usize>,
    pub value: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    read_csv(path)
}

pub fn read_values(path: &Path) -> Result<Vec<ValueRow>> {
    read_csv(path)
}

pub(crate) const RUN_COLUMNS: &[&str] = &[
    "trial",
    "episode",
    "steps",
    "return",
    "bellman_error",
    "delta_l2",
    "delta_linf",
    "l1_norm",
    "nnz",
];

/// Writes every artifact of a run into `dir` and returns the paths.
/// Everything except the timing table is a pure function of the config.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let put = |written: &mut Vec<PathBuf>, name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };

    let resolved = put(&mut written, RESOLVED_FILE);
    fs::write(&resolved, output.config.to_text()).map_err(|e| Error::io(&resolved, e))?;

    let records = output.records();
    write_csv(&put(&mut written, RUNS_FILE), &records, RUN_COLUMNS)?;
    let timing: Vec<TimingRow> = records
        .iter()
        .map(|r| TimingRow {
            trial: r.trial,
            episode: r.episode,
            steps: r.steps,
            wall_clock_per_step: r.wall_clock_per_step,
        })
        .collect();
    write_csv(
        &put(&mut written, TIMING_FILE),
        &timing,
        &["trial", "episode", "steps", "wall_clock_per_step"],
    )?;
    write_csv(
        &put(&mut written, DIVERGENCE_FILE),
        &output.divergences(),
        &["trial", "episode", "step", "norm"],
    )?;

    let snapshots = dir.join("snapshots");
    fs::create_dir_all(&snapshots).map_err(|e| Error::io(&snapshots, e))?;
    for t in &output.trials {
        let p = snapshots.join(format!("trial_{:03}.txt", t.trial));
        fs::write(&p, t.learner.to_text()).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }

    let model = output.config.env.model(output.config.hyper.gamma)?;
    let layout = model.as_ref().and_then(|m| m.layout().cloned());
    let mut values = Vec::new();
    for t in &output.trials {
        if let Some(v) = &t.values {
            for (s, &x) in v.iter().enumerate() {
                let cell = layout.as_ref().map(|l| l.cell_of_state[s]);
                values.push(ValueRow {
                    trial: t.trial,
                    state: s,
                    row: cell.map(|c| c.0),
                    col: cell.map(|c| c.1),
                    value: x,
                });
            }
        }
    }
    if !values.is_empty() {
        write_csv(&put(&mut written, VALUES_FILE), &values, &[])?;
    }

    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    for panel in Panel::LINES {
        if has_data(&records, panel) {
            let p = plots.join(format!("{}.svg", panel.name()));
            fs::write(&p, line_svg(&records, panel)?).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
    }
    if layout.is_some() && !values.is_empty() {
        let p = plots.join("heatmap.svg");
        fs::write(&p, heatmap_svg(&values)?).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}
