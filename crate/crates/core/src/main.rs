use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mirror_td::envs::{policy_evaluation_exact, value_iteration_exact, Policy};
use mirror_td::harness::{
    heatmap_svg, line_svg, parse_config, read_runs, read_values, run_experiment,
    run_experiment_with_threads, run_suite, sweep, write_outputs, EnvSpec, Panel, ParameterGrid,
    PolicySpec, Suite,
};
use mirror_td::{Error, Result};

/// Exit status for a `check` suite with failing rows.
const CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mirror-td",
    version,
    about = "Mirror-descent TD learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its result directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the cross product of a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print exact V* (or V^π with --policy) as CSV.
    SolveExact {
        /// e.g. "chain 5", "grid 10 10", "two_room", "random 20 2 7".
        #[arg(long)]
        env: String,
        #[arg(long)]
        gamma: f64,
        /// "uniform" or "constant A"; omit for the optimal values.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Run a verification suite and print one CSV row per check.
    Check {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render one SVG panel from runs.csv (or values.csv for `heatmap`).
    Plot {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        panel: String,
        /// Defaults to `<panel>.svg` beside the table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Run {
            config,
            out,
            threads,
        } => {
            let mut cfg = parse_config(&read(&config)?)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            let result = match threads {
                Some(n) => run_experiment_with_threads(&cfg, n)?,
                None => run_experiment(&cfg)?,
            };
            write_outputs(&result, &cfg.out)?;
            let diverged = result.divergences();
            for d in &diverged {
                eprintln!(
                    "trial {} diverged in episode {} at step {} (|w|_inf = {:e})",
                    d.trial, d.episode, d.step, d.norm
                );
            }
            println!("{}", cfg.out.display());
            Ok(if diverged.is_empty() { 0 } else { 2 })
        }
        Command::Sweep { config, grid, out } => {
            let cfg = parse_config(&read(&config)?)?;
            let grid = ParameterGrid::parse(&read(&grid)?)?;
            let dir = out.unwrap_or_else(|| cfg.out.clone());
            let rows = sweep(&cfg, &grid, Some(&dir))?;
            println!("{}", dir.display());
            Ok(if rows.iter().any(|r| r.diverged > 0) {
                2
            } else {
                0
            })
        }
        Command::SolveExact { env, gamma, policy } => {
            let m = env
                .parse::<EnvSpec>()?
                .model(gamma)?
                .ok_or_else(|| Error::invalid("mountain_car has no exact model"))?;
            let values = match policy {
                None => value_iteration_exact(&m, 1e-12)?.values,
                Some(p) => {
                    let policy = match p.parse::<PolicySpec>()? {
                        PolicySpec::Uniform => Policy::uniform(m.n_states(), m.n_actions()),
                        PolicySpec::Constant(a) => Policy::constant(m.n_states(), a),
                    };
                    policy_evaluation_exact(&m, &policy)?
                }
            };
            let mut w = csv::Writer::from_writer(io::stdout());
            w.write_record(["state", "value"])?;
            for (s, v) in values.iter().enumerate() {
                w.write_record([s.to_string(), v.to_string()])?;
            }
            w.flush().map_err(|e| Error::io("stdout", e))?;
            Ok(0)
        }
        Command::Check { suite, seed } => {
            let suite: Suite = suite.parse()?;
            let rows = run_suite(suite, seed)?;
            let mut w = csv::Writer::from_writer(io::stdout());
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush().map_err(|e| Error::io("stdout", e))?;
            Ok(if rows.iter().all(|r| r.pass) {
                0
            } else {
                CHECK_FAILED
            })
        }
        Command::Plot { table, panel, out } => {
            let panel: Panel = panel.parse()?;
            let svg = match panel {
                Panel::Heatmap => heatmap_svg(&read_values(&table)?)?,
                _ => line_svg(&read_runs(&table)?, panel)?,
            };
            let out = out.unwrap_or_else(|| table.with_file_name(format!("{}.svg", panel.name())));
            fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
            println!("{}", out.display());
            Ok(0)
        }
    }
}
