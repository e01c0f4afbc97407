//! Plain-text MDP tables.
//!
//! ```text
//! mdp v1
//! states <n>
//! actions <m>
//! gamma <γ>
//! terminal <s> <s> ...        (may be empty)
//! P <a>                       (then n rows of n numbers)
//! R <a>                       (then n rows of n numbers)
//! ```
//!
//! Numbers are written in Rust's shortest round-trip form, so a parse of
//! the serialized text reproduces the model exactly. Grid layouts are not
//! part of the format.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::MdpModel;
use crate::error::{Error, Result};

impl MdpModel {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let n = self.n_states();
        writeln!(out, "mdp v1").unwrap();
        writeln!(out, "states {n}").unwrap();
        writeln!(out, "actions {}", self.n_actions()).unwrap();
        writeln!(out, "gamma {}", self.gamma()).unwrap();
        let terminal: Vec<String> = (0..n)
            .filter(|&s| self.is_terminal(s))
            .map(|s| s.to_string())
            .collect();
        writeln!(out, "terminal {}", terminal.join(" ")).unwrap();
        for (tag, table) in [("P", &self.transitions), ("R", &self.rewards)] {
            for (a, m) in table.iter().enumerate() {
                writeln!(out, "{tag} {a}").unwrap();
                write_matrix(&mut out, m);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of MDP text, expected {what}")))
        };
        let (_, header) = next("header")?;
        if header != "mdp v1" {
            return Err(Error::Parse(format!("bad MDP header {header:?}")));
        }
        let n: usize = keyed(next("states")?, "states")?;
        let m: usize = keyed(next("actions")?, "actions")?;
        let gamma: f64 = keyed(next("gamma")?, "gamma")?;
        let (ln, term) = next("terminal")?;
        let rest = term
            .strip_prefix("terminal")
            .ok_or_else(|| Error::Parse(format!("line {}: expected terminal", ln + 1)))?;
        let mut terminal = vec![false; n];
        for tok in rest.split_whitespace() {
            let s: usize = tok
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad state {tok:?}", ln + 1)))?;
            *terminal.get_mut(s).ok_or(Error::InvalidState {
                state: s,
                n_states: n,
            })? = true;
        }
        let mut tables = [Vec::with_capacity(m), Vec::with_capacity(m)];
        for (k, tag) in ["P", "R"].iter().enumerate() {
            for a in 0..m {
                let (ln, line) = next(tag)?;
                if line != format!("{tag} {a}") {
                    return Err(Error::Parse(format!(
                        "line {}: expected \"{tag} {a}\"",
                        ln + 1
                    )));
                }
                let mut values = Vec::with_capacity(n * n);
                for _ in 0..n {
                    let (ln, row) = next("matrix row")?;
                    let before = values.len();
                    for tok in row.split_whitespace() {
                        values.push(tok.parse::<f64>().map_err(|_| {
                            Error::Parse(format!("line {}: bad number {tok:?}", ln + 1))
                        })?);
                    }
                    if values.len() - before != n {
                        return Err(Error::Parse(format!(
                            "line {}: expected {n} numbers",
                            ln + 1
                        )));
                    }
                }
                tables[k].push(DMatrix::from_row_slice(n, n, &values));
            }
        }
        let [transitions, rewards] = tables;
        MdpModel::new(transitions, rewards, gamma, terminal)
    }
}

fn keyed<T: std::str::FromStr>((ln, line): (usize, &str), key: &str) -> Result<T> {
    line.strip_prefix(key)
        .and_then(|rest| rest.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("line {}: expected \"{key} <value>\"", ln + 1)))
}

pub(crate) fn write_matrix(out: &mut String, m: &DMatrix<f64>) {
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
}
