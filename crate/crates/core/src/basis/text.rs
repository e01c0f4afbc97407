//! Plain-text feature bases.
//!
//! ```text
//! basis v1
//! kind <tabular|matrix|pvf|noisy|fourier|rbf|polynomial>
//! ...kind-specific lines...
//! ```
//!
//! Matrix kinds end with `rows <n> <d>` followed by one line per state, so
//! noisy features read back bit-for-bit.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{FeatureBasis, Fourier, Laplacian, MatrixKind, Polynomial, Rbf};
use crate::envs::write_matrix;
use crate::error::{Error, Result};

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_bounds(out: &mut String, bounds: &[(f64, f64)]) {
    for (lo, hi) in bounds {
        writeln!(out, "bounds {lo} {hi}").unwrap();
    }
}

impl FeatureBasis {
    pub fn to_text(&self) -> String {
        let mut out = String::from("basis v1\n");
        match self {
            FeatureBasis::Tabular { n_states } => {
                writeln!(out, "kind tabular\nstates {n_states}").unwrap();
            }
            FeatureBasis::Matrix { kind, phi } => {
                match kind {
                    MatrixKind::Custom => out.push_str("kind matrix\n"),
                    MatrixKind::Pvf {
                        laplacian,
                        eigenvalues,
                    } => {
                        writeln!(out, "kind pvf\nlaplacian {}", laplacian.name()).unwrap();
                        writeln!(out, "eigenvalues {}", join(eigenvalues)).unwrap();
                    }
                    MatrixKind::Noisy { base_dim, seed } => {
                        writeln!(out, "kind noisy\nbase_dim {base_dim}\nseed {seed}").unwrap();
                    }
                }
                writeln!(out, "rows {} {}", phi.nrows(), phi.ncols()).unwrap();
                write_matrix(&mut out, phi);
            }
            FeatureBasis::Fourier(f) => {
                writeln!(out, "kind fourier\norder {}", f.order).unwrap();
                write_bounds(&mut out, &f.bounds);
            }
            FeatureBasis::Rbf(r) => {
                out.push_str("kind rbf\n");
                for (c, w) in r.centers.iter().zip(&r.widths) {
                    writeln!(out, "center {w} {}", join(c)).unwrap();
                }
            }
            FeatureBasis::Polynomial(p) => {
                writeln!(out, "kind polynomial\ndegree {}", p.degree).unwrap();
                write_bounds(&mut out, &p.bounds);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        if lines.next_line("header")?.1 != "basis v1" {
            return Err(Error::Parse("bad basis header".into()));
        }
        let kind = lines.keyed::<String>("kind")?;
        match kind.as_str() {
            "tabular" => super::tabular_basis(lines.keyed("states")?),
            "matrix" => {
                let phi = lines.matrix()?;
                super::matrix_basis(phi)
            }
            "pvf" => {
                let laplacian = Laplacian::from_name(&lines.keyed::<String>("laplacian")?)?;
                let eigenvalues = lines.numbers("eigenvalues")?;
                let phi = lines.matrix()?;
                if eigenvalues.len() != phi.ncols() {
                    return Err(Error::DimensionMismatch {
                        expected: phi.ncols(),
                        got: eigenvalues.len(),
                    });
                }
                Ok(FeatureBasis::Matrix {
                    kind: MatrixKind::Pvf {
                        laplacian,
                        eigenvalues,
                    },
                    phi,
                })
            }
            "noisy" => {
                let base_dim = lines.keyed("base_dim")?;
                let seed = lines.keyed("seed")?;
                let phi = lines.matrix()?;
                Ok(FeatureBasis::Matrix {
                    kind: MatrixKind::Noisy { base_dim, seed },
                    phi,
                })
            }
            "fourier" => {
                let order = lines.keyed("order")?;
                Fourier::new(order, lines.bounds()?).map(FeatureBasis::Fourier)
            }
            "polynomial" => {
                let degree = lines.keyed("degree")?;
                Polynomial::new(degree, lines.bounds()?).map(FeatureBasis::Polynomial)
            }
            "rbf" => {
                let (mut centers, mut widths) = (Vec::new(), Vec::new());
                while lines.peek_key() == Some("center") {
                    let nums = lines.numbers("center")?;
                    let (w, c) = nums
                        .split_first()
                        .ok_or_else(|| Error::Parse("empty center line".into()))?;
                    widths.push(*w);
                    centers.push(c.to_vec());
                }
                Rbf::new(centers, widths).map(FeatureBasis::Rbf)
            }
            other => Err(Error::Parse(format!("unknown basis kind {other:?}"))),
        }
    }
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .map(str::trim)
                .enumerate()
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Lines {
            inner: it.peekable(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .ok_or_else(|| Error::Parse(format!("unexpected end of basis text, expected {what}")))
    }

    fn peek_key(&mut self) -> Option<&'a str> {
        self.inner
            .peek()
            .and_then(|(_, l)| l.split_whitespace().next())
    }

    fn rest(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (ln, line) = self.next_line(key)?;
        match line.split_once(char::is_whitespace) {
            Some((k, rest)) if k == key => Ok((ln, rest.trim())),
            _ => Err(Error::Parse(format!(
                "line {}: expected \"{key} ...\"",
                ln + 1
            ))),
        }
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (ln, rest) = self.rest(key)?;
        rest.parse()
            .map_err(|_| Error::Parse(format!("line {}: bad value for {key}", ln + 1)))
    }

    fn numbers(&mut self, key: &str) -> Result<Vec<f64>> {
        let (ln, rest) = self.rest(key)?;
        parse_row(ln, rest)
    }

    fn bounds(&mut self) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::new();
        while self.peek_key() == Some("bounds") {
            match self.numbers("bounds")?[..] {
                [lo, hi] => out.push((lo, hi)),
                _ => return Err(Error::Parse("bounds lines need two numbers".into())),
            }
        }
        Ok(out)
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let (ln, rest) = self.rest("rows")?;
        let dims: Vec<usize> = rest
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::Parse(format!("line {}: bad matrix shape", ln + 1)))?;
        let [n, d] = dims[..] else {
            return Err(Error::Parse(format!(
                "line {}: expected \"rows <n> <d>\"",
                ln + 1
            )));
        };
        let mut values = Vec::with_capacity(n * d);
        for _ in 0..n {
            let (ln, row) = self.next_line("matrix row")?;
            let parsed = parse_row(ln, row)?;
            if parsed.len() != d {
                return Err(Error::Parse(format!(
                    "line {}: expected {d} numbers",
                    ln + 1
                )));
            }
            values.extend(parsed);
        }
        Ok(DMatrix::from_row_slice(n, d, &values))
    }
}

fn parse_row(ln: usize, row: &str) -> Result<Vec<f64>> {
    row.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {}: bad number {t:?}", ln + 1)))
        })
        .collect()
}
