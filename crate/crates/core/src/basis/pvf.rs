//! Proto-value functions: the smoothest eigenvectors of a graph Laplacian.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{FeatureBasis, MatrixKind};
use crate::envs::check_connected;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Laplacian {
    /// L = D − A.
    Combinatorial,
    /// L = I − D^{-1/2} A D^{-1/2}.
    Normalized,
}

impl Laplacian {
    pub fn name(self) -> &'static str {
        match self {
            Laplacian::Combinatorial => "combinatorial",
            Laplacian::Normalized => "normalized",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "combinatorial" => Ok(Laplacian::Combinatorial),
            "normalized" => Ok(Laplacian::Normalized),
            other => Err(Error::invalid(format!("unknown Laplacian {other:?}"))),
        }
    }
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Laplacian of a symmetric, non-negative adjacency matrix of a connected graph.
pub fn laplacian(adjacency: &DMatrix<f64>, kind: Laplacian) -> Result<DMatrix<f64>> {
    let n = adjacency.nrows();
    if n == 0 || adjacency.ncols() != n {
        return Err(Error::invalid(
            "adjacency must be a non-empty square matrix",
        ));
    }
    for i in 0..n {
        for j in 0..n {
            let a = adjacency[(i, j)];
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::invalid(format!(
                    "adjacency[{i}][{j}] = {a} is not a weight"
                )));
            }
            if (a - adjacency[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::invalid(format!(
                    "adjacency is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    check_connected(n, |s| {
        (0..n).filter(move |&t| t != s && adjacency[(s, t)] > 0.0)
    })?;
    let degree: Vec<f64> = adjacency.row_iter().map(|r| r.sum()).collect();
    let mut l = -adjacency.clone();
    match kind {
        Laplacian::Combinatorial => {
            for i in 0..n {
                l[(i, i)] += degree[i];
            }
        }
        Laplacian::Normalized => {
            if n > 1 {
                let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
                for i in 0..n {
                    for j in 0..n {
                        l[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
                    }
                }
            }
            for i in 0..n {
                l[(i, i)] += 1.0;
            }
        }
    }
    Ok(l)
}

/// The `k` eigenvectors of the Laplacian with the smallest eigenvalues,
/// unit-norm, as columns. Each is signed so its largest-magnitude entry
/// (first on ties) is positive.
pub fn pvf_basis(adjacency: &DMatrix<f64>, k: usize, kind: Laplacian) -> Result<FeatureBasis> {
    let n = adjacency.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "requested {k} proto-value functions from a {n}-state graph"
        )));
    }
    let l = laplacian(adjacency, kind)?;
    let eig = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut phi = DMatrix::zeros(n, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(idx).normalize();
        let lead = v.iter().fold(
            0.0f64,
            |m, x| if x.abs() > m.abs() + 1e-12 { *x } else { m },
        );
        if lead < 0.0 {
            v.neg_mut();
        }
        phi.set_column(col, &v);
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(FeatureBasis::Matrix {
        kind: MatrixKind::Pvf {
            laplacian: kind,
            eigenvalues,
        },
        phi,
    })
}
