//! ρ-weighted least-squares and l1-regularized projections onto span(Φ).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::WeightedNorm;
use crate::error::{Error, Result};
use crate::geometry::shrink;

/// Sweep cap for the coordinate-descent LASSO solver.
pub const LASSO_MAX_SWEEPS: usize = 100_000;
/// Convergence threshold on the largest coordinate change in a sweep.
pub const LASSO_STEP_TOL: f64 = 1e-10;
/// Allowed violation of the optimality conditions.
pub const LASSO_KKT_TOL: f64 = 1e-8;

/// Relative eigenvalue below which the weighted Gram matrix counts as singular.
const RANK_TOL: f64 = 1e-12;

/// Weighted normal-equation data for a fixed design: G = ΦᵀDΦ and ΦᵀD.
#[derive(Clone, Debug)]
pub struct Design {
    phi: DMatrix<f64>,
    weighted_t: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl Design {
    pub fn new(phi: &DMatrix<f64>, norm: &WeightedNorm) -> Result<Self> {
        if phi.nrows() != norm.len() {
            return Err(Error::DimensionMismatch {
                expected: norm.len(),
                got: phi.nrows(),
            });
        }
        if phi.ncols() == 0 {
            return Err(Error::invalid("design has no columns"));
        }
        let mut weighted_t = phi.transpose();
        for (i, mut col) in weighted_t.column_iter_mut().enumerate() {
            col *= norm.rho()[i];
        }
        let gram = &weighted_t * phi;
        Ok(Design {
            phi: phi.clone(),
            weighted_t,
            gram,
        })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// ΦᵀD y.
    pub fn correlations(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.phi.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.phi.nrows(),
                got: y.len(),
            });
        }
        Ok(&self.weighted_t * y)
    }

    /// Least-squares weights; errors with the null direction when the
    /// weighted Gram matrix is singular.
    pub fn least_squares(&self) -> Result<LeastSquares<'_>> {
        let eig = SymmetricEigen::new(self.gram.clone());
        let (imin, &lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty spectrum");
        let lmax = eig.eigenvalues.amax();
        if !(lmin > RANK_TOL * lmax.max(f64::MIN_POSITIVE)) {
            return Err(Error::RankDeficient {
                direction: eig.eigenvectors.column(imin).iter().copied().collect(),
            });
        }
        let chol = self
            .gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Internal("Gram matrix lost definiteness".into()))?;
        Ok(LeastSquares { design: self, chol })
    }
}

pub struct LeastSquares<'a> {
    design: &'a Design,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl LeastSquares<'_> {
    /// argmin ‖y − Φw‖²_ρ, with one round of iterative refinement.
    pub fn solve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.design.correlations(y)?;
        let mut w = self.chol.solve(&c);
        let r = &c - self.design.gram() * &w;
        w += self.chol.solve(&r);
        Ok(w)
    }

    /// Πy = Φ·argmin ‖y − Φw‖²_ρ.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.design.phi() * self.solve(y)?)
    }
}

/// argmin_w ‖y − Φw‖²_ρ.
pub fn l2_projection(
    phi: &DMatrix<f64>,
    norm: &WeightedNorm,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    Design::new(phi, norm)?.least_squares()?.solve(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoSolution {
    pub w: DVector<f64>,
    pub sweeps: usize,
    /// Largest violation of the optimality conditions.
    pub kkt: f64,
}

/// Largest violation of the LASSO optimality conditions for
/// ‖y − Φw‖²_ρ + β‖w‖₁, written with c = ΦᵀD(y − Φw):
/// c_j = (β/2)·sign(w_j) where w_j ≠ 0 and |c_j| ≤ β/2 elsewhere.
pub fn lasso_kkt_violation(
    design: &Design,
    y: &DVector<f64>,
    beta: f64,
    w: &DVector<f64>,
) -> Result<f64> {
    let c = design.correlations(y)? - design.gram() * w;
    Ok(kkt_from_residual_correlations(&c, w, beta))
}

fn kkt_from_residual_correlations(c: &DVector<f64>, w: &DVector<f64>, beta: f64) -> f64 {
    let half = beta / 2.0;
    c.iter()
        .zip(w.iter())
        .map(|(&cj, &wj)| {
            if wj > 0.0 {
                (cj - half).abs()
            } else if wj < 0.0 {
                (cj + half).abs()
            } else {
                (cj.abs() - half).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Coordinate descent with covariance updates for
/// argmin_w ‖y − Φw‖²_ρ + β‖w‖₁.
pub fn lasso(
    design: &Design,
    y: &DVector<f64>,
    beta: f64,
    warm: Option<&DVector<f64>>,
) -> Result<LassoSolution> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!(
            "l1 penalty must be >= 0, got {beta}"
        )));
    }
    let d = design.phi().ncols();
    let g = design.gram();
    let b = design.correlations(y)?;
    let mut w = match warm {
        Some(w0) if w0.len() == d => w0.clone(),
        Some(w0) => {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: w0.len(),
            })
        }
        None => DVector::zeros(d),
    };
    // gw = G w, maintained incrementally.
    let mut gw = g * &w;
    let half = beta / 2.0;
    let mut kkt = f64::INFINITY;
    for sweep in 1..=LASSO_MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for j in 0..d {
            let gjj = g[(j, j)];
            if gjj <= 0.0 {
                if w[j] != 0.0 {
                    w[j] = 0.0;
                }
                continue;
            }
            let rho_j = b[j] - gw[j] + gjj * w[j];
            let new = shrink(rho_j, half) / gjj;
            let change = new - w[j];
            if change != 0.0 {
                gw.axpy(change, &g.column(j), 1.0);
                w[j] = new;
                max_change = max_change.max(change.abs());
            }
        }
        if max_change <= LASSO_STEP_TOL {
            let c = &b - &gw;
            kkt = kkt_from_residual_correlations(&c, &w, beta);
            if kkt <= LASSO_KKT_TOL {
                // Refresh G w to shed accumulated drift before reporting.
                let c = &b - g * &w;
                kkt = kkt_from_residual_correlations(&c, &w, beta);
                if kkt <= LASSO_KKT_TOL {
                    return Ok(LassoSolution {
                        w,
                        sweeps: sweep,
                        kkt,
                    });
                }
                gw = g * &w;
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: LASSO_MAX_SWEEPS,
        residual: kkt,
    })
}

/// Weights of Π_{l1}y: argmin_w ‖y − Φw‖²_ρ + β‖w‖₁.
pub fn l1_projection(
    phi: &DMatrix<f64>,
    norm: &WeightedNorm,
    y: &DVector<f64>,
    beta: f64,
) -> Result<DVector<f64>> {
    let design = Design::new(phi, norm)?;
    Ok(lasso(&design, y, beta, None)?.w)
}
