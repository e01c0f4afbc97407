//! Verification instruments: weighted norms, exact l2 / l1 projections onto
//! span(Φ), the policy Bellman operator, contraction checks of the composed
//! projected operator, the sparse-TD error bound, and per-episode metrics.

mod bound;
mod projection;

pub use bound::{
    contraction_check, max_admissible_alpha, sparse_td_error_bound, BoundInputs, BoundReport,
    ContractionReport,
};
pub use projection::{
    l1_projection, l2_projection, lasso, lasso_kkt_violation, Design, LassoSolution, LeastSquares,
    LASSO_KKT_TOL, LASSO_MAX_SWEEPS, LASSO_STEP_TOL,
};

use nalgebra::{DMatrix, DVector};

use crate::envs::{MdpModel, Policy};
use crate::error::{Error, Result};

/// Entries counted as nonzero weights.
pub const NONZERO_TOL: f64 = 1e-12;

const DISTRIBUTION_TOL: f64 = 1e-12;

/// ‖v‖_ρ = √(Σ ρᵢ vᵢ²) for a probability vector ρ over states.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedNorm {
    rho: DVector<f64>,
}

impl WeightedNorm {
    pub fn new(rho: DVector<f64>) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::invalid("weighting needs at least one state"));
        }
        if rho.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let total = rho.sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(WeightedNorm { rho })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("weighting needs at least one state"));
        }
        Ok(WeightedNorm {
            rho: DVector::from_element(n, 1.0 / n as f64),
        })
    }

    /// Normalized visit counts.
    pub fn from_visits(states: &[usize], n: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("no visits to build a weighting from"));
        }
        let mut counts = DVector::zeros(n);
        for &s in states {
            if s >= n {
                return Err(Error::InvalidState {
                    state: s,
                    n_states: n,
                });
            }
            counts[s] += 1.0;
        }
        counts /= states.len() as f64;
        WeightedNorm::new(counts)
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.rho
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(r, (x, y))| r * x * y)
            .sum()
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v).sqrt()
    }

    /// ρ-weighted Pearson correlation.
    pub fn correlation(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let mean = |v: &DVector<f64>| self.rho.dot(v);
        let ca = a.add_scalar(-mean(a));
        let cb = b.add_scalar(-mean(b));
        let denom = self.norm(&ca) * self.norm(&cb);
        if denom == 0.0 {
            0.0
        } else {
            self.inner(&ca, &cb) / denom
        }
    }
}

/// A stationary distribution of a row-stochastic matrix: the solution of
/// πP = π, Σπ = 1, falling back to Cesàro-averaged power iteration when
/// the chain has several recurrent classes.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    if n == 0 || p.ncols() != n {
        return Err(Error::invalid(
            "transition matrix must be square and non-empty",
        ));
    }
    let mut a = p.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let candidate = a
        .lu()
        .solve(&b)
        .filter(|pi| pi.iter().all(|&x| x >= -1e-12));
    let pi = match candidate {
        Some(pi) => pi,
        None => {
            let mut pi = DVector::from_element(n, 1.0 / n as f64);
            for _ in 0..1_000_000 {
                let next = (&pi + p.tr_mul(&pi)) * 0.5;
                let change = (&next - &pi).amax();
                pi = next;
                if change <= 1e-15 {
                    break;
                }
            }
            pi
        }
    };
    let pi = pi.map(|x| x.max(0.0));
    let pi = &pi / pi.sum();
    let residual = (p.tr_mul(&pi) - &pi).amax();
    if residual > 1e-10 {
        return Err(Error::NonConvergence {
            iterations: 1_000_000,
            residual,
        });
    }
    Ok(pi)
}

/// T^π as an affine map V ↦ R^π + γP^πV.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOperator {
    pub transition: DMatrix<f64>,
    pub reward: DVector<f64>,
    pub gamma: f64,
}

impl PolicyOperator {
    pub fn new(m: &MdpModel, policy: &Policy) -> Result<Self> {
        Ok(PolicyOperator {
            transition: m.policy_transition(policy)?,
            reward: m.policy_reward(policy)?,
            gamma: m.gamma(),
        })
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.reward.len() {
            return Err(Error::DimensionMismatch {
                expected: self.reward.len(),
                got: v.len(),
            });
        }
        Ok(&self.reward + &self.transition * v * self.gamma)
    }
}

pub fn bellman_apply(m: &MdpModel, policy: &Policy, v: &DVector<f64>) -> Result<DVector<f64>> {
    PolicyOperator::new(m, policy)?.apply(v)
}

/// ‖T^πΦw − Φw‖_ρ.
pub fn bellman_error(
    op: &PolicyOperator,
    phi: &DMatrix<f64>,
    norm: &WeightedNorm,
    w: &DVector<f64>,
) -> Result<f64> {
    if phi.ncols() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: phi.ncols(),
            got: w.len(),
        });
    }
    let v = phi * w;
    Ok(norm.norm(&(op.apply(&v)? - v)))
}

/// Weight-trajectory statistics for one episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    /// NaN when no model is available.
    pub bellman_error: f64,
    pub delta_l2: f64,
    pub delta_linf: f64,
    pub l1_norm: f64,
    pub nnz: usize,
}

pub fn nnz(w: &DVector<f64>) -> usize {
    w.iter().filter(|x| x.abs() > NONZERO_TOL).count()
}

/// One record per episode-end weight vector. Deltas compare successive
/// episodes and are 0 for the first. The Bellman error needs a model.
pub fn run_metrics(
    history: &[DVector<f64>],
    model: Option<(&PolicyOperator, &DMatrix<f64>, &WeightedNorm)>,
) -> Result<Vec<EpisodeMetrics>> {
    if history.is_empty() {
        return Err(Error::invalid("run metrics need at least one episode"));
    }
    let mut out = Vec::with_capacity(history.len());
    for (k, w) in history.iter().enumerate() {
        let (delta_l2, delta_linf) = match k {
            0 => (0.0, 0.0),
            _ => {
                let diff = w - &history[k - 1];
                (diff.norm(), diff.amax())
            }
        };
        let bellman_error = match model {
            Some((op, phi, norm)) => bellman_error(op, phi, norm, w)?,
            None => f64::NAN,
        };
        out.push(EpisodeMetrics {
            episode: k,
            bellman_error,
            delta_l2,
            delta_linf,
            l1_norm: w.lp_norm(1),
            nnz: nnz(w),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{chain_mdp, policy_evaluation_exact, random_mdp, two_room_world};
    use approx::assert_relative_eq;

    #[test]
    fn weighted_norm_validation() {
        assert!(WeightedNorm::new(DVector::from_column_slice(&[0.5, 0.4])).is_err());
        assert!(WeightedNorm::new(DVector::from_column_slice(&[1.5, -0.5])).is_err());
        let w = WeightedNorm::new(DVector::from_column_slice(&[0.25, 0.75])).unwrap();
        assert_relative_eq!(w.norm(&DVector::from_column_slice(&[2.0, 2.0])), 2.0);
        let v = WeightedNorm::from_visits(&[0, 1, 1, 1], 3).unwrap();
        assert_eq!(v.rho().as_slice(), &[0.25, 0.75, 0.0]);
        assert!(WeightedNorm::from_visits(&[4], 3).is_err());
    }

    #[test]
    fn correlation_examples() {
        let w = WeightedNorm::uniform(4).unwrap();
        let a = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(
            w.correlation(&a, &(&a * 3.0).add_scalar(1.0)),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(w.correlation(&a, &-&a), -1.0, epsilon = 1e-12);
        assert_eq!(w.correlation(&a, &DVector::from_element(4, 2.0)), 0.0);
    }

    #[test]
    fn stationary_examples() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.5]);
        let pi = stationary_distribution(&p).unwrap();
        assert_relative_eq!(pi[0], 5.0 / 6.0, epsilon = 1e-12);
        let m = random_mdp(20, 2, 0.9, 3).unwrap();
        let p = m.policy_transition(&Policy::uniform(20, 2)).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        assert!((p.tr_mul(&pi) - &pi).amax() <= 1e-12);
        // Two absorbing states: any mixture is stationary.
        let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 1.0]);
        let pi = stationary_distribution(&p).unwrap();
        assert_relative_eq!(pi.sum(), 1.0, epsilon = 1e-12);
        assert!(pi[1] <= 1e-12);
    }

    #[test]
    fn bellman_examples() {
        let m = chain_mdp(5, 0.9).unwrap();
        let pi = Policy::uniform(5, 2);
        let v = policy_evaluation_exact(&m, &pi).unwrap();
        assert!((bellman_apply(&m, &pi, &v).unwrap() - &v).amax() <= 1e-10);
        let z = m.with_gamma(0.0).unwrap();
        let any = DVector::from_column_slice(&[3.0, -1.0, 2.0, 0.0, 9.0]);
        assert_eq!(
            bellman_apply(&z, &pi, &any).unwrap(),
            z.policy_reward(&pi).unwrap()
        );
        // Direct sum: (TV)(s) = Σ_a π(a|s) Σ_{s'} P(s'|s,a)(R + γV(s')).
        let tv = bellman_apply(&m, &pi, &any).unwrap();
        for s in 0..5 {
            let mut direct = 0.0;
            for a in 0..2 {
                for t in 0..5 {
                    direct += 0.5 * m.transition(a)[(s, t)] * (m.reward(a)[(s, t)] + 0.9 * any[t]);
                }
            }
            assert_relative_eq!(tv[s], direct, epsilon = 1e-12);
        }
        assert!(bellman_apply(&m, &pi, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn metrics_examples() {
        let w = DVector::from_column_slice(&[1.0, 0.0, -2e-13, 3.0]);
        let rows = run_metrics(&[w.clone(), w.clone(), w.clone()], None).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows
            .iter()
            .all(|r| r.delta_l2 == 0.0 && r.delta_linf == 0.0));
        assert_eq!(rows[0].nnz, 2);
        assert!(rows[0].bellman_error.is_nan());
        assert!(run_metrics(&[], None).is_err());

        let m = two_room_world(0.9).unwrap();
        let pi = Policy::uniform(m.n_states(), m.n_actions());
        let v = policy_evaluation_exact(&m, &pi).unwrap();
        let op = PolicyOperator::new(&m, &pi).unwrap();
        let phi = DMatrix::identity(m.n_states(), m.n_states());
        let norm = WeightedNorm::uniform(m.n_states()).unwrap();
        let rows = run_metrics(&[v.clone(), &v * 0.5], Some((&op, &phi, &norm))).unwrap();
        assert!(rows[0].bellman_error <= 1e-10);
        assert!(rows[1].bellman_error > 1e-3);
        assert_relative_eq!(rows[1].delta_linf, (&v * 0.5).amax());
    }
}
