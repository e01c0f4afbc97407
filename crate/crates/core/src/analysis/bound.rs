//! Contraction of the sparse projected Bellman operator and the error bound
//! for sparse mirror-descent TD.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{lasso, Design, PolicyOperator, WeightedNorm};
use crate::error::{Error, Result};

const CONTRACTION_SLACK: f64 = 1e-6;
const MIN_PAIR_DISTANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub max_ratio: f64,
    pub gamma: f64,
    pub pairs_used: usize,
    pub pass: bool,
}

/// Empirical modulus of V ↦ Φ·lasso(Π T V, β) over random pairs.
/// Half of the pairs differ by a constant shift, the rest are independent.
pub fn contraction_check(
    op: &PolicyOperator,
    phi: &DMatrix<f64>,
    norm: &WeightedNorm,
    beta: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<ContractionReport> {
    let n = phi.nrows();
    if op.reward.len() != n || norm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: op.reward.len().min(norm.len()),
        });
    }
    let design = Design::new(phi, norm)?;
    let ls = design.least_squares()?;
    let scale = op.reward.amax().max(1.0) / (1.0 - op.gamma).max(1e-3);
    let apply = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let projected = ls.project(&op.apply(v)?)?;
        Ok(phi * lasso(&design, &projected, beta, None)?.w)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut used = 0;
    for k in 0..n_pairs {
        let a = draw(&mut rng, n, scale);
        let b = if k % 2 == 0 {
            a.add_scalar(scale * normal(&mut rng))
        } else {
            draw(&mut rng, n, scale)
        };
        let dist = norm.norm(&(&a - &b));
        if dist < MIN_PAIR_DISTANCE {
            continue;
        }
        let ratio = norm.norm(&(apply(&a)? - apply(&b)?)) / dist;
        max_ratio = max_ratio.max(ratio);
        used += 1;
    }
    Ok(ContractionReport {
        max_ratio,
        gamma: op.gamma,
        pairs_used: used,
        pass: used > 0 && max_ratio <= op.gamma + CONTRACTION_SLACK,
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * normal(rng))
}

/// Learner-side quantities entering the bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs {
    /// Learned weights ŵ.
    pub weights: DVector<f64>,
    /// Soft-threshold level of the learner; the matching LASSO penalty is twice this.
    pub beta: f64,
    pub alpha: f64,
    pub p: f64,
    /// State of every sample the learner consumed, in order.
    pub states: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    /// ‖V − Φŵ‖_ρ.
    pub lhs: f64,
    /// ‖V − ΠV‖_ρ.
    pub approx_error: f64,
    /// ‖ΠV − Π_{l1}ΠV‖_ρ.
    pub f_unsquared: f64,
    pub f_squared: f64,
    /// (M − 1)·P(0).
    pub m_term: f64,
    /// ‖w*‖₁²·M / (αN).
    pub step_term: f64,
    pub m: f64,
    pub e: f64,
    pub p0: f64,
    pub w_star_l1: f64,
    pub rhs: f64,
    /// Right-hand side with the LASSO gap entering squared.
    pub rhs_squared_f: f64,
    /// ‖V − ΠTV̂‖, ‖ΠTV̂ − Π_{l1}ΠTV̂‖, ‖Π_{l1}ΠTV̂ − V̂‖.
    pub triangle: [f64; 3],
    pub pass: bool,
}

/// Largest admissible constant step size for the bound at dimension d and
/// link exponent p.
pub fn max_admissible_alpha(d: usize, p: f64) -> f64 {
    let e = (d as f64).powf(p / 2.0);
    1.0 / (2.0 * (p - 1.0) * e)
}

/// Evaluates both sides of the error bound for a learned weight vector.
/// P(0) averages (ΠV)² over the sampled states.
pub fn sparse_td_error_bound(
    op: &PolicyOperator,
    phi: &DMatrix<f64>,
    norm: &WeightedNorm,
    inputs: &BoundInputs,
) -> Result<BoundReport> {
    let (n, d) = phi.shape();
    if inputs.weights.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: inputs.weights.len(),
        });
    }
    if op.reward.len() != n || norm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: op.reward.len().min(norm.len()),
        });
    }
    if !(inputs.p >= 2.0) || !inputs.p.is_finite() {
        return Err(Error::Domain(format!(
            "bound needs p >= 2, got {}",
            inputs.p
        )));
    }
    if inputs.states.is_empty() {
        return Err(Error::invalid("bound needs at least one sample"));
    }
    if let Some(&s) = inputs.states.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidState {
            state: s,
            n_states: n,
        });
    }
    if !(inputs.beta >= 0.0) {
        return Err(Error::Domain(format!(
            "beta must be non-negative, got {}",
            inputs.beta
        )));
    }
    let max_alpha = max_admissible_alpha(d, inputs.p);
    if !(inputs.alpha > 0.0 && inputs.alpha < max_alpha) {
        return Err(Error::Inadmissible {
            alpha: inputs.alpha,
            max_alpha,
        });
    }

    let identity = DMatrix::<f64>::identity(n, n);
    let v = (identity - &op.transition * op.gamma)
        .lu()
        .solve(&op.reward)
        .ok_or_else(|| Error::Domain("policy evaluation system is singular".into()))?;
    let design = Design::new(phi, norm)?;
    let ls = design.least_squares()?;
    let beta_lasso = 2.0 * inputs.beta;

    let pv = ls.project(&v)?;
    let w_star = lasso(&design, &pv, beta_lasso, None)?.w;
    let approx_error = norm.norm(&(&v - &pv));
    let f_unsquared = norm.norm(&(&pv - phi * &w_star));
    let f_squared = f_unsquared * f_unsquared;

    let e = (d as f64).powf(inputs.p / 2.0);
    let m = 2.0 / (2.0 - 4.0 * inputs.alpha * (inputs.p - 1.0) * e);
    let samples = inputs.states.len() as f64;
    let p0 = inputs.states.iter().map(|&s| pv[s] * pv[s]).sum::<f64>() / samples;
    let w_star_l1 = w_star.lp_norm(1);
    let m_term = (m - 1.0) * p0;
    let step_term = w_star_l1 * w_star_l1 * m / (inputs.alpha * samples);
    let scale = 1.0 / (1.0 - op.gamma);
    let rhs = scale * (approx_error + f_unsquared + m_term + step_term);
    let rhs_squared_f = scale * (approx_error + f_squared + m_term + step_term);

    let v_hat = phi * &inputs.weights;
    let lhs = norm.norm(&(&v - &v_hat));
    let ptv = ls.project(&op.apply(&v_hat)?)?;
    let sparse_ptv = phi * lasso(&design, &ptv, beta_lasso, None)?.w;
    let triangle = [
        norm.norm(&(&v - &ptv)),
        norm.norm(&(&ptv - &sparse_ptv)),
        norm.norm(&(&sparse_ptv - &v_hat)),
    ];

    Ok(BoundReport {
        lhs,
        approx_error,
        f_unsquared,
        f_squared,
        m_term,
        step_term,
        m,
        e,
        p0,
        w_star_l1,
        rhs,
        rhs_squared_f,
        triangle,
        pass: lhs <= rhs,
    })
}
