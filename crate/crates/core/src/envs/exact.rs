use nalgebra::{DMatrix, DVector};

use super::{MdpModel, Policy};
use crate::error::{Error, Result};

/// Residual bound guaranteed by [`policy_evaluation_exact`].
pub const EVALUATION_RESIDUAL: f64 = 1e-10;

/// V^π = (I − γP^π)⁻¹ R^π by LU factorization, with one round of
/// iterative refinement when the first residual is too large.
pub fn policy_evaluation_exact(m: &MdpModel, policy: &Policy) -> Result<DVector<f64>> {
    let p = m.policy_transition(policy)?;
    let r = m.policy_reward(policy)?;
    let n = m.n_states();
    let system = DMatrix::identity(n, n) - &p * m.gamma();
    let lu = system.clone().lu();
    let mut v = lu
        .solve(&r)
        .ok_or_else(|| Error::Internal("singular policy-evaluation system".into()))?;
    for _ in 0..2 {
        let residual = &r - &system * &v;
        if residual.amax() <= EVALUATION_RESIDUAL * 1e-2 {
            break;
        }
        if let Some(dv) = lu.solve(&residual) {
            v += dv;
        }
    }
    let residual = (&r + &p * &v * m.gamma() - &v).amax();
    if residual > EVALUATION_RESIDUAL {
        return Err(Error::Internal(format!(
            "policy evaluation residual {residual:e} exceeds {EVALUATION_RESIDUAL:e}"
        )));
    }
    Ok(v)
}

/// Q(s, a) = Σ_{s'} P(s'|s,a)(R + γV(s')).
pub fn q_values_exact(m: &MdpModel, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    if v.len() != m.n_states() {
        return Err(Error::DimensionMismatch {
            expected: m.n_states(),
            got: v.len(),
        });
    }
    let n = m.n_states();
    let mut q = DMatrix::zeros(n, m.n_actions());
    for a in 0..m.n_actions() {
        let p = m.transition(a);
        let r = m.reward(a);
        for s in 0..n {
            q[(s, a)] = (0..n)
                .filter(|&t| p[(s, t)] != 0.0)
                .map(|t| p[(s, t)] * (r[(s, t)] + m.gamma() * v[t]))
                .sum();
        }
    }
    Ok(q)
}

/// Greedy action per row; near-ties (within 1e-12 relative) go to the
/// lowest action index.
pub fn greedy(q: &DMatrix<f64>) -> Vec<usize> {
    q.row_iter()
        .map(|row| {
            let mut best = 0;
            for a in 1..row.len() {
                let tol = 1e-12 * row[best].abs().max(1.0);
                if row[a] > row[best] + tol {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// ‖max_a Q(V) − V‖_∞.
pub fn bellman_optimality_residual(m: &MdpModel, v: &DVector<f64>) -> Result<f64> {
    let q = q_values_exact(m, v)?;
    Ok(q.row_iter()
        .zip(v.iter())
        .map(|(row, x)| (row.max() - x).abs())
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueIterationResult {
    pub values: DVector<f64>,
    pub policy: Vec<usize>,
    pub sweeps: usize,
}

/// Value iteration until the Bellman optimality residual is at most `tol`.
pub fn value_iteration_exact(m: &MdpModel, tol: f64) -> Result<ValueIterationResult> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut v = DVector::zeros(m.n_states());
    let mut sweeps = 0;
    loop {
        let q = q_values_exact(m, &v)?;
        let next = DVector::from_iterator(m.n_states(), q.row_iter().map(|row| row.max()));
        let residual = (&next - &v).amax();
        sweeps += 1;
        if residual <= tol {
            // `v` itself satisfies the bound; keep it so the reported
            // residual refers to the returned vector.
            let policy = greedy(&q);
            return Ok(ValueIterationResult {
                values: v,
                policy,
                sweeps,
            });
        }
        v = next;
        if sweeps > 10_000_000 {
            return Err(Error::NonConvergence {
                iterations: sweeps,
                residual,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{chain_mdp, grid_world, random_mdp};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Fixed-point iteration V ← R^π + γP^πV, independent of the LU path.
    fn iterate_evaluation(m: &MdpModel, pi: &Policy, sweeps: usize) -> DVector<f64> {
        let p = m.policy_transition(pi).unwrap();
        let r = m.policy_reward(pi).unwrap();
        let mut v = DVector::zeros(m.n_states());
        for _ in 0..sweeps {
            v = &r + &p * &v * m.gamma();
        }
        v
    }

    fn single_state(reward: f64, gamma: f64) -> MdpModel {
        MdpModel::new(
            vec![DMatrix::from_element(1, 1, 1.0)],
            vec![DMatrix::from_element(1, 1, reward)],
            gamma,
            vec![false],
        )
        .unwrap()
    }

    #[test]
    fn single_state_values() {
        let v = policy_evaluation_exact(&single_state(0.0, 0.9), &Policy::constant(1, 0)).unwrap();
        assert_eq!(v[0], 0.0);
        let v = policy_evaluation_exact(&single_state(1.0, 0.9), &Policy::constant(1, 0)).unwrap();
        assert_relative_eq!(v[0], 10.0, epsilon = 1e-12);
        let v =
            policy_evaluation_exact(&chain_mdp(1, 0.9).unwrap(), &Policy::constant(1, 1)).unwrap();
        assert_relative_eq!(v[0], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_discount_is_immediate_reward() {
        let m = chain_mdp(4, 0.0).unwrap();
        let v = policy_evaluation_exact(&m, &Policy::constant(4, 1)).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 0.0, 1.0, 1.0]);
        let vi = value_iteration_exact(&m, 1e-12).unwrap();
        assert_eq!(vi.values.as_slice(), &[0.0, 0.0, 1.0, 1.0]);
        let q = q_values_exact(&m, &vi.values).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                assert_eq!(q[(s, a)], m.expected_reward(s, a));
            }
        }
    }

    #[test]
    fn five_chain_always_right() {
        // Hand solve: V(4) = 1/(1−γ); V(3) = 1 + γV(4); V(s) = γV(s+1) below.
        let g = 0.9;
        let m = chain_mdp(5, g).unwrap();
        let v = policy_evaluation_exact(&m, &Policy::constant(5, 1)).unwrap();
        let v4 = 1.0 / (1.0 - g);
        let v3 = 1.0 + g * v4;
        let expected = [g * g * g * v3, g * g * v3, g * v3, v3, v4];
        for (a, b) in v.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        let iterated = iterate_evaluation(&m, &Policy::constant(5, 1), 10_000);
        assert!((v - iterated).amax() <= 1e-8);
    }

    #[test]
    fn evaluation_agrees_with_iteration_on_shipped_envs() {
        let envs = [
            chain_mdp(5, 0.9).unwrap(),
            grid_world(10, 10, &[], (0, 0), 0.9).unwrap(),
            crate::envs::two_room_world(0.9).unwrap(),
            random_mdp(20, 2, 0.9, 1).unwrap(),
        ];
        for m in &envs {
            let pi = Policy::uniform(m.n_states(), m.n_actions());
            let exact = policy_evaluation_exact(m, &pi).unwrap();
            let iterated = iterate_evaluation(m, &pi, 10_000);
            assert!((&exact - iterated).amax() <= 1e-8);
            let p = m.policy_transition(&pi).unwrap();
            let r = m.policy_reward(&pi).unwrap();
            assert!((&r + &p * &exact * m.gamma() - &exact).amax() <= EVALUATION_RESIDUAL);
        }
    }

    #[test]
    fn chain_three_optimal_values() {
        // Always right is optimal; V*(2) = 1/(1−γ), V*(1) = 1 + γV*(2), V*(0) = γV*(1).
        let g = 0.9;
        let m = chain_mdp(3, g).unwrap();
        let vi = value_iteration_exact(&m, 1e-12).unwrap();
        let v2 = 1.0 / (1.0 - g);
        let v1 = 1.0 + g * v2;
        assert_relative_eq!(vi.values[2], v2, epsilon = 1e-10);
        assert_relative_eq!(vi.values[1], v1, epsilon = 1e-10);
        assert_relative_eq!(vi.values[0], g * v1, epsilon = 1e-10);
        assert_eq!(vi.policy, vec![1, 1, 1]);
    }

    #[test]
    fn optimal_policy_is_greedy_and_consistent() {
        let m = chain_mdp(5, 0.9).unwrap();
        let vi = value_iteration_exact(&m, 1e-12).unwrap();
        assert!(bellman_optimality_residual(&m, &vi.values).unwrap() <= 1e-12);
        let q = q_values_exact(&m, &vi.values).unwrap();
        assert_eq!(greedy(&q), vi.policy);
        for s in 0..5 {
            assert!((q.row(s).max() - vi.values[s]).abs() <= 1e-10);
        }
    }

    #[test]
    fn absorbing_zero_state_has_zero_q() {
        let m = grid_world(3, 3, &[], (0, 0), 0.9).unwrap();
        let vi = value_iteration_exact(&m, 1e-12).unwrap();
        let q = q_values_exact(&m, &vi.values).unwrap();
        assert!(q.row(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let q = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert_eq!(greedy(&q), vec![0, 1]);
    }

    #[test]
    fn optimal_dominates_random_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [
            chain_mdp(5, 0.9).unwrap(),
            grid_world(10, 10, &[], (0, 0), 0.9).unwrap(),
            random_mdp(20, 3, 0.8, 2).unwrap(),
        ] {
            let tol = 1e-10;
            let vi = value_iteration_exact(&m, tol).unwrap();
            // V* is within tol/(1−γ) of the true optimum.
            let slack = tol / (1.0 - m.gamma()) + 1e-10;
            for _ in 0..100 {
                let acts: Vec<usize> = (0..m.n_states())
                    .map(|_| rng.random_range(0..m.n_actions()))
                    .collect();
                let v = policy_evaluation_exact(&m, &Policy::Deterministic(acts)).unwrap();
                assert!(v.iter().zip(vi.values.iter()).all(|(a, b)| *a <= b + slack));
            }
        }
    }

    #[test]
    fn bad_tolerance() {
        assert!(value_iteration_exact(&chain_mdp(2, 0.5).unwrap(), 0.0).is_err());
    }
}
