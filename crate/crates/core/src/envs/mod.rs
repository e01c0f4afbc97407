//! Benchmark MDPs and exact solvers used as verification oracles.

mod exact;
mod grid;
mod mountain_car;
mod text;

pub use exact::{
    bellman_optimality_residual, greedy, policy_evaluation_exact, q_values_exact,
    value_iteration_exact, ValueIterationResult,
};
pub(crate) use grid::check_connected;
pub use grid::{grid_from_ascii, grid_world, two_room_world, Cell, GridLayout, TWO_ROOM_MAP};
pub use mountain_car::{MountainCar, MOUNTAIN_CAR_ACTIONS};
pub(crate) use text::write_matrix;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row-sum tolerance for transition probabilities and stochastic policies.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite MDP with transition tensor `P[a][s][s']` and rewards `R[a][s][s']`.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpModel {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<DMatrix<f64>>,
    rewards: Vec<DMatrix<f64>>,
    gamma: f64,
    terminal: Vec<bool>,
    layout: Option<GridLayout>,
}

impl MdpModel {
    pub fn new(
        transitions: Vec<DMatrix<f64>>,
        rewards: Vec<DMatrix<f64>>,
        gamma: f64,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let n_actions = transitions.len();
        if n_actions == 0 {
            return Err(Error::invalid("an MDP needs at least one action"));
        }
        let n_states = transitions[0].nrows();
        if n_states == 0 {
            return Err(Error::invalid("an MDP needs at least one state"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid(format!(
                "discount must lie in [0, 1), got {gamma}"
            )));
        }
        if rewards.len() != n_actions {
            return Err(Error::DimensionMismatch {
                expected: n_actions,
                got: rewards.len(),
            });
        }
        if terminal.len() != n_states {
            return Err(Error::DimensionMismatch {
                expected: n_states,
                got: terminal.len(),
            });
        }
        for (a, (p, r)) in transitions.iter().zip(&rewards).enumerate() {
            if p.shape() != (n_states, n_states) || r.shape() != (n_states, n_states) {
                return Err(Error::invalid(format!(
                    "action {a}: expected {n_states}x{n_states} tables"
                )));
            }
            if let Some(x) = r.iter().find(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("action {a}: non-finite reward {x}")));
            }
            for s in 0..n_states {
                let row = p.row(s);
                if row.iter().any(|&x| !(x >= 0.0)) {
                    return Err(Error::invalid(format!(
                        "P[{a}][{s}] has a negative or non-finite entry"
                    )));
                }
                let total = row.sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::invalid(format!(
                        "P[{a}][{s}] sums to {total}, not 1"
                    )));
                }
            }
        }
        Ok(MdpModel {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
            terminal,
            layout: None,
        })
    }

    pub(crate) fn with_layout(mut self, layout: GridLayout) -> Self {
        self.layout = Some(layout);
        self
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same dynamics under a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut m = MdpModel::new(
            self.transitions.clone(),
            self.rewards.clone(),
            gamma,
            self.terminal.clone(),
        )?;
        m.layout = self.layout.clone();
        Ok(m)
    }

    pub fn transition(&self, action: usize) -> &DMatrix<f64> {
        &self.transitions[action]
    }

    pub fn reward(&self, action: usize) -> &DMatrix<f64> {
        &self.rewards[action]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> &[bool] {
        &self.terminal
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        self.layout.as_ref()
    }

    /// E[r | s, a].
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.transitions[a]
            .row(s)
            .iter()
            .zip(self.rewards[a].row(s).iter())
            .map(|(p, r)| p * r)
            .sum()
    }

    /// P^π as an `n × n` matrix.
    pub fn policy_transition(&self, policy: &Policy) -> Result<DMatrix<f64>> {
        policy.validate(self)?;
        let n = self.n_states;
        let mut out = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let pa = policy.prob(s, a);
                if pa != 0.0 {
                    for t in 0..n {
                        out[(s, t)] += pa * self.transitions[a][(s, t)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// R^π: expected one-step reward under the policy.
    pub fn policy_reward(&self, policy: &Policy) -> Result<DVector<f64>> {
        policy.validate(self)?;
        Ok(DVector::from_fn(self.n_states, |s, _| {
            (0..self.n_actions)
                .map(|a| policy.prob(s, a) * self.expected_reward(s, a))
                .sum()
        }))
    }

    /// Symmetric state-connectivity graph: `A[s][s'] = 1` when some action
    /// moves between the two states in either direction. Self-loops are dropped.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.n_states;
        let mut adj = DMatrix::zeros(n, n);
        for p in &self.transitions {
            for s in 0..n {
                for t in 0..n {
                    if s != t && p[(s, t)] > 0.0 {
                        adj[(s, t)] = 1.0;
                        adj[(t, s)] = 1.0;
                    }
                }
            }
        }
        adj
    }

    fn sample_next(&self, s: usize, a: usize, rng: &mut impl Rng) -> usize {
        let row = self.transitions[a].row(s);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = s;
        for (t, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = t;
                if u < acc {
                    return t;
                }
            }
        }
        last
    }
}

/// A deterministic or stochastic policy over a finite MDP.
#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    Deterministic(Vec<usize>),
    /// `n_states × n_actions` row-stochastic matrix.
    Stochastic(DMatrix<f64>),
}

impl Policy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy::Stochastic(DMatrix::from_element(
            n_states,
            n_actions,
            1.0 / n_actions as f64,
        ))
    }

    pub fn constant(n_states: usize, action: usize) -> Self {
        Policy::Deterministic(vec![action; n_states])
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        match self {
            Policy::Deterministic(acts) => {
                if acts[s] == a {
                    1.0
                } else {
                    0.0
                }
            }
            Policy::Stochastic(m) => m[(s, a)],
        }
    }

    pub fn validate(&self, m: &MdpModel) -> Result<()> {
        match self {
            Policy::Deterministic(acts) => {
                if acts.len() != m.n_states {
                    return Err(Error::DimensionMismatch {
                        expected: m.n_states,
                        got: acts.len(),
                    });
                }
                if let Some(&a) = acts.iter().find(|&&a| a >= m.n_actions) {
                    return Err(Error::invalid(format!("policy action {a} out of range")));
                }
            }
            Policy::Stochastic(p) => {
                if p.shape() != (m.n_states, m.n_actions) {
                    return Err(Error::invalid("stochastic policy has the wrong shape"));
                }
                for s in 0..m.n_states {
                    let row = p.row(s);
                    if row.iter().any(|&x| !(x >= 0.0)) || (row.sum() - 1.0).abs() > STOCHASTIC_TOL
                    {
                        return Err(Error::invalid(format!(
                            "policy row {s} is not a distribution"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, s: usize, rng: &mut impl Rng) -> usize {
        match self {
            Policy::Deterministic(acts) => acts[s],
            Policy::Stochastic(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let n = p.ncols();
                for a in 0..n {
                    acc += p[(s, a)];
                    if u < acc {
                        return a;
                    }
                }
                n - 1
            }
        }
    }
}

/// One observed step `(s, a, r, s', terminal)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<S> {
    pub state: S,
    pub action: usize,
    pub reward: f64,
    pub next_state: S,
    pub terminal: bool,
}

/// Result of stepping an environment.
#[derive(Clone, Debug, PartialEq)]
pub struct Step<S> {
    pub next_state: S,
    pub reward: f64,
    pub terminal: bool,
}

/// Episodic environments with a finite action set.
pub trait Environment {
    type State: Clone;

    fn n_actions(&self) -> usize;

    fn reset(&self, rng: &mut ChaCha8Rng) -> Self::State;

    fn step(&self, state: &Self::State, action: usize, rng: &mut ChaCha8Rng) -> Step<Self::State>;
}

/// Episodes on a finite MDP start uniformly among non-terminal states.
impl Environment for MdpModel {
    type State = usize;

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn reset(&self, rng: &mut ChaCha8Rng) -> usize {
        let live: Vec<usize> = (0..self.n_states).filter(|&s| !self.terminal[s]).collect();
        if live.is_empty() {
            rng.random_range(0..self.n_states)
        } else {
            live[rng.random_range(0..live.len())]
        }
    }

    fn step(&self, &s: &usize, action: usize, rng: &mut ChaCha8Rng) -> Step<usize> {
        let t = self.sample_next(s, action, rng);
        Step {
            next_state: t,
            reward: self.rewards[action][(s, t)],
            terminal: self.terminal[t],
        }
    }
}

/// Seeded rollout: stops at a terminal state or after `max_steps`.
pub fn rollout<E, P>(
    env: &E,
    mut policy: P,
    max_steps: usize,
    seed: u64,
) -> Result<Vec<Transition<E::State>>>
where
    E: Environment,
    P: FnMut(&E::State, &mut ChaCha8Rng) -> usize,
{
    if max_steps == 0 {
        return Err(Error::invalid("max_steps must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(&mut rng);
    let mut trace = Vec::new();
    for _ in 0..max_steps {
        let action = policy(&state, &mut rng);
        let step = env.step(&state, action, &mut rng);
        let done = step.terminal;
        trace.push(Transition {
            state: state.clone(),
            action,
            reward: step.reward,
            next_state: step.next_state.clone(),
            terminal: done,
        });
        if done {
            break;
        }
        state = step.next_state;
    }
    Ok(trace)
}

/// Deterministic left/right chain; entering (or staying in) the rightmost
/// state pays 1. Action 0 moves left, action 1 moves right.
pub fn chain_mdp(n: usize, gamma: f64) -> Result<MdpModel> {
    if n == 0 {
        return Err(Error::invalid("chain needs at least one state"));
    }
    let mut left = DMatrix::zeros(n, n);
    let mut right = DMatrix::zeros(n, n);
    for s in 0..n {
        left[(s, s.saturating_sub(1))] = 1.0;
        right[(s, (s + 1).min(n - 1))] = 1.0;
    }
    let mut reward = DMatrix::zeros(n, n);
    reward.column_mut(n - 1).fill(1.0);
    MdpModel::new(
        vec![left, right],
        vec![reward.clone(), reward],
        gamma,
        vec![false; n],
    )
}

/// Dense random MDP: transition rows are normalized uniforms, rewards uniform in [0, 1).
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> Result<MdpModel> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::invalid("random MDP needs states and actions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n_actions);
    let mut rewards = Vec::with_capacity(n_actions);
    for _ in 0..n_actions {
        let mut p = DMatrix::from_fn(n_states, n_states, |_, _| rng.random::<f64>() + 1e-3);
        for mut row in p.row_iter_mut() {
            let total = row.sum();
            row /= total;
        }
        transitions.push(p);
        rewards.push(DMatrix::from_fn(n_states, n_states, |_, _| {
            rng.random::<f64>()
        }));
    }
    MdpModel::new(transitions, rewards, gamma, vec![false; n_states])
}
