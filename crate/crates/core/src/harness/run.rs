//! Seeded multi-trial execution.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BasisSpec, ExperimentConfig, LearnerKind, PolicySpec, Task};
use crate::analysis::{run_metrics, PolicyOperator, WeightedNorm};
use crate::basis::{
    fourier_basis, noisy_augment, polynomial_basis, pvf_basis, rbf_basis, tabular_basis,
    FeatureBasis, StateActionBasis,
};
use crate::envs::{greedy, q_values_exact, Environment, MdpModel, MountainCar, Policy};
use crate::error::{Error, Result};
use crate::learners::{action_values, epsilon_greedy, AdaptiveScaler, Learner, Rule};

/// One row per (trial, episode).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub trial: usize,
    pub episode: usize,
    pub steps: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    /// NaN when the environment has no model.
    pub bellman_error: f64,
    pub delta_l2: f64,
    pub delta_linf: f64,
    pub l1_norm: f64,
    pub nnz: usize,
    /// Written to its own table so the main one stays reproducible.
    #[serde(skip)]
    pub wall_clock_per_step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEvent {
    pub trial: usize,
    pub episode: usize,
    pub step: u64,
    pub norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub learner: Learner,
    /// Φw (evaluation) or max_a Q (control) per state, for finite environments.
    pub values: Option<DVector<f64>>,
    pub divergence: Option<DivergenceEvent>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
}

impl ExperimentOutput {
    /// All rows sorted by (trial, episode).
    pub fn records(&self) -> Vec<RunRecord> {
        let mut rows: Vec<RunRecord> = self
            .trials
            .iter()
            .flat_map(|t| t.records.iter().cloned())
            .collect();
        rows.sort_by_key(|r| (r.trial, r.episode));
        rows
    }

    pub fn divergences(&self) -> Vec<DivergenceEvent> {
        self.trials.iter().filter_map(|t| t.divergence).collect()
    }
}

enum World {
    Finite(MdpModel),
    Car(MountainCar),
}

fn build_basis(cfg: &ExperimentConfig, model: Option<&MdpModel>) -> Result<FeatureBasis> {
    let base = match (cfg.basis, model) {
        (BasisSpec::Tabular, Some(m)) => tabular_basis(m.n_states())?,
        (BasisSpec::Pvf { k, laplacian }, Some(m)) => pvf_basis(&m.adjacency(), k, laplacian)?,
        (BasisSpec::Fourier { order }, None) => fourier_basis(order, MountainCar::bounds())?,
        (BasisSpec::Polynomial { degree }, None) => {
            polynomial_basis(degree, MountainCar::bounds())?
        }
        (BasisSpec::Rbf { per_dim, width }, None) => {
            let dims = MountainCar::bounds().len();
            rbf_basis(unit_grid(per_dim, dims), vec![width])?
        }
        _ => {
            return Err(Error::invalid(format!(
                "basis `{}` does not fit `{}`",
                cfg.basis, cfg.env
            )))
        }
    };
    if cfg.noise > 0 {
        noisy_augment(&base, cfg.noise, cfg.noise_seed)
    } else {
        Ok(base)
    }
}

/// Centers on a regular grid over the unit cube.
fn unit_grid(per_dim: usize, dims: usize) -> Vec<Vec<f64>> {
    let ticks: Vec<f64> = match per_dim {
        1 => vec![0.5],
        n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    };
    let mut out = vec![Vec::new()];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                ticks.iter().map(move |&t| {
                    let mut c = prefix.clone();
                    c.push(t);
                    c
                })
            })
            .collect();
    }
    out
}

fn build_rule(cfg: &ExperimentConfig, d: usize) -> Result<Rule> {
    Ok(match cfg.learner {
        LearnerKind::Td => Rule::Td,
        LearnerKind::Mirror => Rule::Mirror {
            link: cfg.link,
            sparse: false,
        },
        LearnerKind::SparseMirror => Rule::Mirror {
            link: cfg.link,
            sparse: true,
        },
        LearnerKind::Composite => {
            Rule::Composite(AdaptiveScaler::new(d, cfg.scaler_floor, cfg.scaler)?)
        }
    })
}

fn behaviour_policy(spec: PolicySpec, m: &MdpModel) -> Result<Policy> {
    let policy = match spec {
        PolicySpec::Uniform => Policy::uniform(m.n_states(), m.n_actions()),
        PolicySpec::Constant(a) => Policy::constant(m.n_states(), a),
    };
    policy.validate(m)?;
    Ok(policy)
}

/// Runs every trial, in parallel on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let model = cfg.env.model(cfg.hyper.gamma)?;
    let basis = build_basis(cfg, model.as_ref())?;
    let world = match model {
        Some(m) => World::Finite(m),
        None => World::Car(MountainCar {
            horizon: cfg.max_steps,
        }),
    };
    let trials: Vec<Result<TrialResult>> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, &world, &basis, i))
        .collect();
    let trials = trials.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput {
        config: cfg.clone(),
        trials,
    })
}

/// Same as [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<ExperimentOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(cfg))
}

fn run_trial(
    cfg: &ExperimentConfig,
    world: &World,
    basis: &FeatureBasis,
    trial: usize,
) -> Result<TrialResult> {
    let seed = cfg.seed.wrapping_add(trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match (world, cfg.task) {
        (World::Finite(m), Task::Evaluate) => evaluate_trial(cfg, m, basis, trial, seed, &mut rng),
        (World::Finite(m), Task::Control) => {
            let phi = basis.matrix()?;
            let rows: Vec<DVector<f64>> =
                (0..m.n_states()).map(|s| phi.row(s).transpose()).collect();
            let mut visits = vec![0usize; m.n_states() * m.n_actions()];
            let mut out = control_trial(
                cfg,
                m,
                basis,
                |s: &usize| Ok(rows[*s].clone()),
                |s: &usize, a| visits[s * m.n_actions() + a] += 1,
                trial,
                seed,
                &mut rng,
            )?;
            let sab = StateActionBasis::new(basis.clone(), m.n_actions())?;
            let q_of = |w: &DVector<f64>| q_table(w, &sab, &rows);
            let total: usize = visits.iter().sum();
            let rho = DVector::from_iterator(
                visits.len(),
                visits.iter().map(|&c| c as f64 / total.max(1) as f64),
            );
            for (record, w) in out.0.records.iter_mut().zip(&out.1) {
                record.bellman_error = q_residual(m, &q_of(w)?, &rho);
            }
            let q = q_of(out.0.learner.weights())?;
            out.0.values = Some(DVector::from_fn(m.n_states(), |s, _| q.row(s).max()));
            Ok(out.0)
        }
        (World::Car(car), _) => {
            let (mut result, _) = control_trial(
                cfg,
                car,
                basis,
                |s: &[f64; 2]| continuous_features(basis, s),
                |_, _| {},
                trial,
                seed,
                &mut rng,
            )?;
            for r in &mut result.records {
                r.bellman_error = f64::NAN;
            }
            Ok(result)
        }
    }
}

fn continuous_features(basis: &FeatureBasis, s: &[f64; 2]) -> Result<DVector<f64>> {
    match basis {
        FeatureBasis::Rbf(_) => {
            let unit: Vec<f64> = MountainCar::bounds()
                .iter()
                .zip(s)
                .map(|((lo, hi), x)| ((x - lo) / (hi - lo)).clamp(0.0, 1.0))
                .collect();
            basis.features_at(&unit)
        }
        _ => basis.features_at(s),
    }
}

fn q_table(
    w: &DVector<f64>,
    sab: &StateActionBasis,
    rows: &[DVector<f64>],
) -> Result<DMatrix<f64>> {
    let mut q = DMatrix::zeros(rows.len(), sab.n_actions);
    for (s, phi) in rows.iter().enumerate() {
        for (a, v) in action_values(w, sab, phi)?.into_iter().enumerate() {
            q[(s, a)] = v;
        }
    }
    Ok(q)
}

/// Visit-weighted ‖T*Q − Q‖ over state-action pairs, with terminal states
/// valued at zero.
fn q_residual(m: &MdpModel, q: &DMatrix<f64>, rho: &DVector<f64>) -> f64 {
    let n = m.n_states();
    let v = DVector::from_fn(n, |s, _| {
        if m.is_terminal(s) {
            0.0
        } else {
            q.row(s).max()
        }
    });
    let mut total = 0.0;
    for s in 0..n {
        for a in 0..m.n_actions() {
            let weight = rho[s * m.n_actions() + a];
            if weight == 0.0 {
                continue;
            }
            let p = m.transition(a);
            let r = m.reward(a);
            let backup: f64 = (0..n)
                .map(|t| p[(s, t)] * (r[(s, t)] + m.gamma() * v[t]))
                .sum();
            total += weight * (backup - q[(s, a)]).powi(2);
        }
    }
    total.sqrt()
}

fn per_step(start: Instant, steps: usize) -> f64 {
    (start.elapsed().as_secs_f64() / steps.max(1) as f64).max(f64::MIN_POSITIVE)
}

fn evaluate_trial(
    cfg: &ExperimentConfig,
    m: &MdpModel,
    basis: &FeatureBasis,
    trial: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TrialResult> {
    let phi = basis.matrix()?;
    let rows: Vec<DVector<f64>> = (0..m.n_states()).map(|s| phi.row(s).transpose()).collect();
    let d = basis.dim();
    let mut learner = Learner::new(d, cfg.hyper, build_rule(cfg, d)?)?;
    let mut policies = vec![behaviour_policy(cfg.policy, m)?];
    let mut episode_policy = Vec::new();
    let mut history = Vec::new();
    let mut visits = Vec::new();
    let mut partial = Vec::new();
    let mut divergence = None;

    'episodes: for episode in 0..cfg.episodes {
        learner.start_episode();
        let policy = policies.last().unwrap().clone();
        let mut s = m.reset(rng);
        let mut steps = 0;
        let mut ret = 0.0;
        let start = Instant::now();
        while steps < cfg.max_steps {
            let a = policy.sample(s, rng);
            let st = m.step(&s, a, rng);
            visits.push(s);
            let next = (!st.terminal).then(|| &rows[st.next_state]);
            match learner.td(&rows[s], next, st.reward) {
                Err(Error::Divergence { step, norm }) => {
                    divergence = Some(DivergenceEvent {
                        trial,
                        episode,
                        step,
                        norm,
                    });
                    break 'episodes;
                }
                other => {
                    other?;
                }
            }
            ret += st.reward;
            steps += 1;
            if st.terminal {
                break;
            }
            s = st.next_state;
        }
        partial.push((episode, steps, ret, per_step(start, steps)));
        history.push(learner.weights().clone());
        episode_policy.push(policies.len() - 1);
        if cfg.improve_every > 0 && (episode + 1) % cfg.improve_every == 0 {
            let q = q_values_exact(m, &(&phi * learner.weights()))?;
            policies.push(Policy::Deterministic(greedy(&q)));
        }
    }

    let mut records = Vec::with_capacity(history.len());
    if !history.is_empty() {
        let norm = WeightedNorm::from_visits(&visits, m.n_states())?;
        let ops = policies
            .iter()
            .map(|p| PolicyOperator::new(m, p))
            .collect::<Result<Vec<_>>>()?;
        let plain = run_metrics(&history, None)?;
        for (k, metrics) in plain.into_iter().enumerate() {
            let (episode, steps, ret, clock) = partial[k];
            let op = &ops[episode_policy[k]];
            let bellman = run_metrics(std::slice::from_ref(&history[k]), Some((op, &phi, &norm)))?
                [0]
            .bellman_error;
            records.push(RunRecord {
                trial,
                episode,
                steps,
                ret,
                bellman_error: bellman,
                delta_l2: metrics.delta_l2,
                delta_linf: metrics.delta_linf,
                l1_norm: metrics.l1_norm,
                nnz: metrics.nnz,
                wall_clock_per_step: clock,
            });
        }
    }
    let values = Some(&phi * learner.weights());
    Ok(TrialResult {
        trial,
        seed,
        records,
        learner,
        values,
        divergence,
    })
}

/// Q-learning on any environment; returns the trial and the per-episode weights.
#[allow(clippy::too_many_arguments)]
fn control_trial<E, F, V>(
    cfg: &ExperimentConfig,
    env: &E,
    basis: &FeatureBasis,
    features: F,
    mut visit: V,
    trial: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(TrialResult, Vec<DVector<f64>>)>
where
    E: Environment,
    F: Fn(&E::State) -> Result<DVector<f64>>,
    V: FnMut(&E::State, usize),
{
    let sab = StateActionBasis::new(basis.clone(), env.n_actions())?;
    let d = sab.dim();
    let mut learner = Learner::new(d, cfg.hyper, build_rule(cfg, d)?)?;
    let mut epsilon = cfg.hyper.epsilon;
    let mut history = Vec::new();
    let mut partial = Vec::new();
    let mut divergence = None;

    'episodes: for episode in 0..cfg.episodes {
        learner.start_episode();
        let mut s = env.reset(rng);
        let mut phi_s = features(&s)?;
        let mut steps = 0;
        let mut ret = 0.0;
        let start = Instant::now();
        while steps < cfg.max_steps {
            let values = action_values(learner.weights(), &sab, &phi_s)?;
            let a = epsilon_greedy(&values, epsilon, rng);
            let st = env.step(&s, a, rng);
            visit(&s, a);
            let phi_next = if st.terminal {
                None
            } else {
                Some(features(&st.next_state)?)
            };
            match learner.q(&sab, &phi_s, a, phi_next.as_ref(), st.reward) {
                Err(Error::Divergence { step, norm }) => {
                    divergence = Some(DivergenceEvent {
                        trial,
                        episode,
                        step,
                        norm,
                    });
                    break 'episodes;
                }
                other => {
                    other?;
                }
            }
            ret += st.reward;
            steps += 1;
            match phi_next {
                Some(next) => {
                    s = st.next_state;
                    phi_s = next;
                }
                None => break,
            }
        }
        partial.push((episode, steps, ret, per_step(start, steps)));
        history.push(learner.weights().clone());
        epsilon *= cfg.epsilon_decay;
    }

    let mut records = Vec::with_capacity(history.len());
    if !history.is_empty() {
        for (k, metrics) in run_metrics(&history, None)?.into_iter().enumerate() {
            let (episode, steps, ret, clock) = partial[k];
            records.push(RunRecord {
                trial,
                episode,
                steps,
                ret,
                bellman_error: f64::NAN,
                delta_l2: metrics.delta_l2,
                delta_linf: metrics.delta_linf,
                l1_norm: metrics.l1_norm,
                nnz: metrics.nnz,
                wall_clock_per_step: clock,
            });
        }
    }
    Ok((
        TrialResult {
            trial,
            seed,
            records,
            learner,
            values: None,
            divergence,
        },
        history,
    ))
}
