//! Linear TD and Q-learning with mirror-descent, sparse mirror-descent and
//! composite (adaptively scaled, l1-regularized) updates.
//!
//! Every update shares the same skeleton: compute the TD error
//! δ = r + γ·v(s′) − ⟨φ(s), w⟩, refresh the eligibility trace, then move
//! the weights. The rules differ only in the last part.
//!
//! With the negative-entropy link, signed weights are represented as
//! w = w⁺ − w⁻ with both halves strictly positive. The dual vector holds
//! ∇ψ of the stacked `[w⁺; w⁻]` and the TD direction enters as `[+e; −e]`.

mod schedule;
mod snapshot;

pub use schedule::{alpha_schedule, initial_p, p_schedule, AlphaSchedule, PSchedule};

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;

use crate::basis::StateActionBasis;
use crate::error::{Error, Result};
use crate::geometry::{shrink, soft_threshold_mut, MirrorMap};

/// Runs abort once any weight exceeds this magnitude.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Floor η added to the adaptive scale √G.
pub const DEFAULT_SCALER_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TraceMode {
    /// e ← γλe + φ.
    #[default]
    Standard,
    /// e ← e + λγφ, never decayed.
    Literal,
}

/// Eligibility-trace update in place.
pub fn trace_update(
    e: &mut DVector<f64>,
    phi: &DVector<f64>,
    gamma: f64,
    lambda: f64,
    mode: TraceMode,
) {
    match mode {
        TraceMode::Standard => {
            e.scale_mut(gamma * lambda);
            *e += phi;
        }
        TraceMode::Literal => e.axpy(lambda * gamma, phi, 1.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub alpha: AlphaSchedule,
    pub lambda: f64,
    pub gamma: f64,
    pub beta: f64,
    pub p: PSchedule,
    pub epsilon: f64,
    pub trace: TraceMode,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            alpha: AlphaSchedule::Constant { alpha0: 0.1 },
            lambda: 0.0,
            gamma: 0.9,
            beta: 0.0,
            p: PSchedule::default(),
            epsilon: 0.1,
            trace: TraceMode::Standard,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        self.alpha.validate()?;
        self.p.validate()?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Dual geometry for the mirror learners.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Link {
    Euclidean,
    /// p-norm link with p taken from the hyperparameter schedule.
    PNorm,
    /// Exponentiated gradient on the doubled representation.
    Entropy {
        mass: Option<f64>,
    },
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Link::Euclidean => write!(f, "euclidean"),
            Link::PNorm => write!(f, "pnorm"),
            Link::Entropy { mass: None } => write!(f, "entropy"),
            Link::Entropy { mass: Some(m) } => write!(f, "entropy {m}"),
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        match toks[..] {
            ["euclidean"] => Ok(Link::Euclidean),
            ["pnorm"] => Ok(Link::PNorm),
            ["entropy"] => Ok(Link::Entropy { mass: None }),
            ["entropy", m] => {
                let mass: f64 = m
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad mass {m:?}")))?;
                MirrorMap::neg_entropy(Some(mass))?;
                Ok(Link::Entropy { mass: Some(mass) })
            }
            _ => Err(Error::Parse(format!(
                "expected `euclidean`, `pnorm` or `entropy [mass]`, got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScalerMode {
    /// G accumulates φ(s)².
    #[default]
    Features,
    /// G accumulates (δe)².
    Gradient,
}

/// Per-coordinate scale H = √G + η for composite updates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveScaler {
    pub g: DVector<f64>,
    pub eta: f64,
    pub mode: ScalerMode,
}

impl AdaptiveScaler {
    pub fn new(d: usize, eta: f64, mode: ScalerMode) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!(
                "scaler floor must be positive, got {eta}"
            )));
        }
        Ok(AdaptiveScaler {
            g: DVector::zeros(d),
            eta,
            mode,
        })
    }

    #[inline]
    pub fn h(&self, i: usize) -> f64 {
        self.g[i].sqrt() + self.eta
    }

    pub fn h_diag(&self) -> DVector<f64> {
        self.g.map(|g| g.sqrt() + self.eta)
    }
}

/// Which update moves the weights.
#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    Td,
    Mirror { link: Link, sparse: bool },
    Composite(AdaptiveScaler),
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Td => "td",
            Rule::Mirror { sparse: false, .. } => "mirror",
            Rule::Mirror { sparse: true, .. } => "sparse_mirror",
            Rule::Composite(_) => "composite",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState {
    pub w: DVector<f64>,
    /// Dual weights. Equals `w` for the identity geometry; has length 2d
    /// under the entropy link.
    pub theta: DVector<f64>,
    pub e: DVector<f64>,
    pub t: u64,
    pub hyper: Hyper,
    /// `[w⁺; w⁻]` under the entropy link.
    pub split: Option<DVector<f64>>,
    /// Map that produced the current dual weights.
    pub map: MirrorMap,
}

impl LearnerState {
    /// Zero weights in a geometry; under the entropy link both halves start
    /// at ∇ψ*(0) so that w = 0.
    pub fn new(d: usize, hyper: Hyper, link: Option<Link>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        hyper.validate()?;
        let w = DVector::zeros(d);
        let (map, theta, split) = match link {
            Some(Link::Entropy { mass }) => {
                let map = MirrorMap::neg_entropy(mass)?;
                let theta = DVector::zeros(2 * d);
                let split = map.grad_conjugate(&theta)?;
                (map, theta, Some(split))
            }
            Some(Link::PNorm) => (MirrorMap::p_norm(hyper.p.at(0, d))?, w.clone(), None),
            _ => (MirrorMap::Euclidean, w.clone(), None),
        };
        Ok(LearnerState {
            e: DVector::zeros(d),
            w,
            theta,
            t: 0,
            hyper,
            split,
            map,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Clear the eligibility trace at an episode boundary.
    pub fn start_episode(&mut self) {
        self.e.fill(0.0);
    }

    pub fn value(&self, phi: &DVector<f64>) -> f64 {
        phi.dot(&self.w)
    }

    /// ‖w − ∇ψ*(θ)‖_∞ under the map that produced θ.
    pub fn consistency_error(&self) -> Result<f64> {
        let back = self.map.grad_conjugate(&self.theta)?;
        Ok(match &self.split {
            Some(split) => {
                let d = self.dim();
                let from_split = split.rows(0, d) - split.rows(d, d);
                (&back - split).amax().max((from_split - &self.w).amax())
            }
            None => (back - &self.w).amax(),
        })
    }

    fn check_dim(&self, phi: &DVector<f64>) -> Result<()> {
        if phi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: phi.len(),
            });
        }
        Ok(())
    }

    fn guard(&self) -> Result<()> {
        let mut norm = 0.0f64;
        for &x in self.w.iter() {
            if !x.is_finite() {
                norm = f64::INFINITY;
                break;
            }
            norm = norm.max(x.abs());
        }
        if norm > DIVERGENCE_LIMIT {
            return Err(Error::Divergence { step: self.t, norm });
        }
        Ok(())
    }
}

/// Diagnostic values of a single update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub delta: f64,
    pub alpha: f64,
}

/// One update of any rule given the bootstrapped next value v(s′)
/// (0 for terminal transitions).
pub fn update(
    state: &mut LearnerState,
    rule: &mut Rule,
    phi: &DVector<f64>,
    next_value: f64,
    reward: f64,
) -> Result<StepInfo> {
    match rule {
        Rule::Td => step_with(state, phi, next_value, reward, |s, step| {
            s.w.axpy(step.alpha * step.delta, &s.e, 1.0);
            s.theta.copy_from(&s.w);
            Ok(())
        }),
        Rule::Mirror { link, sparse } => {
            let (link, sparse) = (*link, *sparse);
            step_with(state, phi, next_value, reward, |s, step| {
                mirror_update(s, link, sparse, step)
            })
        }
        Rule::Composite(scaler) => step_with(state, phi, next_value, reward, |s, step| {
            composite_update(s, scaler, phi, step)
        }),
    }
}

/// Scalars of the current step handed to the weight update.
#[derive(Clone, Copy)]
struct Scalars {
    alpha: f64,
    delta: f64,
}

fn step_with(
    state: &mut LearnerState,
    phi: &DVector<f64>,
    next_value: f64,
    reward: f64,
    apply: impl FnOnce(&mut LearnerState, Scalars) -> Result<()>,
) -> Result<StepInfo> {
    state.check_dim(phi)?;
    if !next_value.is_finite() || !reward.is_finite() {
        return Err(Error::invalid("non-finite reward or bootstrap value"));
    }
    let h = state.hyper;
    let alpha = h.alpha.at(state.t);
    let delta = reward + h.gamma * next_value - phi.dot(&state.w);
    trace_update(&mut state.e, phi, h.gamma, h.lambda, h.trace);
    apply(state, Scalars { alpha, delta })?;
    state.t += 1;
    state.guard()?;
    Ok(StepInfo { delta, alpha })
}

fn mirror_update(
    state: &mut LearnerState,
    link: Link,
    sparse: bool,
    Scalars { alpha, delta }: Scalars,
) -> Result<()> {
    let d = state.dim();
    let step = alpha * delta;
    let threshold = alpha * state.hyper.beta;
    match link {
        Link::Entropy { .. } => {
            let split = state
                .split
                .as_ref()
                .expect("entropy state carries its split");
            let mut theta = state.map.grad(split)?;
            theta.rows_mut(0, d).axpy(step, &state.e, 1.0);
            theta.rows_mut(d, d).axpy(-step, &state.e, 1.0);
            if sparse {
                soft_threshold_mut(&mut theta, threshold);
            }
            let split = state.map.grad_conjugate(&theta)?;
            state.w = split.rows(0, d) - split.rows(d, d);
            state.theta = theta;
            state.split = Some(split);
        }
        Link::Euclidean | Link::PNorm => {
            let map = match link {
                Link::PNorm => MirrorMap::p_norm(state.hyper.p.at(state.t, d))?,
                _ => MirrorMap::Euclidean,
            };
            let mut theta = map.grad(&state.w)?;
            theta.axpy(step, &state.e, 1.0);
            if sparse {
                soft_threshold_mut(&mut theta, threshold);
            }
            state.w = map.grad_conjugate(&theta)?;
            state.theta = theta;
            state.map = map;
        }
    }
    Ok(())
}

fn composite_update(
    state: &mut LearnerState,
    scaler: &mut AdaptiveScaler,
    phi: &DVector<f64>,
    Scalars { alpha, delta }: Scalars,
) -> Result<()> {
    if scaler.g.len() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: scaler.g.len(),
        });
    }
    let beta = state.hyper.beta;
    for i in 0..state.dim() {
        let xi = delta * state.e[i];
        scaler.g[i] += match scaler.mode {
            ScalerMode::Features => phi[i] * phi[i],
            ScalerMode::Gradient => xi * xi,
        };
        let h = scaler.h(i);
        state.w[i] = shrink(state.w[i] + alpha * xi / h, alpha * beta / h);
    }
    state.theta.copy_from(&state.w);
    Ok(())
}

fn next_value(state: &LearnerState, phi_next: Option<&DVector<f64>>) -> Result<f64> {
    match phi_next {
        Some(p) => {
            state.check_dim(p)?;
            Ok(p.dot(&state.w))
        }
        None => Ok(0.0),
    }
}

/// Linear TD(λ); `phi_next = None` marks a terminal transition. With λ = 0
/// this is w ← w + αδφ(s).
pub fn td0_step(
    state: &mut LearnerState,
    phi: &DVector<f64>,
    phi_next: Option<&DVector<f64>>,
    reward: f64,
) -> Result<StepInfo> {
    let v = next_value(state, phi_next)?;
    update(state, &mut Rule::Td, phi, v, reward)
}

/// Mirror-descent TD(λ): θ = ∇ψ(w) + αδe, w = ∇ψ*(θ).
pub fn mirror_td_step(
    state: &mut LearnerState,
    link: Link,
    phi: &DVector<f64>,
    phi_next: Option<&DVector<f64>>,
    reward: f64,
) -> Result<StepInfo> {
    let v = next_value(state, phi_next)?;
    update(
        state,
        &mut Rule::Mirror {
            link,
            sparse: false,
        },
        phi,
        v,
        reward,
    )
}

/// As [`mirror_td_step`] with the dual vector soft-thresholded by αβ
/// before the pull-back.
pub fn sparse_mirror_td_step(
    state: &mut LearnerState,
    link: Link,
    phi: &DVector<f64>,
    phi_next: Option<&DVector<f64>>,
    reward: f64,
) -> Result<StepInfo> {
    let v = next_value(state, phi_next)?;
    update(
        state,
        &mut Rule::Mirror { link, sparse: true },
        phi,
        v,
        reward,
    )
}

/// Adaptively scaled proximal step: z = w + αδe/H, w = shrink(z, αβ/H).
pub fn composite_md_step(
    state: &mut LearnerState,
    scaler: &mut AdaptiveScaler,
    phi: &DVector<f64>,
    phi_next: Option<&DVector<f64>>,
    reward: f64,
) -> Result<StepInfo> {
    let v = next_value(state, phi_next)?;
    step_with(state, phi, v, reward, |s, step| {
        composite_update(s, scaler, phi, step)
    })
}

/// ⟨φ(s, a), w⟩ for every action, computed blockwise from φ(s).
pub fn action_values(
    w: &DVector<f64>,
    basis: &StateActionBasis,
    phi_s: &DVector<f64>,
) -> Result<Vec<f64>> {
    let d = basis.base.dim();
    if phi_s.len() != d || w.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: w.len(),
        });
    }
    Ok((0..basis.n_actions)
        .map(|a| w.rows(a * d, d).dot(phi_s))
        .collect())
}

/// Highest value, lowest index on exact ties.
pub fn greedy_action(values: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = a;
        }
    }
    best
}

/// Uniformly random action with probability ε, else greedy.
pub fn epsilon_greedy(values: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    if u < epsilon {
        rng.random_range(0..values.len())
    } else {
        greedy_action(values)
    }
}

/// Q-learning target: max over next actions, 0 when terminal.
fn max_next(
    state: &LearnerState,
    basis: &StateActionBasis,
    phi_next: Option<&DVector<f64>>,
) -> Result<f64> {
    match phi_next {
        Some(p) => Ok(action_values(&state.w, basis, p)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)),
        None => Ok(0.0),
    }
}

/// Q-learning update for any rule, with state features `phi_s` lifted to
/// the block of `action` and the target maximized over next actions.
pub fn q_step(
    state: &mut LearnerState,
    rule: &mut Rule,
    basis: &StateActionBasis,
    phi_s: &DVector<f64>,
    action: usize,
    phi_next: Option<&DVector<f64>>,
    reward: f64,
) -> Result<StepInfo> {
    let v = max_next(state, basis, phi_next)?;
    let phi = basis.lift(phi_s, action)?;
    update(state, rule, &phi, v, reward)
}

pub fn q_learning_step(
    state: &mut LearnerState,
    basis: &StateActionBasis,
    phi_s: &DVector<f64>,
    action: usize,
    phi_next: Option<&DVector<f64>>,
    reward: f64,
) -> Result<StepInfo> {
    q_step(state, &mut Rule::Td, basis, phi_s, action, phi_next, reward)
}

pub fn mirror_q_step(
    state: &mut LearnerState,
    link: Link,
    basis: &StateActionBasis,
    phi_s: &DVector<f64>,
    action: usize,
    phi_next: Option<&DVector<f64>>,
    reward: f64,
) -> Result<StepInfo> {
    let mut rule = Rule::Mirror {
        link,
        sparse: false,
    };
    q_step(state, &mut rule, basis, phi_s, action, phi_next, reward)
}

pub fn sparse_mirror_q_step(
    state: &mut LearnerState,
    link: Link,
    basis: &StateActionBasis,
    phi_s: &DVector<f64>,
    action: usize,
    phi_next: Option<&DVector<f64>>,
    reward: f64,
) -> Result<StepInfo> {
    let mut rule = Rule::Mirror { link, sparse: true };
    q_step(state, &mut rule, basis, phi_s, action, phi_next, reward)
}

pub fn composite_q_step(
    state: &mut LearnerState,
    scaler: &mut AdaptiveScaler,
    basis: &StateActionBasis,
    phi_s: &DVector<f64>,
    action: usize,
    phi_next: Option<&DVector<f64>>,
    reward: f64,
) -> Result<StepInfo> {
    let v = max_next(state, basis, phi_next)?;
    let phi = basis.lift(phi_s, action)?;
    step_with(state, &phi, v, reward, |s, step| {
        composite_update(s, scaler, &phi, step)
    })
}

/// A learner state bundled with its update rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Learner {
    pub state: LearnerState,
    pub rule: Rule,
}

impl Learner {
    pub fn new(d: usize, hyper: Hyper, rule: Rule) -> Result<Self> {
        let link = match &rule {
            Rule::Mirror { link, .. } => Some(*link),
            Rule::Composite(s) if s.g.len() != d => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.g.len(),
                })
            }
            _ => None,
        };
        Ok(Learner {
            state: LearnerState::new(d, hyper, link)?,
            rule,
        })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.state.w
    }

    pub fn start_episode(&mut self) {
        self.state.start_episode();
    }

    pub fn td(
        &mut self,
        phi: &DVector<f64>,
        phi_next: Option<&DVector<f64>>,
        reward: f64,
    ) -> Result<StepInfo> {
        let v = next_value(&self.state, phi_next)?;
        update(&mut self.state, &mut self.rule, phi, v, reward)
    }

    pub fn q(
        &mut self,
        basis: &StateActionBasis,
        phi_s: &DVector<f64>,
        action: usize,
        phi_next: Option<&DVector<f64>>,
        reward: f64,
    ) -> Result<StepInfo> {
        q_step(
            &mut self.state,
            &mut self.rule,
            basis,
            phi_s,
            action,
            phi_next,
            reward,
        )
    }
}
