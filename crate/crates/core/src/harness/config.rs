//! Experiment configs in the flat `key = value` format.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::basis::Laplacian;
use crate::envs::{chain_mdp, grid_world, random_mdp, two_room_world, MdpModel};
use crate::error::{Error, Result};
use crate::kv::{self, Entry};
use crate::learners::{
    AlphaSchedule, Hyper, Link, PSchedule, ScalerMode, TraceMode, DEFAULT_SCALER_FLOOR,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnvSpec {
    Chain {
        n: usize,
    },
    Grid {
        width: usize,
        height: usize,
    },
    TwoRoom,
    Random {
        states: usize,
        actions: usize,
        seed: u64,
    },
    MountainCar,
}

impl EnvSpec {
    pub fn is_discrete(&self) -> bool {
        !matches!(self, EnvSpec::MountainCar)
    }

    /// The tabular model; `None` for mountain car. Grids put the goal in
    /// the bottom-right corner.
    pub fn model(&self, gamma: f64) -> Result<Option<MdpModel>> {
        Ok(Some(match *self {
            EnvSpec::Chain { n } => chain_mdp(n, gamma)?,
            EnvSpec::Grid { width, height } => {
                if width == 0 || height == 0 {
                    return Err(Error::invalid("grid must have positive width and height"));
                }
                grid_world(width, height, &[], (height - 1, width - 1), gamma)?
            }
            EnvSpec::TwoRoom => two_room_world(gamma)?,
            EnvSpec::Random {
                states,
                actions,
                seed,
            } => random_mdp(states, actions, gamma, seed)?,
            EnvSpec::MountainCar => return Ok(None),
        }))
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::Chain { n } => write!(f, "chain {n}"),
            EnvSpec::Grid { width, height } => write!(f, "grid {width} {height}"),
            EnvSpec::TwoRoom => write!(f, "two_room"),
            EnvSpec::Random {
                states,
                actions,
                seed,
            } => write!(f, "random {states} {actions} {seed}"),
            EnvSpec::MountainCar => write!(f, "mountain_car"),
        }
    }
}

impl FromStr for EnvSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        Ok(match toks[..] {
            ["chain", n] => EnvSpec::Chain { n: num(n)? },
            ["grid", w, h] => EnvSpec::Grid {
                width: num(w)?,
                height: num(h)?,
            },
            ["two_room"] => EnvSpec::TwoRoom,
            ["random", n, a, seed] => EnvSpec::Random {
                states: num(n)?,
                actions: num(a)?,
                seed: num(seed)?,
            },
            ["mountain_car"] => EnvSpec::MountainCar,
            _ => {
                return Err(Error::Parse(format!(
                    "unknown environment {s:?}; expected chain N, grid W H, two_room, random N A SEED or mountain_car"
                )))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BasisSpec {
    Tabular,
    Pvf {
        k: usize,
        laplacian: Laplacian,
    },
    Fourier {
        order: usize,
    },
    /// `per_dim` centers along each unit-rescaled state dimension.
    Rbf {
        per_dim: usize,
        width: f64,
    },
    Polynomial {
        degree: usize,
    },
}

impl BasisSpec {
    pub fn is_discrete(&self) -> bool {
        matches!(self, BasisSpec::Tabular | BasisSpec::Pvf { .. })
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisSpec::Tabular => write!(f, "tabular"),
            BasisSpec::Pvf { k, laplacian } => write!(f, "pvf {k} {}", laplacian.name()),
            BasisSpec::Fourier { order } => write!(f, "fourier {order}"),
            BasisSpec::Rbf { per_dim, width } => write!(f, "rbf {per_dim} {width}"),
            BasisSpec::Polynomial { degree } => write!(f, "polynomial {degree}"),
        }
    }
}

impl FromStr for BasisSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        Ok(match toks[..] {
            ["tabular"] => BasisSpec::Tabular,
            ["pvf", k] => BasisSpec::Pvf {
                k: num(k)?,
                laplacian: Laplacian::Combinatorial,
            },
            ["pvf", k, kind] => BasisSpec::Pvf {
                k: num(k)?,
                laplacian: Laplacian::from_name(kind)?,
            },
            ["fourier", order] => BasisSpec::Fourier { order: num(order)? },
            ["rbf", n, width] => BasisSpec::Rbf {
                per_dim: num(n)?,
                width: num(width)?,
            },
            ["polynomial", degree] => BasisSpec::Polynomial { degree: num(degree)? },
            _ => {
                return Err(Error::Parse(format!(
                    "unknown basis {s:?}; expected tabular, pvf K [kind], fourier ORDER, rbf N WIDTH or polynomial DEGREE"
                )))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Task {
    /// Learn V^π of a fixed behaviour policy.
    #[default]
    Evaluate,
    /// ε-greedy Q-learning.
    Control,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Evaluate => "evaluate",
            Task::Control => "control",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "evaluate" => Ok(Task::Evaluate),
            "control" => Ok(Task::Control),
            _ => Err(Error::Parse(format!(
                "expected `evaluate` or `control`, got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PolicySpec {
    #[default]
    Uniform,
    Constant(usize),
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Uniform => write!(f, "uniform"),
            PolicySpec::Constant(a) => write!(f, "constant {a}"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        match toks[..] {
            ["uniform"] => Ok(PolicySpec::Uniform),
            ["constant", a] => Ok(PolicySpec::Constant(num(a)?)),
            _ => Err(Error::Parse(format!(
                "expected `uniform` or `constant A`, got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearnerKind {
    Td,
    Mirror,
    SparseMirror,
    Composite,
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::Td => "td",
            LearnerKind::Mirror => "mirror",
            LearnerKind::SparseMirror => "sparse_mirror",
            LearnerKind::Composite => "composite",
        })
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "td" => Ok(LearnerKind::Td),
            "mirror" => Ok(LearnerKind::Mirror),
            "sparse_mirror" => Ok(LearnerKind::SparseMirror),
            "composite" => Ok(LearnerKind::Composite),
            _ => Err(Error::Parse(format!(
                "unknown learner {s:?}; expected td, mirror, sparse_mirror or composite"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub basis: BasisSpec,
    /// Gaussian noise columns appended to a discrete basis.
    pub noise: usize,
    pub noise_seed: u64,
    pub task: Task,
    pub policy: PolicySpec,
    pub learner: LearnerKind,
    pub link: Link,
    pub scaler: ScalerMode,
    pub scaler_floor: f64,
    /// `hyper.gamma` is also the environment discount.
    pub hyper: Hyper,
    /// Multiplies ε after every episode.
    pub epsilon_decay: f64,
    pub episodes: usize,
    pub max_steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Greedy policy improvement every K evaluation episodes; 0 disables.
    pub improve_every: usize,
}

impl ExperimentConfig {
    /// Defaults for every optional key.
    pub fn new(env: EnvSpec, learner: LearnerKind) -> Self {
        let continuous = !env.is_discrete();
        ExperimentConfig {
            env,
            basis: if continuous {
                BasisSpec::Fourier { order: 4 }
            } else {
                BasisSpec::Tabular
            },
            noise: 0,
            noise_seed: 0,
            task: if continuous {
                Task::Control
            } else {
                Task::Evaluate
            },
            policy: PolicySpec::Uniform,
            learner,
            link: Link::PNorm,
            scaler: ScalerMode::Features,
            scaler_floor: DEFAULT_SCALER_FLOOR,
            hyper: Hyper::default(),
            epsilon_decay: 1.0,
            episodes: 100,
            max_steps: 1000,
            trials: 1,
            seed: 0,
            out: PathBuf::from("out"),
            improve_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.episodes == 0 || self.trials == 0 || self.max_steps == 0 {
            return Err(Error::invalid(
                "episodes, trials and max_steps must be at least 1",
            ));
        }
        if !(self.scaler_floor > 0.0 && self.scaler_floor.is_finite()) {
            return Err(Error::invalid("scaler floor must be positive"));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::invalid("epsilon_decay must lie in (0, 1]"));
        }
        if self.env.is_discrete() != self.basis.is_discrete() {
            return Err(Error::invalid(format!(
                "basis `{}` does not fit environment `{}`",
                self.basis, self.env
            )));
        }
        if self.noise > 0 && !self.env.is_discrete() {
            return Err(Error::invalid("noise features need a finite state space"));
        }
        if !self.env.is_discrete() && self.task == Task::Evaluate {
            return Err(Error::invalid("mountain_car supports only task = control"));
        }
        if self.improve_every > 0 && self.task != Task::Evaluate {
            return Err(Error::invalid(
                "improve_every applies to evaluation runs only",
            ));
        }
        match (self.env, self.basis) {
            (EnvSpec::Chain { n } | EnvSpec::Random { states: n, .. }, _) if n == 0 => {
                Err(Error::invalid("environment needs at least one state"))
            }
            (_, BasisSpec::Rbf { per_dim: 0, .. }) => Err(Error::invalid(
                "rbf needs at least one center per dimension",
            )),
            _ => Ok(()),
        }
    }

    /// Every key, defaults included; `parse_config` reads it back unchanged.
    pub fn to_text(&self) -> String {
        let h = &self.hyper;
        let mut out = String::new();
        let mut put = |k: &str, v: &dyn fmt::Display| writeln!(out, "{k} = {v}").unwrap();
        put("env", &self.env);
        put("gamma", &h.gamma);
        put("basis", &self.basis);
        put("noise", &self.noise);
        put("noise_seed", &self.noise_seed);
        put("task", &self.task);
        put("policy", &self.policy);
        put("learner", &self.learner);
        put("link", &self.link);
        put("scaler", &self.scaler);
        put("scaler_floor", &self.scaler_floor);
        put("alpha", &h.alpha);
        put("lambda", &h.lambda);
        put("beta", &h.beta);
        put("p", &h.p);
        put("epsilon", &h.epsilon);
        put("epsilon_decay", &self.epsilon_decay);
        put("trace", &h.trace);
        put("episodes", &self.episodes);
        put("max_steps", &self.max_steps);
        put("trials", &self.trials);
        put("seed", &self.seed);
        put("out", &self.out.display());
        put("improve_every", &self.improve_every);
        out
    }

    /// Replaces one key, as a sweep cell does.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let entry = Entry {
            line: 0,
            key: key.to_string(),
            value: value.to_string(),
        };
        self.apply(&entry)
    }

    fn apply(&mut self, e: &Entry) -> Result<()> {
        let h = &mut self.hyper;
        match e.key.as_str() {
            "env" => self.env = e.parse()?,
            "gamma" => h.gamma = e.parse()?,
            "basis" => self.basis = e.parse()?,
            "noise" => self.noise = e.parse()?,
            "noise_seed" => self.noise_seed = e.parse()?,
            "task" => self.task = e.parse()?,
            "policy" => self.policy = e.parse()?,
            "learner" => self.learner = e.parse()?,
            "link" => self.link = e.parse()?,
            "scaler" => self.scaler = e.parse()?,
            "scaler_floor" => self.scaler_floor = e.parse()?,
            "alpha" => h.alpha = e.parse::<AlphaSchedule>()?,
            "lambda" => h.lambda = e.parse()?,
            "beta" => h.beta = e.parse()?,
            "p" => h.p = e.parse::<PSchedule>()?,
            "epsilon" => h.epsilon = e.parse()?,
            "epsilon_decay" => self.epsilon_decay = e.parse()?,
            "trace" => h.trace = e.parse::<TraceMode>()?,
            "episodes" => self.episodes = e.parse()?,
            "max_steps" => self.max_steps = e.parse()?,
            "trials" => self.trials = e.parse()?,
            "seed" => self.seed = e.parse()?,
            "out" => self.out = PathBuf::from(&e.value),
            "improve_every" => self.improve_every = e.parse()?,
            other => {
                return Err(Error::Config {
                    line: e.line,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
        Ok(())
    }
}

/// Keys accepted by [`parse_config`].
pub const CONFIG_KEYS: &[&str] = &[
    "env",
    "gamma",
    "basis",
    "noise",
    "noise_seed",
    "task",
    "policy",
    "learner",
    "link",
    "scaler",
    "scaler_floor",
    "alpha",
    "lambda",
    "beta",
    "p",
    "epsilon",
    "epsilon_decay",
    "trace",
    "episodes",
    "max_steps",
    "trials",
    "seed",
    "out",
    "improve_every",
];

/// `env` and `learner` are required; everything else has a default.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let entries = kv::parse(text)?;
    if let Some(bad) = entries
        .iter()
        .find(|e| !CONFIG_KEYS.contains(&e.key.as_str()))
    {
        return Err(Error::Config {
            line: bad.line,
            message: format!("unknown key `{}`", bad.key),
        });
    }
    let find = |k: &str| entries.iter().find(|e| e.key == k);
    let env: EnvSpec = find("env")
        .ok_or_else(|| Error::MissingKey("env".into()))?
        .parse()?;
    let learner = find("learner").ok_or_else(|| Error::MissingKey("learner".into()))?;
    let mut cfg = ExperimentConfig::new(env, learner.parse()?);
    for e in &entries {
        cfg.apply(e)?;
    }
    cfg.validate().map_err(|err| {
        let line = entries.last().map_or(0, |e| e.line);
        match err {
            Error::InvalidInput(message) | Error::Domain(message) => {
                Error::Config { line, message }
            }
            other => other,
        }
    })?;
    Ok(cfg)
}

fn num<T: FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("bad number {s:?}")))
}
