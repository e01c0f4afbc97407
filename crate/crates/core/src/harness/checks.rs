//! Verification suites behind `check --suite`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{
    contraction_check, sparse_td_error_bound, stationary_distribution, BoundInputs, BoundReport,
    PolicyOperator, WeightedNorm,
};
use crate::basis::{pvf_basis, Laplacian};
use crate::envs::{chain_mdp, random_mdp, Environment, Policy};
use crate::error::{Error, Result};
use crate::geometry::{soft_threshold, MirrorMap};
use crate::learners::{AlphaSchedule, Hyper, Learner, Link, PSchedule, Rule};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Geometry,
    Contraction,
    Bound,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Geometry => "geometry",
            Suite::Contraction => "contraction",
            Suite::Bound => "bound",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometry" => Ok(Suite::Geometry),
            "contraction" => Ok(Suite::Contraction),
            "bound" => Ok(Suite::Bound),
            _ => Err(Error::invalid(format!(
                "unknown suite {s:?}; expected geometry, contraction or bound"
            ))),
        }
    }
}

/// One verified quantity: PASS iff `value <= tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub suite: String,
    pub case: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    fn new(suite: Suite, case: String, value: f64, tolerance: f64) -> Self {
        CheckRow {
            suite: suite.to_string(),
            case,
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckRow>> {
    match suite {
        Suite::Geometry => geometry_suite(seed),
        Suite::Contraction => contraction_suite(seed),
        Suite::Bound => Ok(bound_suite(seed)?.0),
    }
}

/// Link round trips over d ∈ {2, 10, 100} and the soft-threshold grid oracle.
pub fn geometry_suite(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for d in [2usize, 10, 100] {
        let mut ps = vec![2.0, 2.5, (d as f64).ln().ceil().max(2.0)];
        ps.sort_by(f64::total_cmp);
        ps.dedup();
        for p in ps {
            let map = MirrorMap::p_norm(p)?;
            let mut worst: f64 = 0.0;
            for _ in 0..1000 {
                let scale = 10f64.powf(rng.random_range(-3.0..3.0));
                let w = DVector::from_fn(d, |_, _| scale * rng.random_range(-1.0..1.0));
                let back = map.grad_conjugate(&map.grad(&w)?)?;
                worst = worst.max((back - &w).amax() / w.amax().max(1.0));
            }
            rows.push(CheckRow::new(
                Suite::Geometry,
                format!("pnorm round trip d={d} p={p}"),
                worst,
                1e-8,
            ));
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = rng.random_range(-3.0..3.0);
        let tau = rng.random_range(0.0..2.0);
        let got = soft_threshold(&DVector::from_element(1, x), tau)?[0];
        worst = worst.max((got - grid_prox(x, tau)).abs());
    }
    rows.push(CheckRow::new(
        Suite::Geometry,
        "soft threshold vs grid argmin".into(),
        worst,
        2e-5,
    ));
    Ok(rows)
}

/// argmin_w ½(w − x)² + τ|w| over a 1e-5 grid, located coarse-to-fine.
fn grid_prox(x: f64, tau: f64) -> f64 {
    let f = |w: f64| 0.5 * (w - x) * (w - x) + tau * w.abs();
    let scan = |lo: f64, step: f64, n: usize| {
        (0..=n)
            .map(|i| lo + i as f64 * step)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap()
    };
    let coarse = scan(-5.0, 1e-2, 1000);
    scan(coarse - 2e-2, 1e-5, 4000)
}

/// Random 20-state MDPs with 10 PVFs under the stationary weighting.
pub fn contraction_suite(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for gamma in [0.8, 0.9] {
        let m = random_mdp(20, 2, gamma, seed)?;
        let op = PolicyOperator::new(&m, &Policy::uniform(20, 2))?;
        let norm = WeightedNorm::new(stationary_distribution(&op.transition)?)?;
        let phi = pvf_basis(&m.adjacency(), 10, Laplacian::Combinatorial)?.matrix()?;
        for beta in [0.0, 0.01] {
            let r = contraction_check(&op, &phi, &norm, beta, 100, seed)?;
            let mut row = CheckRow::new(
                Suite::Contraction,
                format!("gamma={gamma} beta={beta} pairs={}", r.pairs_used),
                r.max_ratio,
                gamma + 1e-6,
            );
            row.pass = r.pass;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Sparse mirror TD on the 10-state chain (uniform policy, 5 PVFs, p = 2,
/// α = 0.05, β = 0.01) for 10⁴ on-policy steps, then the error bound.
pub fn bound_suite(seed: u64) -> Result<(Vec<CheckRow>, BoundReport)> {
    const STEPS: usize = 10_000;
    let m = chain_mdp(10, 0.9)?;
    let policy = Policy::uniform(10, 2);
    let op = PolicyOperator::new(&m, &policy)?;
    let norm = WeightedNorm::new(stationary_distribution(&op.transition)?)?;
    let phi = pvf_basis(&m.adjacency(), 5, Laplacian::Combinatorial)?.matrix()?;
    let hyper = Hyper {
        alpha: AlphaSchedule::constant(0.05)?,
        gamma: 0.9,
        beta: 0.01,
        p: PSchedule::Fixed(Some(2.0)),
        ..Hyper::default()
    };
    let mut learner = Learner::new(
        5,
        hyper,
        Rule::Mirror {
            link: Link::PNorm,
            sparse: true,
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<DVector<f64>> = (0..10).map(|s| phi.row(s).transpose()).collect();
    let mut s = m.reset(&mut rng);
    let mut states = Vec::with_capacity(STEPS);
    for _ in 0..STEPS {
        let a = policy.sample(s, &mut rng);
        let st = m.step(&s, a, &mut rng);
        learner.td(&rows[s], Some(&rows[st.next_state]), st.reward)?;
        states.push(s);
        s = st.next_state;
    }
    let report = sparse_td_error_bound(
        &op,
        &phi,
        &norm,
        &BoundInputs {
            weights: learner.weights().clone(),
            beta: hyper.beta,
            alpha: 0.05,
            p: 2.0,
            states,
        },
    )?;
    let mut rows = vec![CheckRow::new(
        Suite::Bound,
        "lhs <= rhs (unsquared f)".into(),
        report.lhs,
        report.rhs,
    )];
    let decomposition: f64 = report.triangle.iter().sum();
    rows.push(CheckRow::new(
        Suite::Bound,
        "lhs <= sum of triangle terms".into(),
        report.lhs,
        decomposition + 1e-12,
    ));
    Ok((rows, report))
}
