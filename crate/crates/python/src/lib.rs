//! Python module `mirror_td_py`.

use std::path::PathBuf;

use mirror_td::envs::{policy_evaluation_exact, value_iteration_exact, Policy};
use mirror_td::geometry::{self, MirrorMap};
use mirror_td::harness::{self, EnvSpec, LearnerKind, PolicySpec, Suite};
use mirror_td::learners::{
    self, AdaptiveScaler, Hyper, Link, PSchedule, Rule, ScalerMode, DEFAULT_SCALER_FLOOR,
};
use mirror_td::Error;
use nalgebra::DVector;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Divergence { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vector(xs: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(xs)
}

/// A linear value learner updated one transition at a time.
#[pyclass(module = "mirror_td_py")]
struct Learner {
    inner: learners::Learner,
}

#[pymethods]
impl Learner {
    #[new]
    #[pyo3(signature = (dim, learner = "sparse_mirror", link = "pnorm", alpha = "constant 0.01", lambda_ = 0.0, gamma = 0.9, beta = 0.0, p = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dim: usize,
        learner: &str,
        link: &str,
        alpha: &str,
        lambda_: f64,
        gamma: f64,
        beta: f64,
        p: Option<f64>,
    ) -> PyResult<Self> {
        let link: Link = link.parse().map_err(to_py)?;
        let rule = match learner.parse::<LearnerKind>().map_err(to_py)? {
            LearnerKind::Td => Rule::Td,
            LearnerKind::Mirror => Rule::Mirror {
                link,
                sparse: false,
            },
            LearnerKind::SparseMirror => Rule::Mirror { link, sparse: true },
            LearnerKind::Composite => Rule::Composite(
                AdaptiveScaler::new(dim, DEFAULT_SCALER_FLOOR, ScalerMode::Features)
                    .map_err(to_py)?,
            ),
        };
        let hyper = Hyper {
            alpha: alpha.parse().map_err(to_py)?,
            lambda: lambda_,
            gamma,
            beta,
            p: PSchedule::Fixed(p),
            ..Hyper::default()
        };
        Ok(Learner {
            inner: learners::Learner::new(dim, hyper, rule).map_err(to_py)?,
        })
    }

    /// One TD update; `phi_next=None` marks a terminal transition. Returns the TD error.
    #[pyo3(signature = (phi, phi_next, reward))]
    fn td(&mut self, phi: Vec<f64>, phi_next: Option<Vec<f64>>, reward: f64) -> PyResult<f64> {
        let next = phi_next.map(vector);
        let info = self
            .inner
            .td(&vector(phi), next.as_ref(), reward)
            .map_err(to_py)?;
        Ok(info.delta)
    }

    fn start_episode(&mut self) {
        self.inner.start_episode();
    }

    fn value(&self, phi: Vec<f64>) -> PyResult<f64> {
        let phi = vector(phi);
        if phi.len() != self.inner.weights().len() {
            return Err(to_py(Error::DimensionMismatch {
                expected: self.inner.weights().len(),
                got: phi.len(),
            }));
        }
        Ok(self.inner.weights().dot(&phi))
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().iter().copied().collect()
    }

    fn snapshot(&self) -> String {
        self.inner.to_text()
    }

    #[staticmethod]
    fn from_snapshot(text: &str) -> PyResult<Self> {
        Ok(Learner {
            inner: learners::Learner::from_text(text).map_err(to_py)?,
        })
    }
}

/// Mirror map built from "euclidean", "pnorm P", "entropy" or "entropy MASS".
#[pyclass(module = "mirror_td_py")]
struct Mirror {
    map: MirrorMap,
}

#[pymethods]
impl Mirror {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Mirror {
            map: spec.parse().map_err(to_py)?,
        })
    }

    fn grad(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .map
            .grad(&vector(w))
            .map_err(to_py)?
            .iter()
            .copied()
            .collect())
    }

    fn grad_conjugate(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .map
            .grad_conjugate(&vector(theta))
            .map_err(to_py)?
            .iter()
            .copied()
            .collect())
    }
}

#[pyfunction]
fn soft_threshold(w: Vec<f64>, tau: f64) -> PyResult<Vec<f64>> {
    Ok(geometry::soft_threshold(&vector(w), tau)
        .map_err(to_py)?
        .iter()
        .copied()
        .collect())
}

/// Exact V* or, with `policy`, V^π for a finite environment.
#[pyfunction]
#[pyo3(signature = (env, gamma, policy = None))]
fn solve_exact(env: &str, gamma: f64, policy: Option<&str>) -> PyResult<Vec<f64>> {
    let m = env
        .parse::<EnvSpec>()
        .and_then(|e| e.model(gamma))
        .map_err(to_py)?
        .ok_or_else(|| PyValueError::new_err(format!("{env} has no exact model")))?;
    let values = match policy {
        None => value_iteration_exact(&m, 1e-12).map(|r| r.values),
        Some(p) => {
            let policy = match p.parse::<PolicySpec>().map_err(to_py)? {
                PolicySpec::Uniform => Policy::uniform(m.n_states(), m.n_actions()),
                PolicySpec::Constant(a) => Policy::constant(m.n_states(), a),
            };
            policy_evaluation_exact(&m, &policy)
        }
    }
    .map_err(to_py)?;
    Ok(values.iter().copied().collect())
}

/// Runs a config and returns the per-episode rows; writes the run directory when `out` is given.
#[pyfunction]
#[pyo3(signature = (config, out = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    out: Option<PathBuf>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = harness::parse_config(config).map_err(to_py)?;
    let output = py.detach(|| harness::run_experiment(&cfg)).map_err(to_py)?;
    if let Some(dir) = out {
        harness::write_outputs(&output, &dir).map_err(to_py)?;
    }
    output
        .records()
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("trial", r.trial)?;
            d.set_item("episode", r.episode)?;
            d.set_item("steps", r.steps)?;
            d.set_item("return", r.ret)?;
            d.set_item("bellman_error", r.bellman_error)?;
            d.set_item("delta_l2", r.delta_l2)?;
            d.set_item("delta_linf", r.delta_linf)?;
            d.set_item("l1_norm", r.l1_norm)?;
            d.set_item("nnz", r.nnz)?;
            Ok(d)
        })
        .collect()
}

/// Runs a verification suite; each row is (case, value, tolerance, passed).
#[pyfunction]
#[pyo3(signature = (suite, seed = 0))]
fn check(py: Python<'_>, suite: &str, seed: u64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let suite: Suite = suite.parse().map_err(to_py)?;
    let rows = py
        .detach(|| harness::run_suite(suite, seed))
        .map_err(to_py)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.case, r.value, r.tolerance, r.pass))
        .collect())
}

#[pymodule]
fn mirror_td_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Learner>()?;
    m.add_class::<Mirror>()?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(solve_exact, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
