//! Feature constructions φ(s) for linear value-function approximation.
//!
//! Discrete bases (tabular, proto-value functions, noise-augmented
//! matrices) are indexed by state; continuous bases (Fourier, RBF,
//! polynomial) are evaluated at a point. [`StateActionBasis`] lifts any
//! base to state-action features by placing φ(s) in the block of the
//! chosen action.

mod pvf;
mod text;

pub use pvf::{laplacian, pvf_basis, Laplacian};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Origin of a basis stored as an explicit `n_states × d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixKind {
    /// Laplacian eigenvectors and their eigenvalues.
    Pvf {
        laplacian: Laplacian,
        eigenvalues: Vec<f64>,
    },
    /// `base_dim` leading columns from another basis, the rest standard normal noise.
    Noisy {
        base_dim: usize,
        seed: u64,
    },
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureBasis {
    Tabular { n_states: usize },
    Matrix { kind: MatrixKind, phi: DMatrix<f64> },
    Fourier(Fourier),
    Rbf(Rbf),
    Polynomial(Polynomial),
}

/// One-hot indicator features over `n_states` states.
pub fn tabular_basis(n_states: usize) -> Result<FeatureBasis> {
    if n_states == 0 {
        return Err(Error::invalid("tabular basis needs at least one state"));
    }
    Ok(FeatureBasis::Tabular { n_states })
}

/// Explicit feature matrix with one row per state.
pub fn matrix_basis(phi: DMatrix<f64>) -> Result<FeatureBasis> {
    if phi.nrows() == 0 || phi.ncols() == 0 {
        return Err(Error::invalid("feature matrix must be non-empty"));
    }
    if phi.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("feature matrix has non-finite entries"));
    }
    Ok(FeatureBasis::Matrix {
        kind: MatrixKind::Custom,
        phi,
    })
}

/// Append `n_noise` standard-normal columns, drawn once per (state, feature)
/// in row-major order from a stream keyed by `seed`.
pub fn noisy_augment(base: &FeatureBasis, n_noise: usize, seed: u64) -> Result<FeatureBasis> {
    let n = base
        .n_states()
        .ok_or_else(|| Error::invalid("noise augmentation requires a finite state space"))?;
    if n_noise == 0 {
        return Ok(base.clone());
    }
    let phi_base = base.matrix()?;
    let d = phi_base.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = DMatrix::zeros(n, d + n_noise);
    for s in 0..n {
        for j in 0..d {
            phi[(s, j)] = phi_base[(s, j)];
        }
        for j in 0..n_noise {
            phi[(s, d + j)] = StandardNormal.sample(&mut rng);
        }
    }
    Ok(FeatureBasis::Matrix {
        kind: MatrixKind::Noisy { base_dim: d, seed },
        phi,
    })
}

pub fn fourier_basis(order: usize, bounds: Vec<(f64, f64)>) -> Result<FeatureBasis> {
    Fourier::new(order, bounds).map(FeatureBasis::Fourier)
}

pub fn rbf_basis(centers: Vec<Vec<f64>>, widths: Vec<f64>) -> Result<FeatureBasis> {
    Rbf::new(centers, widths).map(FeatureBasis::Rbf)
}

pub fn polynomial_basis(degree: usize, bounds: Vec<(f64, f64)>) -> Result<FeatureBasis> {
    Polynomial::new(degree, bounds).map(FeatureBasis::Polynomial)
}

impl FeatureBasis {
    pub fn dim(&self) -> usize {
        match self {
            FeatureBasis::Tabular { n_states } => *n_states,
            FeatureBasis::Matrix { phi, .. } => phi.ncols(),
            FeatureBasis::Fourier(f) => f.coefficients.len(),
            FeatureBasis::Rbf(r) => r.centers.len(),
            FeatureBasis::Polynomial(p) => p.exponents.len(),
        }
    }

    /// Number of states for discrete bases.
    pub fn n_states(&self) -> Option<usize> {
        match self {
            FeatureBasis::Tabular { n_states } => Some(*n_states),
            FeatureBasis::Matrix { phi, .. } => Some(phi.nrows()),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.n_states().is_some()
    }

    /// φ(s) for a discrete state.
    pub fn features(&self, s: usize) -> Result<DVector<f64>> {
        match self {
            FeatureBasis::Tabular { n_states } => {
                if s >= *n_states {
                    return Err(Error::InvalidState {
                        state: s,
                        n_states: *n_states,
                    });
                }
                let mut v = DVector::zeros(*n_states);
                v[s] = 1.0;
                Ok(v)
            }
            FeatureBasis::Matrix { phi, .. } => {
                if s >= phi.nrows() {
                    return Err(Error::InvalidState {
                        state: s,
                        n_states: phi.nrows(),
                    });
                }
                Ok(phi.row(s).transpose())
            }
            _ => Err(Error::invalid(
                "continuous basis evaluated at a discrete state",
            )),
        }
    }

    /// φ(x) for a continuous state.
    pub fn features_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        match self {
            FeatureBasis::Fourier(f) => f.evaluate(x),
            FeatureBasis::Rbf(r) => r.evaluate(x),
            FeatureBasis::Polynomial(p) => p.evaluate(x),
            _ => Err(Error::invalid(
                "discrete basis evaluated at a continuous state",
            )),
        }
    }

    /// True when `x` lies outside the bounds a continuous basis rescales by
    /// (the point is clamped before evaluation).
    pub fn clamps(&self, x: &[f64]) -> bool {
        let bounds = match self {
            FeatureBasis::Fourier(f) => &f.bounds,
            FeatureBasis::Polynomial(p) => &p.bounds,
            _ => return false,
        };
        x.iter().zip(bounds).any(|(v, (lo, hi))| v < lo || v > hi)
    }

    /// The full `n_states × d` matrix Φ of a discrete basis.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            FeatureBasis::Tabular { n_states } => Ok(DMatrix::identity(*n_states, *n_states)),
            FeatureBasis::Matrix { phi, .. } => Ok(phi.clone()),
            _ => Err(Error::invalid("continuous bases have no state matrix")),
        }
    }
}

/// Feature lookup for an environment's state type.
pub trait Featurizer<S: ?Sized> {
    fn phi(&self, state: &S) -> Result<DVector<f64>>;
}

impl Featurizer<usize> for FeatureBasis {
    fn phi(&self, state: &usize) -> Result<DVector<f64>> {
        self.features(*state)
    }
}

impl Featurizer<[f64]> for FeatureBasis {
    fn phi(&self, state: &[f64]) -> Result<DVector<f64>> {
        self.features_at(state)
    }
}

impl<const N: usize> Featurizer<[f64; N]> for FeatureBasis {
    fn phi(&self, state: &[f64; N]) -> Result<DVector<f64>> {
        self.features_at(state)
    }
}

/// φ(s, a): the base features placed in the block of action `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateActionBasis {
    pub base: FeatureBasis,
    pub n_actions: usize,
}

impl StateActionBasis {
    pub fn new(base: FeatureBasis, n_actions: usize) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::invalid(
                "state-action basis needs at least one action",
            ));
        }
        Ok(StateActionBasis { base, n_actions })
    }

    pub fn dim(&self) -> usize {
        self.base.dim() * self.n_actions
    }

    /// Lift precomputed state features into the block of `action`.
    pub fn lift(&self, phi_s: &DVector<f64>, action: usize) -> Result<DVector<f64>> {
        if action >= self.n_actions {
            return Err(Error::invalid(format!("action {action} out of range")));
        }
        let d = self.base.dim();
        if phi_s.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: phi_s.len(),
            });
        }
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(action * d, d).copy_from(phi_s);
        Ok(out)
    }

    pub fn features<S: ?Sized>(&self, state: &S, action: usize) -> Result<DVector<f64>>
    where
        FeatureBasis: Featurizer<S>,
    {
        self.lift(&self.base.phi(state)?, action)
    }
}

/// Full-grid Fourier cosine basis cos(π c·s̄), c ∈ {0..order}^dim, with s̄
/// the state rescaled to the unit cube.
#[derive(Clone, Debug, PartialEq)]
pub struct Fourier {
    pub order: usize,
    pub bounds: Vec<(f64, f64)>,
    pub coefficients: Vec<Vec<f64>>,
}

impl Fourier {
    pub fn new(order: usize, bounds: Vec<(f64, f64)>) -> Result<Self> {
        check_bounds(&bounds)?;
        let coefficients = multi_indices(bounds.len(), order)
            .into_iter()
            .map(|c| c.into_iter().map(|x| x as f64).collect())
            .collect();
        Ok(Fourier {
            order,
            bounds,
            coefficients,
        })
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DVector<f64>> {
        let unit = unit_scale(&self.bounds, x)?;
        Ok(DVector::from_iterator(
            self.coefficients.len(),
            self.coefficients.iter().map(|c| {
                let arg: f64 = c.iter().zip(&unit).map(|(ci, si)| ci * si).sum();
                (PI * arg).cos()
            }),
        ))
    }
}

/// Gaussian bumps exp(−‖x − cᵢ‖² / σᵢ²).
#[derive(Clone, Debug, PartialEq)]
pub struct Rbf {
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
}

impl Rbf {
    /// A single width is broadcast to every center.
    pub fn new(centers: Vec<Vec<f64>>, widths: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::invalid("RBF basis needs at least one center"));
        }
        let dim = centers[0].len();
        if dim == 0 || centers.iter().any(|c| c.len() != dim) {
            return Err(Error::invalid(
                "RBF centers must share a positive dimension",
            ));
        }
        let widths = match widths.len() {
            1 => vec![widths[0]; centers.len()],
            n if n == centers.len() => widths,
            n => {
                return Err(Error::invalid(format!(
                    "expected 1 or {} widths, got {n}",
                    centers.len()
                )))
            }
        };
        if widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("RBF widths must be positive"));
        }
        Ok(Rbf { centers, widths })
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DVector<f64>> {
        let dim = self.centers[0].len();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        Ok(DVector::from_iterator(
            self.centers.len(),
            self.centers.iter().zip(&self.widths).map(|(c, w)| {
                let r2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (-r2 / (w * w)).exp()
            }),
        ))
    }
}

/// Monomials Π s̄ᵢ^{eᵢ} of total degree ≤ `degree` on the unit-rescaled state.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub degree: usize,
    pub bounds: Vec<(f64, f64)>,
    pub exponents: Vec<Vec<usize>>,
}

impl Polynomial {
    pub fn new(degree: usize, bounds: Vec<(f64, f64)>) -> Result<Self> {
        check_bounds(&bounds)?;
        let mut exponents: Vec<Vec<usize>> = multi_indices(bounds.len(), degree)
            .into_iter()
            .filter(|e| e.iter().sum::<usize>() <= degree)
            .collect();
        exponents.sort_by_key(|e| e.iter().sum::<usize>());
        Ok(Polynomial {
            degree,
            bounds,
            exponents,
        })
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DVector<f64>> {
        let unit = unit_scale(&self.bounds, x)?;
        Ok(DVector::from_iterator(
            self.exponents.len(),
            self.exponents.iter().map(|e| {
                e.iter()
                    .zip(&unit)
                    .map(|(&k, s)| s.powi(k as i32))
                    .product()
            }),
        ))
    }
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::invalid(
            "state bounds must cover at least one dimension",
        ));
    }
    for (i, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "dimension {i}: need lo < hi, got [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

fn unit_scale(bounds: &[(f64, f64)], x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("state has non-finite coordinates"));
    }
    Ok(x.iter()
        .zip(bounds)
        .map(|(v, (lo, hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect())
}

/// All of {0..=max}^dim in lexicographic order (first index slowest).
fn multi_indices(dim: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=max).map(move |k| {
                    let mut next = prefix.clone();
                    next.push(k);
                    next
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn tabular_one_hot() {
        let b = tabular_basis(3).unwrap();
        assert_eq!(b.features(1).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(
            tabular_basis(1).unwrap().features(0).unwrap().as_slice(),
            &[1.0]
        );
        for s in 0..3 {
            assert_eq!(b.features(s).unwrap().sum(), 1.0);
        }
        assert!(matches!(b.features(3), Err(Error::InvalidState { .. })));
        assert!(tabular_basis(0).is_err());
    }

    #[test]
    fn fourier_shapes() {
        let f = fourier_basis(0, vec![(0.0, 1.0)]).unwrap();
        assert_eq!(f.features_at(&[0.3]).unwrap().as_slice(), &[1.0]);
        let f = fourier_basis(4, vec![(-1.2, 0.6), (-0.07, 0.07)]).unwrap();
        assert_eq!(f.dim(), 25);
        let at_lo = f.features_at(&[-1.2, -0.07]).unwrap();
        assert!(at_lo.iter().all(|&x| x == 1.0));
        // c = 0 is the first, constant feature.
        assert_eq!(f.features_at(&[0.1, 0.01]).unwrap()[0], 1.0);
    }

    #[test]
    fn fourier_clamps_out_of_bounds() {
        let f = fourier_basis(3, vec![(0.0, 1.0)]).unwrap();
        assert!(f.clamps(&[1.5]));
        assert!(!f.clamps(&[0.5]));
        assert_eq!(
            f.features_at(&[1.5]).unwrap(),
            f.features_at(&[1.0]).unwrap()
        );
        assert!(f.features_at(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn fourier_bounded_on_many_states() {
        let f = fourier_basis(4, vec![(-1.2, 0.6), (-0.07, 0.07)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100_000 {
            let x = [rng.random_range(-1.5..1.0), rng.random_range(-0.1..0.1)];
            let phi = f.features_at(&x).unwrap();
            assert!(phi.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
        }
    }

    #[test]
    fn noise_augmentation() {
        let base = tabular_basis(4).unwrap();
        assert_eq!(noisy_augment(&base, 0, 1).unwrap(), base);
        let a = noisy_augment(&base, 6, 42).unwrap();
        let b = noisy_augment(&base, 6, 42).unwrap();
        assert_eq!(a.dim(), 10);
        for s in 0..4 {
            let (x, y) = (a.features(s).unwrap(), b.features(s).unwrap());
            assert_eq!(x, y);
            assert_eq!(x.rows(0, 4), base.features(s).unwrap().rows(0, 4));
        }
        assert_ne!(a, noisy_augment(&base, 6, 43).unwrap());
        let f = fourier_basis(1, vec![(0.0, 1.0)]).unwrap();
        assert!(noisy_augment(&f, 3, 0).is_err());
    }

    #[test]
    fn noise_on_pvf_dimension() {
        let grid = crate::envs::grid_world(10, 10, &[], (0, 0), 0.9).unwrap();
        let pvf = pvf_basis(&grid.adjacency(), 50, Laplacian::Combinatorial).unwrap();
        assert_eq!(noisy_augment(&pvf, 450, 0).unwrap().dim(), 500);
    }

    #[test]
    fn rbf_examples() {
        let r = rbf_basis(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0.5]).unwrap();
        assert_eq!(r.features_at(&[0.0, 0.0]).unwrap()[0], 1.0);
        let far = r.features_at(&[10.0, -10.0]).unwrap();
        assert!(far.iter().all(|&x| x <= (-25.0f64).exp()));
        // Exactly five widths away.
        let one = rbf_basis(vec![vec![0.0]], vec![0.5]).unwrap();
        assert_relative_eq!(one.features_at(&[2.5]).unwrap()[0], (-25.0f64).exp());
        assert!(rbf_basis(vec![], vec![1.0]).is_err());
        assert!(rbf_basis(vec![vec![0.0]], vec![0.0]).is_err());
    }

    #[test]
    fn polynomial_examples() {
        let p = polynomial_basis(0, vec![(0.0, 2.0), (0.0, 1.0)]).unwrap();
        assert_eq!(p.features_at(&[1.3, 0.2]).unwrap().as_slice(), &[1.0]);
        let p = polynomial_basis(2, vec![(0.0, 2.0)]).unwrap();
        assert_eq!(p.features_at(&[1.0]).unwrap().as_slice(), &[1.0, 0.5, 0.25]);
        let p = polynomial_basis(2, vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(p.dim(), 6);
    }

    #[test]
    fn state_action_blocks() {
        let sa = StateActionBasis::new(tabular_basis(3).unwrap(), 2).unwrap();
        assert_eq!(sa.dim(), 6);
        assert_eq!(
            sa.features(&2usize, 1).unwrap().as_slice(),
            &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert!(sa.features(&0usize, 2).is_err());
        let f = StateActionBasis::new(fourier_basis(1, vec![(0.0, 1.0)]).unwrap(), 3).unwrap();
        let phi = f.features(&[0.5][..], 1).unwrap();
        assert_eq!(phi.len(), 6);
        assert!(phi.rows(0, 2).iter().all(|&x| x == 0.0));
        assert!(phi.rows(4, 2).iter().all(|&x| x == 0.0));
    }

    proptest! {
        #[test]
        fn evaluation_is_deterministic(x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let bases = [
                fourier_basis(3, vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap(),
                rbf_basis(vec![vec![0.0, 0.0], vec![0.5, -0.5]], vec![1.0, 0.3]).unwrap(),
                polynomial_basis(3, vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap(),
            ];
            for b in &bases {
                let a = b.features_at(&[x, y]).unwrap();
                prop_assert_eq!(a.len(), b.dim());
                prop_assert!(a.iter().all(|v| v.is_finite()));
                prop_assert_eq!(a, b.features_at(&[x, y]).unwrap());
            }
        }

        #[test]
        fn single_active_block(s in 0usize..5, a in 0usize..3) {
            let sa = StateActionBasis::new(noisy_augment(&tabular_basis(5).unwrap(), 2, 9).unwrap(), 3).unwrap();
            let phi = sa.features(&s, a).unwrap();
            let d = sa.base.dim();
            for block in 0..3 {
                let nonzero = phi.rows(block * d, d).iter().any(|&x| x != 0.0);
                prop_assert_eq!(nonzero, block == a);
            }
        }
    }
}
