//! Bregman geometry: distance-generating functions, their link pairs
//! (∇ψ, ∇ψ*), Bregman divergences and the l1 proximal operator.
//!
//! Three closed-form geometries are provided:
//!
//! | variant      | ψ(w)              | ∇ψ(w)                               | ∇ψ*(θ)                               |
//! |--------------|-------------------|-------------------------------------|--------------------------------------|
//! | `Euclidean`  | ½‖w‖₂²            | w                                   | θ                                    |
//! | `PNorm(p)`   | ½‖w‖_q², 1/p+1/q=1 | sign(w)\|w\|^{q−1} / ‖w‖_q^{q−2}      | sign(θ)\|θ\|^{p−1} / ‖θ‖_p^{p−2}       |
//! | `NegEntropy` | Σ wᵢ ln wᵢ        | 1 + ln w                            | exp(θ − 1), optionally renormalized  |
//!
//! Both p-norm links are positively homogeneous of degree one, so they are
//! evaluated on the vector rescaled by its largest magnitude. This keeps
//! `|x|^p` in range for the large `p` values used in high dimension.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Dual coordinates are clamped to this magnitude before exponentiation.
pub const ENTROPY_DUAL_CLAMP: f64 = 500.0;

/// Strong-convexity modulus of ½‖w‖₂² with respect to ‖·‖₂.
pub const EUCLIDEAN_MODULUS: f64 = 1.0;

/// Strong-convexity modulus of Σ wᵢ ln wᵢ on the probability simplex with
/// respect to ‖·‖₁ (Pinsker).
pub const ENTROPY_MODULUS: f64 = 1.0;

/// A distance-generating function together with its gradient and the
/// gradient of its Legendre conjugate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MirrorMap {
    Euclidean,
    /// p-norm link with `p > 1`. The dual exponent `q = p / (p - 1)` is
    /// always derived, never stored.
    PNorm {
        p: f64,
    },
    /// Negative entropy on the positive orthant. With `mass = Some(m)` the
    /// pulled-back primal weights are renormalized to sum to `m`.
    NegEntropy {
        mass: Option<f64>,
    },
}

impl fmt::Display for MirrorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MirrorMap::Euclidean => write!(f, "euclidean"),
            MirrorMap::PNorm { p } => write!(f, "pnorm {p}"),
            MirrorMap::NegEntropy { mass: None } => write!(f, "entropy"),
            MirrorMap::NegEntropy { mass: Some(m) } => write!(f, "entropy {m}"),
        }
    }
}

impl FromStr for MirrorMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {t:?}")))
        };
        match toks[..] {
            ["euclidean"] => Ok(MirrorMap::Euclidean),
            ["pnorm", p] => MirrorMap::p_norm(num(p)?),
            ["entropy"] => MirrorMap::neg_entropy(None),
            ["entropy", m] => MirrorMap::neg_entropy(Some(num(m)?)),
            _ => Err(Error::Parse(format!("unknown mirror map {s:?}"))),
        }
    }
}

/// Dual exponent of `p`.
pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

impl MirrorMap {
    pub fn p_norm(p: f64) -> Result<Self> {
        let map = MirrorMap::PNorm { p };
        map.validate()?;
        Ok(map)
    }

    pub fn neg_entropy(mass: Option<f64>) -> Result<Self> {
        let map = MirrorMap::NegEntropy { mass };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MirrorMap::Euclidean => Ok(()),
            MirrorMap::PNorm { p } => {
                if p.is_finite() && p > 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "p-norm link requires finite p > 1, got {p}"
                    )))
                }
            }
            MirrorMap::NegEntropy { mass: Some(m) } if !(m.is_finite() && m > 0.0) => Err(
                Error::invalid(format!("entropy mass must be finite and positive, got {m}")),
            ),
            MirrorMap::NegEntropy { .. } => Ok(()),
        }
    }

    /// Strong-convexity modulus where one is known in closed form. The
    /// p-norm modulus depends on the norm it is measured in and is left
    /// unspecified.
    pub fn strong_convexity(&self) -> Option<f64> {
        match self {
            MirrorMap::Euclidean => Some(EUCLIDEAN_MODULUS),
            MirrorMap::PNorm { .. } => None,
            MirrorMap::NegEntropy { .. } => Some(ENTROPY_MODULUS),
        }
    }

    /// ψ(w).
    pub fn potential(&self, w: &DVector<f64>) -> Result<f64> {
        self.validate()?;
        check_finite(w)?;
        Ok(match *self {
            MirrorMap::Euclidean => 0.5 * w.norm_squared(),
            MirrorMap::PNorm { p } => {
                let n = scaled_norm(w.as_slice(), conjugate_exponent(p));
                0.5 * n * n
            }
            MirrorMap::NegEntropy { .. } => {
                check_positive(w)?;
                w.iter().map(|&x| x * x.ln()).sum()
            }
        })
    }

    /// ∇ψ(w): primal to dual.
    pub fn grad(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.validate()?;
        check_finite(w)?;
        match *self {
            MirrorMap::Euclidean => Ok(w.clone()),
            MirrorMap::PNorm { p } => Ok(p_norm_link(w, conjugate_exponent(p))),
            MirrorMap::NegEntropy { .. } => {
                check_positive(w)?;
                Ok(w.map(|x| 1.0 + x.ln()))
            }
        }
    }

    /// ∇ψ*(θ): dual to primal.
    pub fn grad_conjugate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.validate()?;
        check_finite(theta)?;
        match *self {
            MirrorMap::Euclidean => Ok(theta.clone()),
            MirrorMap::PNorm { p } => Ok(p_norm_link(theta, p)),
            MirrorMap::NegEntropy { mass } => Ok(entropy_pullback(theta, mass)),
        }
    }

    /// D_ψ(x, y) = ψ(x) − ψ(y) − ⟨∇ψ(y), x − y⟩.
    pub fn bregman(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x == y {
            self.potential(x)?;
            return Ok(0.0);
        }
        let value = match *self {
            MirrorMap::Euclidean => {
                check_finite(x)?;
                check_finite(y)?;
                0.5 * (x - y).norm_squared()
            }
            MirrorMap::NegEntropy { .. } => {
                check_finite(x)?;
                check_finite(y)?;
                check_positive(x)?;
                check_positive(y)?;
                // Unnormalized KL; the closed form avoids cancellation
                // between ψ(x) and ψ(y).
                x.iter()
                    .zip(y.iter())
                    .map(|(&a, &b)| a * (a / b).ln() - a + b)
                    .sum()
            }
            MirrorMap::PNorm { .. } => {
                let gy = self.grad(y)?;
                self.potential(x)? - self.potential(y)? - gy.dot(&(x - y))
            }
        };
        Ok(value.max(0.0))
    }
}

/// Entry-wise proximal operator of τ‖·‖₁.
pub fn soft_threshold(w: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!(
            "threshold must be finite and >= 0, got {tau}"
        )));
    }
    Ok(w.map(|x| shrink(x, tau)))
}

/// In-place variant of [`soft_threshold`]; `tau` must already be validated.
pub(crate) fn soft_threshold_mut(w: &mut DVector<f64>, tau: f64) {
    if tau > 0.0 {
        w.apply(|x| *x = shrink(*x, tau));
    }
}

#[inline]
pub fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// sign(v)|v|^{r−1} / ‖v‖_r^{r−2}, with the zero vector mapped to zero.
fn p_norm_link(v: &DVector<f64>, r: f64) -> DVector<f64> {
    if r == 2.0 {
        return v.clone();
    }
    let scale = v.amax();
    if scale == 0.0 {
        return DVector::zeros(v.len());
    }
    let norm = scaled_norm_unit(v.as_slice(), scale, r);
    let denom = norm.powf(r - 2.0);
    v.map(|x| {
        if x == 0.0 {
            0.0
        } else {
            let u = (x.abs() / scale).powf(r - 1.0) / denom;
            scale * u.copysign(x)
        }
    })
}

/// ‖v / scale‖_r for `scale = max|v| > 0`.
fn scaled_norm_unit(v: &[f64], scale: f64, r: f64) -> f64 {
    v.iter()
        .map(|&x| (x.abs() / scale).powf(r))
        .sum::<f64>()
        .powf(1.0 / r)
}

/// ‖v‖_r computed with max-magnitude rescaling.
pub fn scaled_norm(v: &[f64], r: f64) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        0.0
    } else {
        scale * scaled_norm_unit(v, scale, r)
    }
}

fn entropy_pullback(theta: &DVector<f64>, mass: Option<f64>) -> DVector<f64> {
    let clamped = theta.map(|t| t.clamp(-ENTROPY_DUAL_CLAMP, ENTROPY_DUAL_CLAMP));
    match mass {
        None => clamped.map(|t| (t - 1.0).exp()),
        Some(m) => {
            // Shifting by the maximum cancels in the normalization.
            let top = clamped.max();
            let raw = clamped.map(|t| (t - top).exp());
            let total = raw.sum();
            raw * (m / total)
        }
    }
}

fn check_finite(v: &DVector<f64>) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid("vector must have at least one entry"));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!(
            "entry {i} is not finite ({})",
            v[i]
        )));
    }
    Ok(())
}

fn check_positive(v: &DVector<f64>) -> Result<()> {
    match v.iter().position(|&x| x <= 0.0) {
        Some(i) => Err(Error::Domain(format!(
            "negative entropy requires strictly positive entries; entry {i} is {}",
            v[i]
        ))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn euclidean_is_identity() {
        let w = v(&[3.0, -2.0]);
        assert_eq!(MirrorMap::Euclidean.grad(&w).unwrap(), w);
        assert_eq!(
            MirrorMap::Euclidean
                .grad_conjugate(&v(&[1.0, 2.0]))
                .unwrap(),
            v(&[1.0, 2.0])
        );
    }

    #[test]
    fn p_norm_two_is_identity() {
        let w = v(&[3.0, -2.0]);
        let map = MirrorMap::p_norm(2.0).unwrap();
        assert_eq!(map.grad(&w).unwrap(), w);
        assert_eq!(map.grad_conjugate(&w).unwrap(), w);
    }

    #[test]
    fn p_norm_fixes_unit_vectors() {
        for p in [1.5, 2.5, 4.0, 10.0] {
            let map = MirrorMap::p_norm(p).unwrap();
            let e1 = v(&[1.0, 0.0, 0.0]);
            assert_relative_eq!(map.grad_conjugate(&e1).unwrap(), e1, epsilon = 1e-15);
            assert_relative_eq!(map.grad(&e1).unwrap(), e1, epsilon = 1e-15);
        }
    }

    #[test]
    fn p_norm_zero_maps_to_zero() {
        let map = MirrorMap::p_norm(4.0).unwrap();
        let z = DVector::zeros(3);
        assert_eq!(map.grad(&z).unwrap(), z);
        assert_eq!(map.grad_conjugate(&z).unwrap(), z);
    }

    #[test]
    fn p_norm_round_trip_p4() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let map = MirrorMap::p_norm(4.0).unwrap();
        let w = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let back = map.grad_conjugate(&map.grad(&w).unwrap()).unwrap();
        assert!((back - &w).amax() <= 1e-8 * w.amax().max(1.0));
    }

    #[test]
    fn p_norm_matches_unscaled_formula() {
        // Direct evaluation of the closed form without rescaling.
        let w = v(&[0.3, -0.7, 0.05, 1.2]);
        let p = 3.0;
        let q = conjugate_exponent(p);
        let nq = w
            .iter()
            .map(|x: &f64| x.abs().powf(q))
            .sum::<f64>()
            .powf(1.0 / q);
        let expected = w.map(|x| x.signum() * x.abs().powf(q - 1.0) / nq.powf(q - 2.0));
        let got = MirrorMap::p_norm(p).unwrap().grad(&w).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-14);
    }

    #[test]
    fn p_norm_rejects_p_at_most_one() {
        assert!(MirrorMap::p_norm(1.0).is_err());
        assert!(MirrorMap::p_norm(0.5).is_err());
        assert!(MirrorMap::p_norm(f64::INFINITY).is_err());
        assert!(MirrorMap::PNorm { p: 1.0 }.grad(&v(&[1.0])).is_err());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let bad = v(&[1.0, f64::NAN]);
        assert!(matches!(
            MirrorMap::Euclidean.grad(&bad),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            MirrorMap::p_norm(3.0)
                .unwrap()
                .grad_conjugate(&v(&[f64::INFINITY])),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn entropy_domain() {
        let map = MirrorMap::neg_entropy(None).unwrap();
        assert!(matches!(map.grad(&v(&[0.5, 0.0])), Err(Error::Domain(_))));
        assert!(matches!(map.grad(&v(&[0.5, -0.1])), Err(Error::Domain(_))));
        assert!(matches!(
            map.bregman(&v(&[0.5, 0.5]), &v(&[1.0, -1.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn entropy_round_trip_uniform() {
        let w = DVector::from_element(4, 0.25);
        for mass in [None, Some(1.0)] {
            let map = MirrorMap::neg_entropy(mass).unwrap();
            let back = map.grad_conjugate(&map.grad(&w).unwrap()).unwrap();
            assert_relative_eq!(back, w, epsilon = 1e-15);
        }
    }

    #[test]
    fn entropy_overflow_guard() {
        let map = MirrorMap::neg_entropy(None).unwrap();
        let w = map.grad_conjugate(&v(&[1e6, -1e6])).unwrap();
        assert!(w.iter().all(|x| x.is_finite() && *x > 0.0));
        let normed = MirrorMap::neg_entropy(Some(2.0)).unwrap();
        let w = normed.grad_conjugate(&v(&[1e6, 1e6, 0.0])).unwrap();
        assert_relative_eq!(w.sum(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bregman_examples() {
        let x = v(&[1.0, 0.0]);
        let y = v(&[0.0, 0.0]);
        assert_eq!(MirrorMap::Euclidean.bregman(&x, &y).unwrap(), 0.5);
        assert_eq!(MirrorMap::Euclidean.bregman(&x, &x).unwrap(), 0.0);
        let map = MirrorMap::p_norm(3.0).unwrap();
        assert_eq!(map.bregman(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn entropy_bregman_is_kl_on_simplex() {
        let x = v(&[0.2, 0.3, 0.5]);
        let y = v(&[0.4, 0.4, 0.2]);
        let kl: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * (a / b).ln()).sum();
        let got = MirrorMap::neg_entropy(None)
            .unwrap()
            .bregman(&x, &y)
            .unwrap();
        assert_relative_eq!(got, kl, epsilon = 1e-15);
        // The same value through the generic definition ψ(x) − ψ(y) − ⟨∇ψ(y), x − y⟩.
        let map = MirrorMap::neg_entropy(None).unwrap();
        let generic = map.potential(&x).unwrap()
            - map.potential(&y).unwrap()
            - map.grad(&y).unwrap().dot(&(&x - &y));
        assert_relative_eq!(generic, kl, epsilon = 1e-14);
    }

    #[test]
    fn soft_threshold_examples() {
        let out = soft_threshold(&v(&[0.5, -0.3, 0.1]), 0.2).unwrap();
        assert_relative_eq!(out, v(&[0.3, -0.1, 0.0]), epsilon = 1e-15);
        let w = v(&[0.5, -0.3, 0.0]);
        assert_eq!(soft_threshold(&w, 0.0).unwrap(), w);
        assert!(soft_threshold(&w, -0.1).is_err());
    }

    #[test]
    fn soft_threshold_matches_grid_argmin() {
        // argmin_u τ|u| + ½(u − w)² by dense grid search.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let w: f64 = rng.random_range(-2.0..2.0);
            let tau: f64 = rng.random_range(0.0..1.0);
            let step = 1e-5;
            let mut best = (f64::INFINITY, 0.0);
            let mut u: f64 = -3.0;
            while u <= 3.0 {
                let obj = tau * u.abs() + 0.5 * (u - w) * (u - w);
                if obj < best.0 {
                    best = (obj, u);
                }
                u += step;
            }
            assert!((shrink(w, tau) - best.1).abs() <= 2e-5);
        }
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, d)
    }

    proptest! {
        #[test]
        fn round_trip(w in vec_strategy(10), p in 1.2f64..12.0) {
            let map = MirrorMap::p_norm(p).unwrap();
            let w = DVector::from_vec(w);
            let back = map.grad_conjugate(&map.grad(&w).unwrap()).unwrap();
            prop_assert!((back - &w).amax() <= 1e-8 * w.amax().max(1.0));
        }

        #[test]
        fn bregman_nonnegative(x in vec_strategy(6), y in vec_strategy(6), p in 1.2f64..8.0) {
            let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
            for map in [MirrorMap::Euclidean, MirrorMap::p_norm(p).unwrap()] {
                prop_assert!(map.bregman(&x, &y).unwrap() >= -1e-12);
                prop_assert!(map.bregman(&x, &x).unwrap() <= 1e-12);
            }
            let xp = x.map(|a| a.abs() + 0.01);
            let yp = y.map(|a| a.abs() + 0.01);
            let ent = MirrorMap::neg_entropy(None).unwrap();
            prop_assert!(ent.bregman(&xp, &yp).unwrap() >= -1e-12);
        }

        #[test]
        fn link_is_monotone(x in vec_strategy(6), y in vec_strategy(6), p in 1.2f64..8.0) {
            let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
            let map = MirrorMap::p_norm(p).unwrap();
            let gap = (&y - &x).dot(&(map.grad(&y).unwrap() - map.grad(&x).unwrap()));
            prop_assert!(gap >= -1e-12);
            // σ = 1 exactly for the Euclidean map.
            let e = MirrorMap::Euclidean;
            let gap = (&y - &x).dot(&(e.grad(&y).unwrap() - e.grad(&x).unwrap()));
            prop_assert!(gap >= EUCLIDEAN_MODULUS * (&y - &x).norm_squared() - 1e-12);
        }

        #[test]
        fn soft_threshold_contracts(a in vec_strategy(8), b in vec_strategy(8), tau in 0.0f64..1.0) {
            let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
            let pa = soft_threshold(&a, tau).unwrap();
            let pb = soft_threshold(&b, tau).unwrap();
            prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-15);
            prop_assert!(pa.lp_norm(1) <= a.lp_norm(1) + 1e-15);
            for (o, i) in pa.iter().zip(a.iter()) {
                prop_assert!(*o == 0.0 || o.signum() == i.signum());
            }
        }

        #[test]
        fn euclidean_agrees_with_p_norm_two(w in vec_strategy(12)) {
            let w = DVector::from_vec(w);
            let p2 = MirrorMap::p_norm(2.0).unwrap();
            prop_assert!((p2.grad(&w).unwrap() - MirrorMap::Euclidean.grad(&w).unwrap()).amax() <= 1e-14);
            prop_assert!((p2.grad_conjugate(&w).unwrap() - &w).amax() <= 1e-14);
        }
    }
}
