use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Step-size sequence α_t.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaSchedule {
    Constant {
        alpha0: f64,
    },
    /// α₀ / (1 + t)^exponent with exponent ∈ (0.5, 1].
    RobbinsMonro {
        alpha0: f64,
        exponent: f64,
    },
}

impl AlphaSchedule {
    pub fn constant(alpha0: f64) -> Result<Self> {
        let s = AlphaSchedule::Constant { alpha0 };
        s.validate()?;
        Ok(s)
    }

    pub fn robbins_monro(alpha0: f64, exponent: f64) -> Result<Self> {
        let s = AlphaSchedule::RobbinsMonro { alpha0, exponent };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (alpha0, exponent) = match *self {
            AlphaSchedule::Constant { alpha0 } => (alpha0, None),
            AlphaSchedule::RobbinsMonro { alpha0, exponent } => (alpha0, Some(exponent)),
        };
        if !(alpha0.is_finite() && alpha0 > 0.0) {
            return Err(Error::invalid(format!(
                "step size must be positive, got {alpha0}"
            )));
        }
        if let Some(k) = exponent {
            if !(k > 0.5 && k <= 1.0) {
                return Err(Error::invalid(format!(
                    "Robbins-Monro exponent must lie in (0.5, 1], got {k}"
                )));
            }
        }
        Ok(())
    }

    pub fn alpha0(&self) -> f64 {
        match *self {
            AlphaSchedule::Constant { alpha0 } | AlphaSchedule::RobbinsMonro { alpha0, .. } => {
                alpha0
            }
        }
    }

    #[inline]
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            AlphaSchedule::Constant { alpha0 } => alpha0,
            AlphaSchedule::RobbinsMonro { alpha0, exponent } => {
                alpha0 / (1.0 + t as f64).powf(exponent)
            }
        }
    }
}

/// α_t for a schedule, validating it first.
pub fn alpha_schedule(t: u64, schedule: &AlphaSchedule) -> Result<f64> {
    schedule.validate()?;
    Ok(schedule.at(t))
}

impl fmt::Display for AlphaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaSchedule::Constant { alpha0 } => write!(f, "constant {alpha0}"),
            AlphaSchedule::RobbinsMonro { alpha0, exponent } => {
                write!(f, "robbins_monro {alpha0} {exponent}")
            }
        }
    }
}

impl FromStr for AlphaSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {t:?} in step-size schedule")))
        };
        match toks[..] {
            ["constant", a] => AlphaSchedule::constant(num(a)?),
            ["robbins_monro", a, k] => AlphaSchedule::robbins_monro(num(a)?, num(k)?),
            _ => Err(Error::Parse(format!(
                "expected `constant <a0>` or `robbins_monro <a0> <exponent>`, got {s:?}"
            ))),
        }
    }
}

/// Exponent schedule for the p-norm link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PSchedule {
    /// A constant p; `None` means max(2, ln d).
    Fixed(Option<f64>),
    /// Linear decay from max(2, ln d) to 2 over `horizon` steps.
    Decay { horizon: u64 },
}

impl Default for PSchedule {
    fn default() -> Self {
        PSchedule::Fixed(None)
    }
}

impl PSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PSchedule::Fixed(Some(p)) if !(p.is_finite() && p > 1.0) => {
                Err(Error::invalid(format!("p must be > 1, got {p}")))
            }
            PSchedule::Decay { horizon: 0 } => {
                Err(Error::invalid("decay horizon must be positive"))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn at(&self, t: u64, d: usize) -> f64 {
        let p0 = initial_p(d);
        match *self {
            PSchedule::Fixed(p) => p.unwrap_or(p0),
            PSchedule::Decay { horizon } => {
                let remaining = 1.0 - (t as f64 / horizon as f64).min(1.0);
                2.0 + (p0 - 2.0) * remaining
            }
        }
    }
}

/// max(2, ln d).
pub fn initial_p(d: usize) -> f64 {
    (d as f64).ln().max(2.0)
}

pub fn p_schedule(t: u64, d: usize, schedule: &PSchedule) -> f64 {
    schedule.at(t, d)
}

impl fmt::Display for PSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PSchedule::Fixed(None) => write!(f, "fixed"),
            PSchedule::Fixed(Some(p)) => write!(f, "fixed {p}"),
            PSchedule::Decay { horizon } => write!(f, "decay {horizon}"),
        }
    }
}

impl FromStr for PSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        let sched = match toks[..] {
            ["fixed"] => PSchedule::Fixed(None),
            ["fixed", p] => PSchedule::Fixed(Some(
                p.parse()
                    .map_err(|_| Error::Parse(format!("bad p {p:?}")))?,
            )),
            ["decay", h] => PSchedule::Decay {
                horizon: h
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad horizon {h:?}")))?,
            },
            _ => {
                return Err(Error::Parse(format!(
                    "expected `fixed`, `fixed <p>` or `decay <horizon>`, got {s:?}"
                )))
            }
        };
        sched.validate()?;
        Ok(sched)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn alpha_examples() {
        let rm = AlphaSchedule::robbins_monro(0.5, 0.6).unwrap();
        assert_eq!(rm.at(0), 0.5);
        assert_eq!(AlphaSchedule::constant(0.1).unwrap().at(123), 0.1);
        assert!(AlphaSchedule::robbins_monro(0.5, 0.5).is_err());
        assert!(AlphaSchedule::robbins_monro(0.5, 1.01).is_err());
        assert!(AlphaSchedule::constant(0.0).is_err());
        assert!(alpha_schedule(
            3,
            &AlphaSchedule::RobbinsMonro {
                alpha0: 1.0,
                exponent: 2.0
            }
        )
        .is_err());
    }

    #[test]
    fn harmonic_partial_sums_grow_and_squares_converge() {
        let h = AlphaSchedule::robbins_monro(1.0, 1.0).unwrap();
        let sum = |n: u64| (0..n).map(|t| h.at(t)).sum::<f64>();
        // Partial sums track ln n without bound.
        assert!(sum(1_000_000) - sum(1_000) > 6.0);
        let s = AlphaSchedule::robbins_monro(1.0, 0.6).unwrap();
        let sq = |n: u64| (0..n).map(|t| s.at(t).powi(2)).sum::<f64>();
        // Tail of Σ t^{-1.2} beyond n is below 5 n^{-0.2}.
        let tail = sq(2_000_000) - sq(1_000_000);
        assert!(tail < 5.0 * (1e6f64).powf(-0.2) - 5.0 * (2e6f64).powf(-0.2) + 1e-9);
    }

    #[test]
    fn p_examples() {
        assert_relative_eq!(initial_p(500), 500f64.ln());
        assert_relative_eq!(initial_p(500), 6.2146, epsilon = 1e-4);
        assert_eq!(initial_p(2), 2.0);
        let decay = PSchedule::Decay { horizon: 100 };
        assert_relative_eq!(decay.at(0, 500), 500f64.ln());
        assert_eq!(decay.at(100, 500), 2.0);
        assert_eq!(decay.at(10_000, 500), 2.0);
        assert_eq!(PSchedule::Fixed(None).at(10_000, 500), 500f64.ln());
        assert_eq!(PSchedule::Fixed(Some(3.0)).at(0, 500), 3.0);
    }

    #[test]
    fn text_round_trip() {
        for s in ["constant 0.1", "robbins_monro 0.5 0.6"] {
            assert_eq!(s.parse::<AlphaSchedule>().unwrap().to_string(), s);
        }
        for s in ["fixed", "fixed 3", "decay 1000"] {
            assert_eq!(s.parse::<PSchedule>().unwrap().to_string(), s);
        }
        assert!("fixed 1".parse::<PSchedule>().is_err());
        assert!("decay".parse::<PSchedule>().is_err());
        assert!("linear 0.1".parse::<AlphaSchedule>().is_err());
    }

    proptest! {
        #[test]
        fn p_nonincreasing(t in 0u64..10_000, d in 2usize..5000, h in 1u64..5000) {
            let s = PSchedule::Decay { horizon: h };
            prop_assert!(s.at(t + 1, d) <= s.at(t, d));
            prop_assert!(s.at(t, d) >= 2.0);
        }

        #[test]
        fn alpha_nonincreasing(t in 0u64..1_000_000, k in 0.51f64..1.0) {
            let s = AlphaSchedule::robbins_monro(0.7, k).unwrap();
            prop_assert!(s.at(t + 1) <= s.at(t));
        }
    }
}
