use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A weight function of θ written as a finite sum `Σ coeff · θ^(n/2)`.
///
/// Terms are keyed by the half-exponent `n`. A term with `n = 0` is rejected
/// so every weight vanishes at θ = 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightPolynomial {
    terms: BTreeMap<u32, f64>,
}

impl WeightPolynomial {
    /// The identically zero weight.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds a weight from `(half_exponent, coefficient)` pairs. Repeated
    /// exponents are summed; zero coefficients are dropped.
    pub fn from_terms<I>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut map = BTreeMap::new();
        for (n, c) in terms {
            if !c.is_finite() {
                return Err(Error::InvalidTableau(format!(
                    "weight coefficient for theta^({n}/2) is not finite"
                )));
            }
            if n == 0 && c != 0.0 {
                return Err(Error::InvalidTableau(
                    "weight has a constant term; weights must vanish at theta = 0".into(),
                ));
            }
            *map.entry(n).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Ok(Self { terms: map })
    }

    /// Infallible constructor for literal tables; panics on a constant term.
    pub(crate) fn lit(terms: &[(u32, f64)]) -> Self {
        Self::from_terms(terms.iter().copied()).expect("builtin weight literal")
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.terms.iter().map(|(&n, &c)| (n, c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluates the weight at θ ∈ [0, 1].
    pub fn evaluate(&self, theta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::ThetaOutOfRange(theta));
        }
        Ok(self.eval_unchecked(theta))
    }

    pub(crate) fn eval_unchecked(&self, theta: f64) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        let root = theta.sqrt();
        self.terms
            .iter()
            .map(|(&n, &c)| {
                let whole = theta.powi((n / 2) as i32);
                if n % 2 == 0 {
                    c * whole
                } else {
                    c * whole * root
                }
            })
            .sum()
    }
}
