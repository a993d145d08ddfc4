//! Step random variables.
//!
//! Each step draws `m` three-point variables `ΔŴᵏ ∈ {−√(3h), 0, √(3h)}` with
//! probabilities `1/6, 2/3, 1/6` and `m(m−1)/2` two-point variables
//! `Vᵏˡ = ±h` (l < k) with probability `1/2` each. The remaining entries of `V`
//! follow from `Vᵏᵏ = −h` and `Vᵏˡ = −Vˡᵏ`. From these,
//! `Î₍ₖ₎ = ΔŴᵏ` and `Î₍ₖ,ₗ₎ = ½(ΔŴᵏΔŴˡ + Vᵏˡ)`.
//!
//! # Streams
//!
//! Path `p` of a run with seed `s` draws from ChaCha8 keyed by
//! `seed_from_u64(s)` (PCG32 key expansion) on stream number `p`. Within a path
//! each step consumes, in order, one `f64` uniform per `ΔŴᵏ` (k ascending) and
//! then one `f64` uniform per `Vᵏˡ` for `k = 1..m`, `l = 0..k`. The uniform `u`
//! maps to `−√(3h)` on `[0, 1/6)`, `0` on `[1/6, 5/6)`, `+√(3h)` otherwise, and
//! to `V = +h` when `u < 1/2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

const P_EDGE: f64 = 1.0 / 6.0;
const P_MID: f64 = 2.0 / 3.0;

/// Independent, reproducible stream for one Monte Carlo path.
pub fn path_stream(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// One step's realised `ΔŴ` (length m) and `V` (m × m, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct StepIncrements {
    h: f64,
    m: usize,
    dw: Vec<f64>,
    v: Vec<f64>,
}

impl StepIncrements {
    /// All-zero `ΔŴ`, `V` with `−h` on the diagonal and `+h` below it.
    pub fn new(m: usize, h: f64) -> Self {
        let mut inc = Self { h, m, dw: vec![0.0; m], v: vec![0.0; m * m] };
        for k in 0..m {
            for l in 0..k {
                inc.set_lower(k, l, true);
            }
            inc.v[k * m + k] = -h;
        }
        inc
    }

    /// Builds increments from explicit `ΔŴ` values and lower-triangle signs
    /// (`true` = `+h`), ordered `(1,0), (2,0), (2,1), …`.
    pub fn from_parts(h: f64, dw: Vec<f64>, lower_signs: &[bool]) -> Result<Self> {
        let m = dw.len();
        if lower_signs.len() != m * (m.saturating_sub(1)) / 2 {
            return Err(Error::Precondition(format!(
                "need {} two-point signs for m = {m}",
                m * (m.saturating_sub(1)) / 2
            )));
        }
        let mut inc = Self::new(m, h);
        inc.dw = dw;
        let mut signs = lower_signs.iter();
        for k in 0..m {
            for l in 0..k {
                inc.set_lower(k, l, *signs.next().unwrap());
            }
        }
        Ok(inc)
    }

    #[inline]
    fn set_lower(&mut self, k: usize, l: usize, plus: bool) {
        let v = if plus { self.h } else { -self.h };
        self.v[k * self.m + l] = v;
        self.v[l * self.m + k] = -v;
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Overwrites `self` with `other` without reallocating when the sizes agree.
    pub fn assign(&mut self, other: &StepIncrements) {
        if self.m == other.m {
            self.h = other.h;
            self.dw.copy_from_slice(&other.dw);
            self.v.copy_from_slice(&other.v);
        } else {
            self.clone_from(other);
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn dw(&self) -> &[f64] {
        &self.dw
    }

    #[inline]
    pub fn v(&self, k: usize, l: usize) -> f64 {
        self.v[k * self.m + l]
    }

    /// `Î₍ₖ₎`.
    #[inline]
    pub fn single(&self, k: usize) -> f64 {
        self.dw[k]
    }

    /// `Î₍ₖ,ₗ₎`.
    #[inline]
    pub fn double(&self, k: usize, l: usize) -> f64 {
        0.5 * (self.dw[k] * self.dw[l] + self.v(k, l))
    }

    /// Redraws in place with a new step size.
    pub fn resample<R: Rng + ?Sized>(&mut self, h: f64, rng: &mut R) {
        if h != self.h {
            self.h = h;
            for k in 0..self.m {
                self.v[k * self.m + k] = -h;
            }
        }
        let edge = (3.0 * h).sqrt();
        for k in 0..self.m {
            let u: f64 = rng.random();
            self.dw[k] = if u < P_EDGE {
                -edge
            } else if u < P_EDGE + P_MID {
                0.0
            } else {
                edge
            };
        }
        for k in 1..self.m {
            for l in 0..k {
                let u: f64 = rng.random();
                self.set_lower(k, l, u < 0.5);
            }
        }
    }
}

/// Draws one step's increments.
pub fn sample<R: Rng + ?Sized>(m: usize, h: f64, rng: &mut R) -> StepIncrements {
    let mut inc = StepIncrements::new(m, h);
    inc.resample(h, rng);
    inc
}

/// Size of the joint sample space of one step, `3^m · 2^(m(m−1)/2)`, as a float
/// so large `m` does not overflow.
pub fn outcome_count(m: usize) -> f64 {
    3f64.powi(m as i32) * 2f64.powi((m * m.saturating_sub(1) / 2) as i32)
}

/// Every joint outcome of one step with its exact probability.
#[derive(Debug, Clone)]
pub struct OutcomeEnumeration {
    pub outcomes: Vec<(StepIncrements, f64)>,
}

impl OutcomeEnumeration {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(|(_, p)| p).sum()
    }

    /// Exact expectation of `g` over the outcomes.
    pub fn expectation(&self, mut g: impl FnMut(&StepIncrements) -> f64) -> f64 {
        self.outcomes.iter().map(|(inc, p)| p * g(inc)).sum()
    }
}

/// Enumerates the one-step sample space. Fails when it would exceed `cap`.
pub fn enumerate(m: usize, h: f64, cap: u64) -> Result<OutcomeEnumeration> {
    if m == 0 || !(h > 0.0) {
        return Err(Error::Precondition(format!("need m >= 1 and h > 0, got m = {m}, h = {h}")));
    }
    let required = outcome_count(m);
    if required > cap as f64 {
        return Err(Error::Capacity { required, cap });
    }
    let pairs = m * (m - 1) / 2;
    let edge = (3.0 * h).sqrt();
    let levels = [(-edge, P_EDGE), (0.0, P_MID), (edge, P_EDGE)];
    let n_dw = 3usize.pow(m as u32);
    let mut outcomes = Vec::with_capacity(required as usize);
    for code in 0..n_dw {
        let mut rest = code;
        let mut dw = Vec::with_capacity(m);
        let mut p = 1.0;
        for _ in 0..m {
            let (v, q) = levels[rest % 3];
            rest /= 3;
            dw.push(v);
            p *= q;
        }
        for bits in 0..(1usize << pairs) {
            let signs: Vec<bool> = (0..pairs).map(|j| bits >> j & 1 == 1).collect();
            let inc = StepIncrements::from_parts(h, dw.clone(), &signs)?;
            outcomes.push((inc, p * 0.5f64.powi(pairs as i32)));
        }
    }
    Ok(OutcomeEnumeration { outcomes })
}

/// A factor of a moment monomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncrementVar {
    /// `Î₍ₖ₎` (0-based k).
    Single(usize),
    /// `Î₍ₖ,ₗ₎` (0-based k, l).
    Double(usize, usize),
}

/// Exact `E[Π var^power]` by full enumeration.
pub fn moments_exact(m: usize, h: f64, monomial: &[(IncrementVar, u32)]) -> Result<f64> {
    for (var, _) in monomial {
        let ok = match *var {
            IncrementVar::Single(k) => k < m,
            IncrementVar::Double(k, l) => k < m && l < m,
        };
        if !ok {
            return Err(Error::Precondition(format!("{var:?} out of range for m = {m}")));
        }
    }
    let outcomes = enumerate(m, h, DEFAULT_ENUMERATION_CAP)?;
    Ok(outcomes.expectation(|inc| {
        monomial
            .iter()
            .map(|&(var, p)| {
                let x = match var {
                    IncrementVar::Single(k) => inc.single(k),
                    IncrementVar::Double(k, l) => inc.double(k, l),
                };
                x.powi(p as i32)
            })
            .product()
    }))
}
