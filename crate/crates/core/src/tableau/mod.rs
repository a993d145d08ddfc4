//! Scheme coefficients, the builtin registry, and the order-condition checker.
//!
//! A [`CsrkTableau`] holds the three node vectors `c⁽q⁾`, the strictly lower
//! triangular matrices `A⁽q⁾`, `B⁽q⁾` (q = 0, 1, 2) and the θ-dependent weight
//! vectors α, β⁽¹⁾…β⁽⁴⁾. Construction validates explicitness and row-sum
//! consistency, so every tableau in circulation can be stepped.

mod builtin;
mod conditions;
mod document;
mod weight;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtin::{builtin_scheme, BUILTIN_NAMES};
pub use conditions::{
    catalog, check_conditions, check_conditions_for, default_theta_grid, uniform_theta_grid,
    Condition, ConditionRecord, ConditionReport, Rhs, VecExpr, WeightRef, DEFAULT_GRID_POINTS,
    DEFAULT_TOLERANCE,
};
pub use document::{parse_tableau, to_document, SchemeDocument};
pub use weight::WeightPolynomial;

/// Tolerance for `c⁽q⁾ = A⁽q⁾ e`.
pub const ROW_SUM_TOLERANCE: f64 = 1e-14;

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    /// Builds a matrix from rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidTableau(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    /// Lower-triangular literal: row `i` lists entries `j < i`.
    pub(crate) fn lower(n: usize, rows: &[&[f64]]) -> Self {
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            let i = i + 1;
            for (j, &v) in row.iter().enumerate() {
                m.data[i * n + j] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1)).take(self.n)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows().map(|row| row.iter().sum()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

/// Condition families of the checker catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionFamily {
    /// Weak order one conditions 1–7, checked on every grid θ.
    ContinuousOrder1,
    /// Conditions 1–50 with weights evaluated at θ = 1.
    AtOne,
    /// θ-dependent versions of conditions 8, 9, 10, 11, 13, 14, 15, 16, 22, 32, 33.
    ContinuousOrder2Extended,
    /// Deterministic order-three conditions at θ = 1 (1: `(A⁽⁰⁾e)²`, 2: `A⁽⁰⁾(A⁽⁰⁾e)`).
    DetOrder3,
    /// θ-dependent deterministic order-three conditions, same numbering.
    DetOrder3Continuous,
}

impl ConditionFamily {
    pub const ALL: [ConditionFamily; 5] = [
        ConditionFamily::ContinuousOrder1,
        ConditionFamily::AtOne,
        ConditionFamily::ContinuousOrder2Extended,
        ConditionFamily::DetOrder3,
        ConditionFamily::DetOrder3Continuous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionFamily::ContinuousOrder1 => "continuous_order1",
            ConditionFamily::AtOne => "at_one",
            ConditionFamily::ContinuousOrder2Extended => "continuous_order2_extended",
            ConditionFamily::DetOrder3 => "det_order3",
            ConditionFamily::DetOrder3Continuous => "det_order3_continuous",
        }
    }

    /// Whether the family is checked over the whole θ-grid.
    pub fn is_continuous(self) -> bool {
        matches!(
            self,
            ConditionFamily::ContinuousOrder1
                | ConditionFamily::ContinuousOrder2Extended
                | ConditionFamily::DetOrder3Continuous
        )
    }
}

/// Identifies one evaluable condition of the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConditionId {
    pub family: ConditionFamily,
    pub index: u8,
}

impl ConditionId {
    pub const fn new(family: ConditionFamily, index: u8) -> Self {
        Self { family, index }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family.as_str(), self.index)
    }
}

impl FromStr for ConditionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Document(format!("invalid condition id `{s}`"));
        let (fam, idx) = s.split_once(':').ok_or_else(bad)?;
        let family = ConditionFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == fam)
            .ok_or_else(bad)?;
        let index: u8 = idx.trim().parse().map_err(|_| bad())?;
        let id = ConditionId::new(family, index);
        if conditions::lookup(id).is_none() {
            return Err(Error::Document(format!("condition `{s}` is not in the catalog")));
        }
        Ok(id)
    }
}

impl Serialize for ConditionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConditionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Name, orders `(p_D, p_S)` and the conditions a scheme claims to satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeMeta {
    pub name: String,
    pub p_deterministic: f64,
    pub p_stochastic: f64,
    pub declared_conditions: BTreeSet<ConditionId>,
}

/// Raw coefficient arrays, validated by [`CsrkTableau::new`].
#[derive(Debug, Clone)]
pub struct TableauParts {
    pub c: [Vec<f64>; 3],
    pub a: [Matrix; 3],
    pub b: [Matrix; 3],
    pub alpha: Vec<WeightPolynomial>,
    pub beta: [Vec<WeightPolynomial>; 4],
    pub meta: SchemeMeta,
}

/// An explicit continuous stochastic Runge–Kutta scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrkTableau {
    stages: usize,
    c: [Vec<f64>; 3],
    a: [Matrix; 3],
    b: [Matrix; 3],
    alpha: Vec<WeightPolynomial>,
    beta: [Vec<WeightPolynomial>; 4],
    meta: SchemeMeta,
    uses_cross: bool,
}

/// The weight vectors evaluated at one θ.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightValues {
    pub theta: f64,
    pub alpha: Vec<f64>,
    pub beta: [Vec<f64>; 4],
}

impl CsrkTableau {
    pub fn new(parts: TableauParts) -> Result<Self> {
        let TableauParts { c, a, b, alpha, beta, meta } = parts;
        let s = alpha.len();
        if s == 0 {
            return Err(Error::InvalidTableau("a scheme needs at least one stage".into()));
        }
        for (r, w) in beta.iter().enumerate() {
            if w.len() != s {
                return Err(Error::InvalidTableau(format!(
                    "beta{} has {} weights, expected {s}",
                    r + 1,
                    w.len()
                )));
            }
        }
        for q in 0..3 {
            for (label, m) in [("A", &a[q]), ("B", &b[q])] {
                if m.dim() != s {
                    return Err(Error::InvalidTableau(format!(
                        "{label}{q} is {0}x{0}, expected {s}x{s}",
                        m.dim()
                    )));
                }
                for i in 0..s {
                    for j in i..s {
                        let v = m.get(i, j);
                        if v != 0.0 {
                            return Err(Error::InvalidTableau(format!(
                                "{label}{q}[{}][{}] = {v} violates strict lower triangularity",
                                i + 1,
                                j + 1
                            )));
                        }
                    }
                }
            }
            if c[q].len() != s {
                return Err(Error::InvalidTableau(format!(
                    "c{q} has {} entries, expected {s}",
                    c[q].len()
                )));
            }
            for (i, (ci, sum)) in c[q].iter().zip(a[q].row_sums()).enumerate() {
                if (ci - sum).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::InvalidTableau(format!(
                        "c{q}[{}] = {ci} differs from the row sum of A{q} ({sum})",
                        i + 1
                    )));
                }
            }
        }
        if !(meta.p_deterministic >= meta.p_stochastic) {
            return Err(Error::InvalidTableau(format!(
                "p_D = {} must be at least p_S = {}",
                meta.p_deterministic, meta.p_stochastic
            )));
        }
        let uses_cross = beta[2].iter().chain(&beta[3]).any(|w| !w.is_zero());
        Ok(Self { stages: s, c, a, b, alpha, beta, meta, uses_cross })
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn meta(&self) -> &SchemeMeta {
        &self.meta
    }

    /// Node vector `c⁽q⁾`, q ∈ {0, 1, 2}.
    pub fn c(&self, q: usize) -> &[f64] {
        &self.c[q]
    }

    pub fn a(&self, q: usize) -> &Matrix {
        &self.a[q]
    }

    pub fn b(&self, q: usize) -> &Matrix {
        &self.b[q]
    }

    pub fn alpha(&self) -> &[WeightPolynomial] {
        &self.alpha
    }

    /// Weight vector `β⁽ʳ⁾`, r ∈ {1, 2, 3, 4}.
    pub fn beta(&self, r: usize) -> &[WeightPolynomial] {
        &self.beta[r - 1]
    }

    /// False when β⁽³⁾ and β⁽⁴⁾ vanish identically; the cross-diffusion
    /// stage family is then never evaluated.
    pub fn uses_cross_family(&self) -> bool {
        self.uses_cross
    }

    pub fn with_declared_conditions(mut self, ids: BTreeSet<ConditionId>) -> Self {
        self.meta.declared_conditions = ids;
        self
    }

    pub fn weights_at(&self, theta: f64) -> Result<WeightValues> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::ThetaOutOfRange(theta));
        }
        let eval = |ws: &[WeightPolynomial]| ws.iter().map(|w| w.eval_unchecked(theta)).collect();
        Ok(WeightValues {
            theta,
            alpha: eval(&self.alpha),
            beta: [
                eval(&self.beta[0]),
                eval(&self.beta[1]),
                eval(&self.beta[2]),
                eval(&self.beta[3]),
            ],
        })
    }
}
