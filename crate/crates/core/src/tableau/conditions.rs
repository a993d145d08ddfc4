//! Order conditions as first-class expression objects.
//!
//! Every condition is a product of factors `(wᵀ v)^p` compared with a right-hand
//! side `coeff · θ^(n/2)`, where `w` is one of the weight vectors evaluated at θ
//! and `v` is a vector expression built from `e`, `A⁽q⁾·`, `B⁽q⁾·` and
//! componentwise products and powers. User tableaus go through exactly the same
//! evaluation path as the builtin ones.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::LazyLock;

use serde::Serialize;

use super::{ConditionFamily, ConditionId, CsrkTableau};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_GRID_POINTS: usize = 21;

/// Which weight vector a factor uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRef {
    Alpha,
    /// β⁽ʳ⁾ with r ∈ 1..=4.
    Beta(u8),
}

/// Vector expression over the tableau matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum VecExpr {
    Ones,
    A(u8, Box<VecExpr>),
    B(u8, Box<VecExpr>),
    Mul(Box<VecExpr>, Box<VecExpr>),
    Pow(Box<VecExpr>, u32),
}

impl VecExpr {
    pub fn eval(&self, t: &CsrkTableau) -> Vec<f64> {
        match self {
            VecExpr::Ones => vec![1.0; t.stages()],
            VecExpr::A(q, v) => t.a(*q as usize).mul_vec(&v.eval(t)),
            VecExpr::B(q, v) => t.b(*q as usize).mul_vec(&v.eval(t)),
            VecExpr::Mul(l, r) => {
                let (l, r) = (l.eval(t), r.eval(t));
                l.iter().zip(&r).map(|(x, y)| x * y).collect()
            }
            VecExpr::Pow(v, p) => v.eval(t).iter().map(|x| x.powi(*p as i32)).collect(),
        }
    }
}

impl fmt::Display for VecExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VecExpr::Ones => f.write_str("e"),
            VecExpr::A(q, v) if **v == VecExpr::Ones => write!(f, "A{q}e"),
            VecExpr::B(q, v) if **v == VecExpr::Ones => write!(f, "B{q}e"),
            VecExpr::A(q, v) => write!(f, "A{q}({v})"),
            VecExpr::B(q, v) => write!(f, "B{q}({v})"),
            VecExpr::Mul(l, r) => write!(f, "({l})({r})"),
            VecExpr::Pow(v, p) => write!(f, "({v})^{p}"),
        }
    }
}

/// One factor `(wᵀ v)^power`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub weight: WeightRef,
    pub vec: VecExpr,
    pub power: u32,
}

/// Right-hand side `coeff · θ^(half_exponent/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rhs {
    pub coeff: f64,
    pub half_exponent: u32,
}

impl Rhs {
    pub const fn constant(coeff: f64) -> Self {
        Self { coeff, half_exponent: 0 }
    }

    pub const fn theta_pow(coeff: f64, half_exponent: u32) -> Self {
        Self { coeff, half_exponent }
    }

    pub fn value(&self, theta: f64) -> f64 {
        if self.coeff == 0.0 {
            return 0.0;
        }
        let n = self.half_exponent;
        let whole = theta.powi((n / 2) as i32);
        if n.is_multiple_of(2) {
            self.coeff * whole
        } else {
            self.coeff * whole * theta.sqrt()
        }
    }
}

/// A catalog entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub id: ConditionId,
    pub factors: Vec<Factor>,
    pub rhs: Rhs,
}

impl Condition {
    /// Left-hand side with weights evaluated at θ.
    pub fn lhs(&self, t: &CsrkTableau, theta: f64) -> f64 {
        self.factors
            .iter()
            .map(|fac| {
                let ws = match fac.weight {
                    WeightRef::Alpha => t.alpha(),
                    WeightRef::Beta(r) => t.beta(r as usize),
                };
                let v = fac.vec.eval(t);
                let dot: f64 = ws.iter().zip(&v).map(|(w, x)| w.eval_unchecked(theta) * x).sum();
                dot.powi(fac.power as i32)
            })
            .product()
    }

    pub fn residual(&self, t: &CsrkTableau, theta: f64) -> f64 {
        (self.lhs(t, theta) - self.rhs.value(theta)).abs()
    }

    pub fn description(&self) -> String {
        let lhs: Vec<String> = self
            .factors
            .iter()
            .map(|fac| {
                let w = match fac.weight {
                    WeightRef::Alpha => "alpha".to_string(),
                    WeightRef::Beta(r) => format!("beta{r}"),
                };
                let arg = if self.id.family.is_continuous() { "(t)" } else { "(1)" };
                let dot = format!("{w}{arg}.{}", fac.vec);
                if fac.power == 1 {
                    dot
                } else {
                    format!("({dot})^{}", fac.power)
                }
            })
            .collect();
        let rhs = match (self.rhs.coeff, self.rhs.half_exponent) {
            (c, 0) => format!("{c}"),
            (c, n) if n % 2 == 0 => format!("{c}*t^{}", n / 2),
            (c, n) => format!("{c}*t^({n}/2)"),
        };
        format!("{} = {rhs}", lhs.join(" * "))
    }
}

fn e() -> VecExpr {
    VecExpr::Ones
}
fn am(q: u8, v: VecExpr) -> VecExpr {
    VecExpr::A(q, Box::new(v))
}
fn bm(q: u8, v: VecExpr) -> VecExpr {
    VecExpr::B(q, Box::new(v))
}
fn mul(l: VecExpr, r: VecExpr) -> VecExpr {
    VecExpr::Mul(Box::new(l), Box::new(r))
}
fn pw(v: VecExpr, p: u32) -> VecExpr {
    VecExpr::Pow(Box::new(v), p)
}
fn dot(weight: WeightRef, vec: VecExpr) -> Factor {
    Factor { weight, vec, power: 1 }
}

use WeightRef::{Alpha, Beta};
const B1: WeightRef = Beta(1);
const B2: WeightRef = Beta(2);
const B3: WeightRef = Beta(3);
const B4: WeightRef = Beta(4);

/// Left-hand side factors of condition `k` (1..=50) and its right-hand side at θ = 1.
fn base(k: u8) -> (Vec<Factor>, f64) {
    let single = |w, v| vec![dot(w, v)];
    let b1e = || bm(1, e());
    let b2e = || bm(2, e());
    let b0e = || bm(0, e());
    match k {
        1 => (single(Alpha, e()), 1.0),
        2 => (single(B4, e()), 0.0),
        3 => (single(B3, e()), 0.0),
        4 => (vec![Factor { weight: B1, vec: e(), power: 2 }], 1.0),
        5 => (single(B2, e()), 0.0),
        6 => (single(B1, b1e()), 0.0),
        7 => (single(B3, b2e()), 0.0),
        8 => (single(Alpha, am(0, e())), 0.5),
        9 => (single(Alpha, pw(b0e(), 2)), 0.5),
        10 => (vec![dot(B1, e()), dot(Alpha, b0e())], 0.5),
        11 => (vec![dot(B1, e()), dot(B1, am(1, e()))], 0.5),
        12 => (single(B3, am(2, e())), 0.0),
        13 => (single(B2, b1e()), 1.0),
        14 => (single(B4, b2e()), 1.0),
        15 => (vec![dot(B1, e()), dot(B1, pw(b1e(), 2))], 0.5),
        16 => (vec![dot(B1, e()), dot(B3, pw(b2e(), 2))], 0.5),
        17 => (single(B1, bm(1, b1e())), 0.0),
        18 => (single(B3, bm(2, b1e())), 0.0),
        19 => (single(B3, am(2, b0e())), 0.0),
        20 => (single(B1, am(1, b0e())), 0.0),
        21 => (single(Alpha, bm(0, b1e())), 0.0),
        22 => (single(B2, am(1, e())), 0.0),
        23 => (single(B4, am(2, e())), 0.0),
        24 => (single(B1, mul(am(1, e()), b1e())), 0.0),
        25 => (single(B3, mul(am(2, e()), b2e())), 0.0),
        26 => (single(B4, am(2, b0e())), 0.0),
        27 => (single(B2, am(1, b0e())), 0.0),
        28 => (single(B2, am(1, pw(b0e(), 2))), 0.0),
        29 => (single(B4, am(2, pw(b0e(), 2))), 0.0),
        30 => (single(B3, bm(2, am(1, e()))), 0.0),
        31 => (single(B1, bm(1, am(1, e()))), 0.0),
        32 => (single(B2, pw(b1e(), 2)), 0.0),
        33 => (single(B4, pw(b2e(), 2)), 0.0),
        34 => (single(B4, bm(2, b1e())), 0.0),
        35 => (single(B2, bm(1, b1e())), 0.0),
        36 => (single(B1, pw(b1e(), 3)), 0.0),
        37 => (single(B3, pw(b2e(), 3)), 0.0),
        38 => (single(B1, bm(1, pw(b1e(), 2))), 0.0),
        39 => (single(B3, bm(2, pw(b1e(), 2))), 0.0),
        40 => (single(Alpha, mul(b0e(), bm(0, b1e()))), 0.0),
        41 => (single(B1, mul(am(1, b0e()), b1e())), 0.0),
        42 => (single(B3, mul(am(2, b0e()), b2e())), 0.0),
        43 => (single(B1, am(1, bm(0, b1e()))), 0.0),
        44 => (single(B3, am(2, bm(0, b1e()))), 0.0),
        45 => (single(B1, bm(1, am(1, b0e()))), 0.0),
        46 => (single(B3, bm(2, am(1, b0e()))), 0.0),
        47 => (single(B1, mul(b1e(), bm(1, b1e()))), 0.0),
        48 => (single(B3, mul(b2e(), bm(2, b1e()))), 0.0),
        49 => (single(B1, bm(1, bm(1, b1e()))), 0.0),
        50 => (single(B3, bm(2, bm(1, b1e()))), 0.0),
        _ => unreachable!("condition {k} is not in 1..=50"),
    }
}

fn build_catalog() -> Vec<Condition> {
    use ConditionFamily::*;
    let mut out = Vec::new();
    for k in 1..=7u8 {
        let (factors, _) = base(k);
        let rhs = match k {
            1 | 4 => Rhs::theta_pow(1.0, 2),
            _ => Rhs::constant(0.0),
        };
        out.push(Condition { id: ConditionId::new(ContinuousOrder1, k), factors, rhs });
    }
    for k in 1..=50u8 {
        let (factors, c) = base(k);
        out.push(Condition { id: ConditionId::new(AtOne, k), factors, rhs: Rhs::constant(c) });
    }
    for k in [8u8, 9, 10, 11, 13, 14, 15, 16, 22, 32, 33] {
        let (factors, _) = base(k);
        let rhs = match k {
            8 | 9 | 10 | 11 | 15 | 16 => Rhs::theta_pow(0.5, 4),
            13 | 14 => Rhs::theta_pow(1.0, 2),
            _ => Rhs::constant(0.0),
        };
        out.push(Condition { id: ConditionId::new(ContinuousOrder2Extended, k), factors, rhs });
    }
    let det3 = |k: u8| match k {
        1 => vec![dot(Alpha, pw(am(0, e()), 2))],
        _ => vec![dot(Alpha, am(0, am(0, e())))],
    };
    for (k, c) in [(1u8, 1.0 / 3.0), (2, 1.0 / 6.0)] {
        out.push(Condition {
            id: ConditionId::new(DetOrder3, k),
            factors: det3(k),
            rhs: Rhs::constant(c),
        });
        out.push(Condition {
            id: ConditionId::new(DetOrder3Continuous, k),
            factors: det3(k),
            rhs: Rhs::theta_pow(c, 6),
        });
    }
    out.sort_by_key(|c| c.id);
    out
}

static CATALOG: LazyLock<Vec<Condition>> = LazyLock::new(build_catalog);

/// Every condition known to the checker, ordered by id.
pub fn catalog() -> &'static [Condition] {
    &CATALOG
}

pub(crate) fn lookup(id: ConditionId) -> Option<&'static Condition> {
    CATALOG.binary_search_by_key(&id, |c| c.id).ok().map(|i| &CATALOG[i])
}

/// `n` uniformly spaced θ values on [0, 1], endpoints included.
pub fn uniform_theta_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2, "a theta grid needs both endpoints");
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

pub fn default_theta_grid() -> Vec<f64> {
    uniform_theta_grid(DEFAULT_GRID_POINTS)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRecord {
    pub id: ConditionId,
    /// Largest |lhs − rhs| over the checked θ values.
    pub residual: f64,
    pub worst_theta: f64,
    pub pass: bool,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub scheme: String,
    pub records: Vec<ConditionRecord>,
    pub pass: bool,
    pub tolerance: f64,
}

impl ConditionReport {
    pub fn record(&self, id: ConditionId) -> Option<&ConditionRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionRecord> {
        self.records.iter().filter(|r| !r.pass)
    }
}

/// Checks the scheme's declared conditions.
pub fn check_conditions(t: &CsrkTableau, grid: &[f64], tol: f64) -> Result<ConditionReport> {
    check_conditions_for(t, &t.meta().declared_conditions, grid, tol)
}

/// Checks an explicit set of conditions, regardless of what the scheme declares.
pub fn check_conditions_for(
    t: &CsrkTableau,
    ids: &BTreeSet<ConditionId>,
    grid: &[f64],
    tol: f64,
) -> Result<ConditionReport> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    if grid.iter().any(|th| !(0.0..=1.0).contains(th)) {
        return Err(Error::Precondition("theta grid must lie in [0, 1]".into()));
    }
    if !grid.contains(&0.0) || !grid.contains(&1.0) {
        return Err(Error::Precondition("theta grid must contain 0 and 1".into()));
    }
    let mut records = Vec::with_capacity(ids.len());
    for &id in ids {
        let cond = lookup(id)
            .ok_or_else(|| Error::Precondition(format!("condition {id} is not in the catalog")))?;
        let thetas: &[f64] = if id.family.is_continuous() { grid } else { &[1.0] };
        let (worst_theta, residual) = thetas
            .iter()
            .map(|&th| (th, cond.residual(t, th)))
            .fold((thetas[0], f64::NEG_INFINITY), |best, cur| {
                // NaN residuals must win so they are reported as failures
                if cur.1.is_nan() || cur.1 > best.1 { cur } else { best }
            });
        records.push(ConditionRecord {
            id,
            residual,
            worst_theta,
            pass: residual <= tol,
            description: cond.description(),
        });
    }
    let pass = records.iter().all(|r| r.pass);
    Ok(ConditionReport { scheme: t.name().to_string(), records, pass, tolerance: tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::builtin_scheme;

    #[test]
    fn catalog_sizes() {
        let count = |f| catalog().iter().filter(|c| c.id.family == f).count();
        assert_eq!(count(ConditionFamily::ContinuousOrder1), 7);
        assert_eq!(count(ConditionFamily::AtOne), 50);
        assert_eq!(count(ConditionFamily::ContinuousOrder2Extended), 11);
        assert_eq!(count(ConditionFamily::DetOrder3), 2);
        assert_eq!(count(ConditionFamily::DetOrder3Continuous), 2);
    }

    #[test]
    fn grid_must_contain_endpoints() {
        let t = builtin_scheme("CRDI2WM").unwrap();
        assert!(check_conditions(&t, &[0.0, 0.5], 1e-12).is_err());
        assert!(check_conditions(&t, &[0.0, 1.0, 1.5], 1e-12).is_err());
        assert!(check_conditions(&t, &[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn descriptions_are_readable() {
        let c = lookup(ConditionId::new(ConditionFamily::AtOne, 28)).unwrap();
        assert_eq!(c.description(), "beta2(1).A1((B0e)^2) = 0");
        let c = lookup(ConditionId::new(ConditionFamily::ContinuousOrder1, 4)).unwrap();
        assert_eq!(c.description(), "(beta1(t).e)^2 = 1*t^1");
    }

    #[test]
    fn report_flag_is_conjunction() {
        let t = builtin_scheme("EULER_LINEAR").unwrap();
        let ids: BTreeSet<_> = (1..=7u8)
            .map(|k| ConditionId::new(ConditionFamily::ContinuousOrder1, k))
            .collect();
        let r = check_conditions_for(&t, &ids, &default_theta_grid(), 1e-12).unwrap();
        assert!(!r.pass);
        assert_eq!(r.failures().count(), 1);
        assert_eq!(r.records.iter().filter(|x| x.pass).count(), 6);
    }
}
