//! JSON scheme-definition documents.
//!
//! ```json
//! {
//!   "name": "CRDI1WM",
//!   "s": 2,
//!   "A0": [["0", "0"], ["2/3", "0"]],
//!   "B0": [["0", "0"], ["2/3", "0"]],
//!   "alpha": [[[2, "1"], [4, "-3/4"]], [[4, "3/4"]]],
//!   "beta1": [[[1, "1"]], []],
//!   "meta": { "p_deterministic": 2, "p_stochastic": 1,
//!             "declared_conditions": ["continuous_order1:1", "at_one:8"] }
//! }
//! ```
//!
//! Matrices are row-major arrays of numeric expressions (`"sqrt(6)/4"`,
//! `"(9-2*sqrt(15))/14"`, plain decimals). Missing matrices and weight vectors
//! are zero; missing `c0`/`c1`/`c2` are the row sums of the matching `A`.
//! Weights list `[half_exponent, coefficient]` pairs, so `[3, "1/8"]` is
//! `θ^(3/2)/8`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ConditionId, CsrkTableau, Matrix, SchemeMeta, TableauParts, WeightPolynomial};
use crate::error::{Error, Result};

/// A number written either as a JSON number or as an arithmetic expression.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Numeric {
    Number(f64),
    Expr(String),
}

impl Numeric {
    fn value(&self, what: &str) -> Result<f64> {
        let v = match self {
            Numeric::Number(v) => *v,
            Numeric::Expr(s) => match s.trim().parse::<f64>() {
                Ok(v) => v,
                Err(_) => meval::eval_str(s)
                    .map_err(|e| Error::Document(format!("{what}: cannot evaluate `{s}`: {e}")))?,
            },
        };
        if !v.is_finite() {
            return Err(Error::Document(format!("{what}: value is not finite")));
        }
        Ok(v)
    }
}

type Rows = Vec<Vec<Numeric>>;
type Weights = Vec<Vec<(u32, Numeric)>>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetaDocument {
    pub p_deterministic: f64,
    pub p_stochastic: f64,
    #[serde(default)]
    pub declared_conditions: Vec<ConditionId>,
}

/// Serialized form of a tableau.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SchemeDocument {
    pub name: String,
    pub s: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<Vec<Numeric>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<Vec<Numeric>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<Vec<Numeric>>,
    #[serde(rename = "A0", default)]
    pub a0: Option<Rows>,
    #[serde(rename = "A1", default)]
    pub a1: Option<Rows>,
    #[serde(rename = "A2", default)]
    pub a2: Option<Rows>,
    #[serde(rename = "B0", default)]
    pub b0: Option<Rows>,
    #[serde(rename = "B1", default)]
    pub b1: Option<Rows>,
    #[serde(rename = "B2", default)]
    pub b2: Option<Rows>,
    #[serde(default)]
    pub alpha: Option<Weights>,
    #[serde(default)]
    pub beta1: Option<Weights>,
    #[serde(default)]
    pub beta2: Option<Weights>,
    #[serde(default)]
    pub beta3: Option<Weights>,
    #[serde(default)]
    pub beta4: Option<Weights>,
    pub meta: MetaDocument,
}

fn matrix(rows: &Option<Rows>, s: usize, label: &str) -> Result<Matrix> {
    let Some(rows) = rows else { return Ok(Matrix::zeros(s)) };
    if rows.len() != s {
        return Err(Error::Document(format!("{label} has {} rows, expected {s}", rows.len())));
    }
    let vals = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != s {
                return Err(Error::Document(format!(
                    "{label} row {} has {} entries, expected {s}",
                    i + 1,
                    row.len()
                )));
            }
            row.iter()
                .enumerate()
                .map(|(j, x)| x.value(&format!("{label}[{}][{}]", i + 1, j + 1)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&vals)
}

fn weights(ws: &Option<Weights>, s: usize, label: &str) -> Result<Vec<WeightPolynomial>> {
    let Some(ws) = ws else { return Ok(vec![WeightPolynomial::zero(); s]) };
    if ws.len() != s {
        return Err(Error::Document(format!("{label} has {} weights, expected {s}", ws.len())));
    }
    ws.iter()
        .enumerate()
        .map(|(i, terms)| {
            let what = format!("{label}[{}]", i + 1);
            let terms = terms
                .iter()
                .map(|(n, c)| Ok((*n, c.value(&what)?)))
                .collect::<Result<Vec<_>>>()?;
            WeightPolynomial::from_terms(terms).map_err(|e| match e {
                Error::InvalidTableau(msg) => Error::InvalidTableau(format!("{what}: {msg}")),
                other => other,
            })
        })
        .collect()
}

fn nodes(c: &Option<Vec<Numeric>>, a: &Matrix, label: &str) -> Result<Vec<f64>> {
    match c {
        None => Ok(a.row_sums()),
        Some(v) => v
            .iter()
            .enumerate()
            .map(|(i, x)| x.value(&format!("{label}[{}]", i + 1)))
            .collect(),
    }
}

impl SchemeDocument {
    pub fn to_tableau(&self) -> Result<CsrkTableau> {
        let s = self.s;
        if s == 0 {
            return Err(Error::Document("s must be positive".into()));
        }
        let a = [matrix(&self.a0, s, "A0")?, matrix(&self.a1, s, "A1")?, matrix(&self.a2, s, "A2")?];
        let b = [matrix(&self.b0, s, "B0")?, matrix(&self.b1, s, "B1")?, matrix(&self.b2, s, "B2")?];
        let c = [
            nodes(&self.c0, &a[0], "c0")?,
            nodes(&self.c1, &a[1], "c1")?,
            nodes(&self.c2, &a[2], "c2")?,
        ];
        let parts = TableauParts {
            c,
            a,
            b,
            alpha: weights(&self.alpha, s, "alpha")?,
            beta: [
                weights(&self.beta1, s, "beta1")?,
                weights(&self.beta2, s, "beta2")?,
                weights(&self.beta3, s, "beta3")?,
                weights(&self.beta4, s, "beta4")?,
            ],
            meta: SchemeMeta {
                name: self.name.clone(),
                p_deterministic: self.meta.p_deterministic,
                p_stochastic: self.meta.p_stochastic,
                declared_conditions: self.meta.declared_conditions.iter().copied().collect::<BTreeSet<_>>(),
            },
        };
        CsrkTableau::new(parts)
    }
}

/// Parses and validates a JSON scheme document.
pub fn parse_tableau(text: &str) -> Result<CsrkTableau> {
    let doc: SchemeDocument =
        serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
    doc.to_tableau()
}

fn num(v: f64) -> Numeric {
    // shortest representation that parses back to the same double
    Numeric::Expr(format!("{v:?}"))
}

/// Serializes a tableau so that [`parse_tableau`] reproduces it exactly.
pub fn to_document(t: &CsrkTableau) -> SchemeDocument {
    let rows = |m: &Matrix| Some(m.rows().map(|r| r.iter().copied().map(num).collect()).collect());
    let ws = |w: &[WeightPolynomial]| {
        Some(w.iter().map(|p| p.terms().map(|(n, c)| (n, num(c))).collect()).collect())
    };
    let cs = |q: usize| Some(t.c(q).iter().copied().map(num).collect());
    SchemeDocument {
        name: t.name().to_string(),
        s: t.stages(),
        c0: cs(0),
        c1: cs(1),
        c2: cs(2),
        a0: rows(t.a(0)),
        a1: rows(t.a(1)),
        a2: rows(t.a(2)),
        b0: rows(t.b(0)),
        b1: rows(t.b(1)),
        b2: rows(t.b(2)),
        alpha: ws(t.alpha()),
        beta1: ws(t.beta(1)),
        beta2: ws(t.beta(2)),
        beta3: ws(t.beta(3)),
        beta4: ws(t.beta(4)),
        meta: MetaDocument {
            p_deterministic: t.meta().p_deterministic,
            p_stochastic: t.meta().p_stochastic,
            declared_conditions: t.meta().declared_conditions.iter().copied().collect(),
        },
    }
}
