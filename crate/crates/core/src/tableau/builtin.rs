use std::collections::BTreeSet;

use super::{
    ConditionFamily::{self, *},
    ConditionId, CsrkTableau, Matrix, SchemeMeta, TableauParts, WeightPolynomial as W,
};
use crate::error::{Error, Result};

pub const BUILTIN_NAMES: [&str; 7] = [
    "EULER_LINEAR",
    "EULER_OPT",
    "CRDI1WM",
    "CRDI2WM",
    "CRDI3WM",
    "CRDI4WM",
    "CRDI5WM",
];

/// Looks up a builtin scheme by name.
pub fn builtin_scheme(name: &str) -> Result<CsrkTableau> {
    let parts = match name {
        "EULER_LINEAR" => euler(false),
        "EULER_OPT" => euler(true),
        "CRDI1WM" => crdi1(),
        "CRDI2WM" => crdi2(),
        "CRDI3WM" => crdi3(),
        "CRDI4WM" => crdi45(false),
        "CRDI5WM" => crdi45(true),
        _ => return Err(Error::UnknownScheme(name.to_string())),
    };
    Ok(CsrkTableau::new(parts).expect("builtin tableau is valid"))
}

fn ids(family: ConditionFamily, idx: impl IntoIterator<Item = u8>) -> Vec<ConditionId> {
    idx.into_iter().map(|k| ConditionId::new(family, k)).collect()
}

fn meta(name: &str, p_d: f64, p_s: f64, declared: Vec<Vec<ConditionId>>) -> SchemeMeta {
    SchemeMeta {
        name: name.to_string(),
        p_deterministic: p_d,
        p_stochastic: p_s,
        declared_conditions: declared.into_iter().flatten().collect::<BTreeSet<_>>(),
    }
}

fn zeros(s: usize) -> Vec<W> {
    vec![W::zero(); s]
}

fn euler(optimal: bool) -> TableauParts {
    let (name, beta1, cont) = if optimal {
        ("EULER_OPT", W::lit(&[(1, 1.0)]), ids(ContinuousOrder1, 1..=7))
    } else {
        // (θ)² = θ fails inside the step; condition 4 holds only at θ = 1
        ("EULER_LINEAR", W::lit(&[(2, 1.0)]), ids(ContinuousOrder1, [1, 2, 3, 5, 6, 7]))
    };
    TableauParts {
        c: [vec![0.0], vec![0.0], vec![0.0]],
        a: [Matrix::zeros(1), Matrix::zeros(1), Matrix::zeros(1)],
        b: [Matrix::zeros(1), Matrix::zeros(1), Matrix::zeros(1)],
        alpha: vec![W::lit(&[(2, 1.0)])],
        beta: [vec![beta1], zeros(1), zeros(1), zeros(1)],
        meta: meta(name, 1.0, 1.0, vec![cont, ids(AtOne, 1..=7)]),
    }
}

fn crdi1() -> TableauParts {
    let z = || Matrix::zeros(2);
    TableauParts {
        c: [vec![0.0, 2.0 / 3.0], vec![0.0; 2], vec![0.0; 2]],
        a: [Matrix::lower(2, &[&[2.0 / 3.0]]), z(), z()],
        b: [Matrix::lower(2, &[&[2.0 / 3.0]]), z(), z()],
        alpha: vec![W::lit(&[(2, 1.0), (4, -0.75)]), W::lit(&[(4, 0.75)])],
        beta: [vec![W::lit(&[(1, 1.0)]), W::zero()], zeros(2), zeros(2), zeros(2)],
        meta: meta(
            "CRDI1WM",
            2.0,
            1.0,
            vec![
                ids(ContinuousOrder1, 1..=7),
                ids(AtOne, 1..=8),
                ids(ContinuousOrder2Extended, [8]),
            ],
        ),
    }
}

/// Stochastic part shared by CRDI2WM–CRDI5WM.
struct StochasticPart {
    c1: Vec<f64>,
    a1: Matrix,
    b1: Matrix,
    b2: Matrix,
    beta: [Vec<W>; 4],
}

fn stochastic_part() -> StochasticPart {
    let r23 = (2.0f64 / 3.0).sqrt();
    let r2 = 2.0f64.sqrt();
    let b2w = 6.0f64.sqrt() / 4.0;
    let b4w = r2 / 4.0;
    StochasticPart {
        c1: vec![0.0, 2.0 / 3.0, 2.0 / 3.0],
        a1: Matrix::lower(3, &[&[2.0 / 3.0], &[2.0 / 3.0, 0.0]]),
        b1: Matrix::lower(3, &[&[r23], &[-r23, 0.0]]),
        b2: Matrix::lower(3, &[&[r2], &[-r2, 0.0]]),
        beta: [
            vec![W::lit(&[(1, 1.0), (3, -0.75)]), W::lit(&[(3, 0.375)]), W::lit(&[(3, 0.375)])],
            vec![W::zero(), W::lit(&[(2, b2w)]), W::lit(&[(2, -b2w)])],
            vec![W::lit(&[(3, -0.25)]), W::lit(&[(3, 0.125)]), W::lit(&[(3, 0.125)])],
            vec![W::zero(), W::lit(&[(2, b4w)]), W::lit(&[(2, -b4w)])],
        ],
    }
}

fn order2_declared(extended: &[u8]) -> Vec<Vec<ConditionId>> {
    vec![
        ids(ContinuousOrder1, 1..=7),
        ids(AtOne, 1..=50),
        ids(ContinuousOrder2Extended, extended.iter().copied()),
    ]
}

const EXTENDED_CRDI: [u8; 10] = [8, 9, 11, 13, 14, 15, 16, 22, 32, 33];

fn with_deterministic(
    name: &str,
    c0: Vec<f64>,
    a0: Matrix,
    b0: Matrix,
    alpha: Vec<W>,
    p_d: f64,
    declared: Vec<Vec<ConditionId>>,
) -> TableauParts {
    let sp = stochastic_part();
    TableauParts {
        c: [c0, sp.c1, vec![0.0; 3]],
        a: [a0, sp.a1, Matrix::zeros(3)],
        b: [b0, sp.b1, sp.b2],
        alpha,
        beta: sp.beta,
        meta: meta(name, p_d, 2.0, declared),
    }
}

fn crdi2() -> TableauParts {
    with_deterministic(
        "CRDI2WM",
        vec![0.0, 1.0, 0.0],
        Matrix::lower(3, &[&[1.0], &[0.0, 0.0]]),
        Matrix::lower(3, &[&[1.0], &[0.0, 0.0]]),
        vec![W::lit(&[(2, 1.0), (4, -0.5)]), W::lit(&[(4, 0.5)]), W::zero()],
        2.0,
        order2_declared(&EXTENDED_CRDI),
    )
}

fn crdi3() -> TableauParts {
    let r15 = 15.0f64.sqrt();
    let mut declared = order2_declared(&EXTENDED_CRDI);
    declared.push(ids(DetOrder3, [1, 2]));
    with_deterministic(
        "CRDI3WM",
        vec![0.0, 0.5, 0.75],
        Matrix::lower(3, &[&[0.5], &[0.0, 0.75]]),
        Matrix::lower(3, &[&[(9.0 - 2.0 * r15) / 14.0], &[(18.0 + 3.0 * r15) / 28.0, 0.0]]),
        vec![
            W::lit(&[(2, 1.0), (4, -7.0 / 9.0)]),
            W::lit(&[(4, 1.0 / 3.0)]),
            W::lit(&[(4, 4.0 / 9.0)]),
        ],
        3.0,
        declared,
    )
}

fn crdi45(fifth: bool) -> TableauParts {
    let r6 = 6.0f64.sqrt();
    let (name, alpha, declared) = if fifth {
        // α₃ chosen so that α(θ)ᵀ(A⁽⁰⁾e)² = θ³/3; continuous condition 9 no longer holds
        let mut declared = order2_declared(&[8, 11, 13, 14, 15, 16, 22, 32, 33]);
        declared.push(ids(DetOrder3, [1, 2]));
        declared.push(ids(DetOrder3Continuous, [1]));
        (
            "CRDI5WM",
            vec![
                W::lit(&[(2, 1.0), (4, -1.5), (6, 2.0 / 3.0)]),
                W::lit(&[(4, 2.0), (6, -4.0 / 3.0)]),
                W::lit(&[(4, -0.5), (6, 2.0 / 3.0)]),
            ],
            declared,
        )
    } else {
        let mut declared = order2_declared(&EXTENDED_CRDI);
        declared.push(ids(DetOrder3, [1, 2]));
        (
            "CRDI4WM",
            vec![
                W::lit(&[(2, 1.0), (4, -5.0 / 6.0)]),
                W::lit(&[(4, 2.0 / 3.0)]),
                W::lit(&[(4, 1.0 / 6.0)]),
            ],
            declared,
        )
    };
    with_deterministic(
        name,
        vec![0.0, 0.5, 1.0],
        Matrix::lower(3, &[&[0.5], &[-1.0, 2.0]]),
        Matrix::lower(3, &[&[(6.0 - r6) / 10.0], &[(3.0 + 2.0 * r6) / 5.0, 0.0]]),
        alpha,
        3.0,
        declared,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(ws: &[W], theta: f64) -> Vec<f64> {
        ws.iter().map(|w| w.evaluate(theta).unwrap()).collect()
    }

    #[test]
    fn crdi2_entries() {
        let t = builtin_scheme("CRDI2WM").unwrap();
        assert_eq!(t.a(0).rows().nth(1).unwrap(), &[1.0, 0.0, 0.0]);
        assert_eq!(t.b(1).rows().nth(1).unwrap(), &[(2.0f64 / 3.0).sqrt(), 0.0, 0.0]);
        let b22 = &t.beta(2)[1];
        assert_eq!(b22.terms().collect::<Vec<_>>(), vec![(2, 6.0f64.sqrt() / 4.0)]);
    }

    #[test]
    fn crdi3_alpha() {
        let t = builtin_scheme("CRDI3WM").unwrap();
        let th = 0.3;
        let got = eval(t.alpha(), th);
        let want = [th - 7.0 / 9.0 * th * th, th * th / 3.0, 4.0 / 9.0 * th * th];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn euler_linear_is_euler_maruyama_at_one() {
        let t = builtin_scheme("EULER_LINEAR").unwrap();
        let w = t.weights_at(1.0).unwrap();
        assert_eq!(
            (w.alpha[0], w.beta[0][0], w.beta[1][0], w.beta[2][0], w.beta[3][0]),
            (1.0, 1.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn crdi5_shares_crdi4_coefficients() {
        let four = builtin_scheme("CRDI4WM").unwrap();
        let five = builtin_scheme("CRDI5WM").unwrap();
        for q in 0..3 {
            assert_eq!(four.a(q), five.a(q));
            assert_eq!(four.b(q), five.b(q));
            assert_eq!(four.c(q), five.c(q));
        }
        for r in 1..=4 {
            assert_eq!(four.beta(r), five.beta(r));
        }
        assert_ne!(four.alpha(), five.alpha());
        for (x, y) in eval(five.alpha(), 1.0).iter().zip(eval(four.alpha(), 1.0)) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_family_only_for_order_two_schemes() {
        for name in BUILTIN_NAMES {
            let t = builtin_scheme(name).unwrap();
            assert_eq!(t.uses_cross_family(), t.stages() == 3, "{name}");
        }
    }

    #[test]
    fn unknown_name() {
        assert_eq!(builtin_scheme("RK4"), Err(Error::UnknownScheme("RK4".into())));
    }
}
