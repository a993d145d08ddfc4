use std::collections::BTreeSet;

use csrk_core::tableau::{
    builtin_scheme, check_conditions, check_conditions_for, default_theta_grid, uniform_theta_grid,
    ConditionFamily, ConditionId, CsrkTableau, Matrix, SchemeMeta, TableauParts, WeightPolynomial,
    BUILTIN_NAMES, DEFAULT_TOLERANCE,
};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn builtin_schemes_pass_their_declared_conditions() {
    for name in BUILTIN_NAMES {
        let t = builtin_scheme(name).unwrap();
        let report = check_conditions(&t, &default_theta_grid(), DEFAULT_TOLERANCE).unwrap();
        let failed: Vec<_> = report.failures().map(|r| r.id.to_string()).collect();
        assert!(report.pass, "{name}: {failed:?}");
    }
}

#[test]
fn first_order_identities_on_a_fine_grid() {
    for name in BUILTIN_NAMES {
        let t = builtin_scheme(name).unwrap();
        let s = t.stages();
        let e = vec![1.0; s];
        let b1e = t.b(1).mul_vec(&e);
        let b2e = t.b(2).mul_vec(&e);
        for th in uniform_theta_grid(101) {
            let w = t.weights_at(th).unwrap();
            assert!((dot(&w.alpha, &e) - th).abs() < 1e-12, "{name} alpha at {th}");
            assert!(dot(&w.beta[1], &e).abs() < 1e-12);
            assert!(dot(&w.beta[2], &e).abs() < 1e-12);
            assert!(dot(&w.beta[3], &e).abs() < 1e-12);
            assert!(dot(&w.beta[0], &b1e).abs() < 1e-12);
            assert!(dot(&w.beta[2], &b2e).abs() < 1e-12);
            let sq = dot(&w.beta[0], &e).powi(2);
            if name == "EULER_LINEAR" {
                assert!((sq - th * th).abs() < 1e-12);
            } else {
                assert!((sq - th).abs() < 1e-12, "{name} beta1 at {th}");
            }
        }
    }
}

#[test]
fn deterministic_third_order_at_one() {
    for name in ["CRDI3WM", "CRDI4WM", "CRDI5WM"] {
        let t = builtin_scheme(name).unwrap();
        let e = [1.0; 3];
        let a0e = t.a(0).mul_vec(&e);
        let sq: Vec<f64> = a0e.iter().map(|x| x * x).collect();
        let w = t.weights_at(1.0).unwrap();
        assert!((dot(&w.alpha, &sq) - 1.0 / 3.0).abs() < 1e-12, "{name}");
        assert!((dot(&w.alpha, &t.a(0).mul_vec(&a0e)) - 1.0 / 6.0).abs() < 1e-12, "{name}");
    }
}

#[test]
fn crdi5_continuous_third_order_condition() {
    let t = builtin_scheme("CRDI5WM").unwrap();
    let a0e = t.a(0).mul_vec(&[1.0; 3]);
    let sq: Vec<f64> = a0e.iter().map(|x| x * x).collect();
    for th in uniform_theta_grid(101) {
        let w = t.weights_at(th).unwrap();
        assert!((dot(&w.alpha, &sq) - th.powi(3) / 3.0).abs() < 1e-12);
    }
    // CRDI4WM shares A⁽⁰⁾ but meets the identity only at θ = 1
    let crdi4 = builtin_scheme("CRDI4WM").unwrap();
    let w4 = crdi4.weights_at(0.5).unwrap();
    assert!((dot(&w4.alpha, &sq) - 0.5f64.powi(3) / 3.0).abs() > 1e-3);
}

#[test]
fn negative_controls() {
    let grid = default_theta_grid();
    let opt = builtin_scheme("EULER_OPT").unwrap();
    let id13 = ConditionId::new(ConditionFamily::AtOne, 13);
    let r = check_conditions_for(&opt, &BTreeSet::from([id13]), &grid, DEFAULT_TOLERANCE).unwrap();
    assert!(!r.pass);
    assert!((r.record(id13).unwrap().residual - 1.0).abs() < 1e-15);

    let lin = builtin_scheme("EULER_LINEAR").unwrap();
    let id4 = ConditionId::new(ConditionFamily::ContinuousOrder1, 4);
    let r = check_conditions_for(&lin, &BTreeSet::from([id4]), &[0.0, 0.5, 1.0], DEFAULT_TOLERANCE)
        .unwrap();
    let rec = r.record(id4).unwrap();
    assert!(!rec.pass);
    assert_eq!(rec.worst_theta, 0.5);
    assert!((rec.residual - 0.25).abs() < 1e-15);
}

fn two_stage(b1_21: f64, u: f64, b0_21: f64, a0_21: f64) -> CsrkTableau {
    let lower = |x: f64| Matrix::from_rows(&[vec![0.0, 0.0], vec![x, 0.0]]).unwrap();
    let half = |c: f64| WeightPolynomial::from_terms([(1, c)]).unwrap();
    let full = |c: f64| WeightPolynomial::from_terms([(2, c)]).unwrap();
    CsrkTableau::new(TableauParts {
        c: [vec![0.0, a0_21], vec![0.0; 2], vec![0.0; 2]],
        a: [lower(a0_21), Matrix::zeros(2), Matrix::zeros(2)],
        b: [lower(b0_21), lower(b1_21), Matrix::zeros(2)],
        alpha: vec![full(0.5), full(0.5)],
        beta: [
            vec![half(1.0 - u), half(u)],
            vec![WeightPolynomial::zero(); 2],
            vec![WeightPolynomial::zero(); 2],
            vec![WeightPolynomial::zero(); 2],
        ],
        meta: SchemeMeta {
            name: "two-stage candidate".into(),
            p_deterministic: 2.0,
            p_stochastic: 2.0,
            declared_conditions: BTreeSet::new(),
        },
    })
    .unwrap()
}

proptest! {
    // With two stages, β⁽¹⁾ᵀB⁽¹⁾e = 0 forces β⁽¹⁾ᵀ(B⁽¹⁾e)² = 0, so condition 15
    // cannot hold together with conditions 4 and 6.
    #[test]
    fn two_stage_schemes_cannot_reach_order_two(
        x in -3.0f64..3.0,
        b0 in -2.0f64..2.0,
        a0 in -2.0f64..2.0,
        zero_weight in any::<bool>(),
    ) {
        let t = if zero_weight { two_stage(x, 0.0, b0, a0) } else { two_stage(0.0, x, b0, a0) };
        let ids: BTreeSet<ConditionId> = [4u8, 6, 15]
            .into_iter()
            .map(|k| ConditionId::new(ConditionFamily::AtOne, k))
            .collect();
        let r = check_conditions_for(&t, &ids, &[0.0, 1.0], DEFAULT_TOLERANCE).unwrap();
        prop_assert!(r.record(ConditionId::new(ConditionFamily::AtOne, 4)).unwrap().pass);
        prop_assert!(r.record(ConditionId::new(ConditionFamily::AtOne, 6)).unwrap().pass);
        prop_assert!(!r.record(ConditionId::new(ConditionFamily::AtOne, 15)).unwrap().pass);
    }
}

#[test]
fn order_two_set_rejects_the_two_stage_corpus() {
    let order2: BTreeSet<ConditionId> =
        (1..=50).map(|k| ConditionId::new(ConditionFamily::AtOne, k)).collect();
    let grid = default_theta_grid();
    for t in [
        builtin_scheme("EULER_OPT").unwrap(),
        builtin_scheme("CRDI1WM").unwrap(),
        two_stage(1.0, 0.0, 2.0 / 3.0, 2.0 / 3.0),
        two_stage(0.0, 0.5, 1.0, 1.0),
    ] {
        let r = check_conditions_for(&t, &order2, &grid, DEFAULT_TOLERANCE).unwrap();
        assert!(!r.pass, "{}", t.name());
    }
}
