use std::f64::consts::PI;

use hypoweyl::vfalgebra::{
    bracket, evaluate, iterated_bracket, parse_field, AlgebraError, ChartCoeff, Scalar,
    VectorField, Word,
};
use proptest::prelude::*;

const DIM: usize = 3;

fn f(s: &str) -> VectorField {
    parse_field(s, DIM).unwrap()
}

#[test]
fn bracket_examples() {
    assert!(bracket(&f("d/dx"), &f("d/dy")).unwrap().is_zero());
    let x = f("d/dx - (y/2)*d/dz");
    let y = f("d/dy + (x/2)*d/dz");
    assert_eq!(bracket(&x, &y).unwrap(), f("d/dz"));
    assert_eq!(
        bracket(&f("d/dx"), &f("sin(x)*d/dy")).unwrap(),
        f("cos(x)*d/dy")
    );
    let two = parse_field("d/dx", 2).unwrap();
    assert!(matches!(
        bracket(&two, &f("d/dx")),
        Err(AlgebraError::Dimension { .. })
    ));
}

#[test]
fn iterated_bracket_examples() {
    let heis = vec![f("d/dx"), f("d/dy + x*d/dz")];
    assert_eq!(iterated_bracket(&Word(vec![1]), &heis, 4).unwrap(), heis[1]);
    assert_eq!(
        iterated_bracket(&Word(vec![0, 1]), &heis, 4).unwrap(),
        f("d/dz")
    );
    let gr = vec![
        parse_field("d/dx", 2).unwrap(),
        parse_field("sin(x)*d/dy", 2).unwrap(),
    ];
    assert_eq!(
        iterated_bracket(&Word(vec![0, 0, 1]), &gr, 4).unwrap(),
        parse_field("-sin(x)*d/dy", 2).unwrap()
    );
    assert!(iterated_bracket(&Word(vec![0, 0, 0, 0, 1]), &gr, 4).is_err());
}

#[test]
fn evaluate_examples() {
    assert_eq!(
        evaluate(&f("d/dx"), &[0.3, -1.0, 2.0]).unwrap(),
        vec![1.0, 0.0, 0.0]
    );
    let g = parse_field("sin(x)*d/dy", 2).unwrap();
    let v = evaluate(&g, &[PI / 2.0, 0.7]).unwrap();
    assert!(v[0] == 0.0 && (v[1] - 1.0).abs() < 1e-15);
    assert_eq!(
        evaluate(&f("d/dy + x*d/dz"), &[0.25, 0.0, 0.0]).unwrap(),
        vec![0.0, 1.0, 0.25]
    );
}

fn coeff_term() -> impl Strategy<Value = ChartCoeff> {
    (
        -6i128..=6,
        1i128..=4,
        0usize..DIM,
        0u32..=2,
        0usize..DIM,
        0i64..=2,
        any::<bool>(),
    )
        .prop_map(|(num, den, pa, pk, ta, freq, sine)| {
            let c = ChartCoeff::constant(DIM, Scalar::ratio(num, den));
            let mono = ChartCoeff::var(DIM, pa).pow(pk);
            let trig = if freq == 0 {
                ChartCoeff::one(DIM)
            } else if sine {
                ChartCoeff::sin(DIM, ta, freq, false)
            } else {
                ChartCoeff::cos(DIM, ta, freq, false)
            };
            c.mul(&mono).mul(&trig)
        })
}

fn coeff() -> impl Strategy<Value = ChartCoeff> {
    prop::collection::vec(coeff_term(), 1..=2)
        .prop_map(|ts| ts.iter().fold(ChartCoeff::zero(DIM), |a, t| a.add(t)))
}

fn field() -> impl Strategy<Value = VectorField> {
    prop::collection::vec(coeff(), DIM).prop_map(|c| VectorField::new(c).unwrap())
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, DIM)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn antisymmetry(x in field(), y in field()) {
        prop_assert!(bracket(&x, &y).unwrap().add(&bracket(&y, &x).unwrap()).is_zero());
    }

    #[test]
    fn jacobi(x in field(), y in field(), z in field()) {
        let a = bracket(&x, &bracket(&y, &z).unwrap()).unwrap();
        let b = bracket(&y, &bracket(&z, &x).unwrap()).unwrap();
        let c = bracket(&z, &bracket(&x, &y).unwrap()).unwrap();
        prop_assert!(a.add(&b).add(&c).is_zero());
    }

    #[test]
    fn bilinear_over_rationals(x in field(), y in field(), num in -7i128..=7, den in 1i128..=5) {
        let a = Scalar::ratio(num, den);
        prop_assert_eq!(bracket(&x.scale(a), &y).unwrap(), bracket(&x, &y).unwrap().scale(a));
    }

    #[test]
    fn bracket_matches_finite_differences(x in field(), y in field(), p in point()) {
        // [X,Y] x_k = X(Y_k) - Y(X_k): directional central differences.
        let eps = 1e-4;
        let xp = x.eval(&p);
        let yp = y.eval(&p);
        let shift = |d: &[f64], s: f64| -> Vec<f64> { p.iter().zip(d).map(|(a, b)| a + s * b).collect() };
        let exact = bracket(&x, &y).unwrap().eval(&p);
        let (yf, yb) = (y.eval(&shift(&xp, eps)), y.eval(&shift(&xp, -eps)));
        let (xf, xb) = (x.eval(&shift(&yp, eps)), x.eval(&shift(&yp, -eps)));
        let scale = 1.0 + xp.iter().chain(&yp).map(|v| v.abs()).fold(0.0, f64::max).powi(3);
        for k in 0..DIM {
            let fd = (yf[k] - yb[k] - xf[k] + xb[k]) / (2.0 * eps);
            prop_assert!((fd - exact[k]).abs() <= 1e-5 * scale * (1.0 + exact[k].abs()),
                "component {}: fd {} exact {}", k, fd, exact[k]);
        }
    }
}
