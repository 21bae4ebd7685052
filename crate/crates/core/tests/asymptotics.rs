use std::f64::consts::PI;

use hypoweyl::assembly::{ChartSpec, Scenario};
use hypoweyl::asymptotics::verify::run_audit;
use hypoweyl::asymptotics::{
    fit_power_law, gamma, heisenberg_c0, karamata_check, theoretical_coefficient,
    upper_gamma_quantile, verify, FitError, TheoryKind, Thresholds, TraceChoice, VerifyOptions,
    WindowPolicy,
};
use hypoweyl::vfalgebra::parse_field;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario(id: &str, chart: ChartSpec, src: &[&str]) -> Scenario {
    let n = chart.dim();
    Scenario::new(
        id,
        chart,
        src.iter().map(|s| parse_field(s, n).unwrap()).collect(),
    )
}

fn geometric(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64))
        .collect()
}

#[test]
fn fit_examples() {
    let s: Vec<(f64, f64)> = geometric(1.0, 100.0, 12)
        .into_iter()
        .map(|u| (u, PI * u))
        .collect();
    let f = fit_power_law(&s, &WindowPolicy::All).unwrap();
    assert!((f.exponent - 1.0).abs() <= 1e-12);
    assert!((f.coefficient - PI).abs() <= 1e-11);

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let s: Vec<(f64, f64)> = geometric(1.0, 1e3, 20)
        .into_iter()
        .map(|u| (u, u * u * (1.0 + rng.gen_range(-0.02..0.02))))
        .collect();
    let f = fit_power_law(&s, &WindowPolicy::All).unwrap();
    assert!((f.exponent - 2.0).abs() <= 0.05, "{}", f.exponent);

    let s: Vec<(f64, f64)> = geometric(0.1, 10.0, 8)
        .into_iter()
        .map(|u| (u, 7.0))
        .collect();
    let f = fit_power_law(&s, &WindowPolicy::All).unwrap();
    assert!(f.exponent.abs() <= f.exponent_stderr.max(1e-12));
}

#[test]
fn fit_errors_and_windows() {
    let s: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, i as f64)).collect();
    assert_eq!(
        fit_power_law(&s, &WindowPolicy::All),
        Err(FitError::InsufficientSamples { found: 5, need: 6 })
    );
    let mut s: Vec<(f64, f64)> = (1..=8).map(|i| (i as f64, i as f64)).collect();
    s[3].1 = 0.0;
    assert!(matches!(
        fit_power_law(&s, &WindowPolicy::All),
        Err(FitError::NonPositive { .. })
    ));

    let counting = WindowPolicy::Counting {
        dim: 1000,
        lambda_cap: Some(50.0),
    };
    assert!(!counting.admits(10.0, 29.0));
    assert!(counting.admits(10.0, 30.0));
    assert!(counting.admits(10.0, 50.0));
    assert!(!counting.admits(10.0, 51.0));
    assert!(!counting.admits(60.0, 40.0));
    let trace = WindowPolicy::Trace { t_lo: 0.1 };
    assert!(trace.admits(0.1, 10.0) && !trace.admits(0.09, 100.0) && !trace.admits(1.0, 9.0));
    let range = WindowPolicy::Range { lo: 2.0, hi: 4.0 };
    let s: Vec<(f64, f64)> = (1..=20)
        .map(|i| (i as f64 * 0.25, (i as f64).powi(3)))
        .collect();
    let f = fit_power_law(&s, &range).unwrap();
    assert_eq!(f.window, (2.0, 4.0));
    assert_eq!(f.samples.len(), 9);
}

#[test]
fn fit_scale_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s: Vec<(f64, f64)> = geometric(1.0, 50.0, 15)
        .into_iter()
        .map(|u| (u, 2.5 * u.powf(1.7) * (1.0 + rng.gen_range(-0.1..0.1))))
        .collect();
    let f = fit_power_law(&s, &WindowPolicy::All).unwrap();
    let (a, b) = (3.7, 0.2);
    let su: Vec<(f64, f64)> = s.iter().map(|&(u, v)| (a * u, v)).collect();
    let fu = fit_power_law(&su, &WindowPolicy::All).unwrap();
    assert!((fu.exponent - f.exponent).abs() <= 1e-12);
    assert!((fu.coefficient / (f.coefficient * a.powf(-f.exponent)) - 1.0).abs() <= 1e-12);
    let sv: Vec<(f64, f64)> = s.iter().map(|&(u, v)| (u, b * v)).collect();
    let fv = fit_power_law(&sv, &WindowPolicy::All).unwrap();
    assert!((fv.exponent - f.exponent).abs() <= 1e-12);
    assert!((fv.coefficient / (b * f.coefficient) - 1.0).abs() <= 1e-12);
}

/// ln Gamma by recurrence up to x + 30 and the Stirling series there.
fn ln_gamma_series(x: f64) -> f64 {
    let shift = 30;
    let z = x + shift as f64;
    let mut s = (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln();
    let b = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
    ];
    for (k, c) in b.iter().enumerate() {
        s += c / z.powi(2 * k as i32 + 1);
    }
    s - (0..shift).map(|i| (x + i as f64).ln()).sum::<f64>()
}

#[test]
fn gamma_closed_forms() {
    let mut fact = 1.0f64;
    for k in 0..=10u32 {
        if k > 0 {
            fact *= k as f64;
        }
        let g = gamma(k as f64 + 1.0);
        assert!((g / fact - 1.0).abs() <= 1e-13, "k {k}");
        assert!((ln_gamma_series(k as f64 + 1.0) - fact.ln()).abs() <= 1e-12);
        let two_k_fact: f64 = (1..=2 * k).map(|i| i as f64).product();
        let half = two_k_fact * PI.sqrt() / (4f64.powi(k as i32) * fact);
        assert!((gamma(k as f64 + 0.5) / half - 1.0).abs() <= 1e-13, "k {k}");
        assert!(
            (ln_gamma_series(k as f64 + 0.5) - half.ln()).abs() <= 1e-12,
            "k {k}"
        );
    }
}

#[test]
fn upper_gamma_quantile_inverts() {
    // Gamma(2, x) / Gamma(2) = (1 + x) e^{-x}.
    for q in [0.05, 0.5, 0.9] {
        let x = upper_gamma_quantile(2.0, q);
        assert!(((1.0 + x) * (-x).exp() - q).abs() <= 1e-12);
    }
    let x = upper_gamma_quantile(1.0, 0.05);
    assert!((x - 20f64.ln()).abs() <= 1e-12);
}

#[test]
fn heisenberg_oracle_constant() {
    // int_0^inf tau / sinh(tau) = pi^2 / 4, so c0 = 1/16.
    assert!((heisenberg_c0() - 1.0 / 16.0).abs() <= 1e-12);
}

#[test]
fn theory_coefficients() {
    let t3 = scenario(
        "t3",
        ChartSpec::Torus {
            lengths: vec![2.0 * PI; 3],
        },
        &["d/dx", "d/dy", "d/dz"],
    );
    let a = run_audit(&t3, &[6, 6, 6], 1).unwrap();
    let th = theoretical_coefficient(&t3, &a);
    assert_eq!(th.kind, TheoryKind::EllipticClosedForm);
    let eps = (4.0 * PI).powf(-1.5) * (2.0 * PI).powi(3);
    assert!((th.integral_eps0.unwrap() / eps - 1.0).abs() <= 1e-12);
    assert!((th.spectral_coeff.unwrap() / (eps / (0.75 * PI.sqrt())) - 1.0).abs() <= 1e-12);

    let h = scenario("h", ChartSpec::Nilmanifold3, &["d/dx", "d/dy + x*d/dz"]);
    let th = theoretical_coefficient(&h, &run_audit(&h, &[6, 6, 6], 1).unwrap());
    assert_eq!(th.kind, TheoryKind::HeisenbergOracle);
    assert!((th.integral_eps0.unwrap() - 1.0 / 16.0).abs() <= 1e-12);
    assert_eq!(th.q_l, 4);

    let g = scenario(
        "g",
        ChartSpec::Torus {
            lengths: vec![2.0 * PI; 2],
        },
        &["d/dx", "sin(x)*d/dy"],
    );
    let th = theoretical_coefficient(&g, &run_audit(&g, &[64, 64], 1).unwrap());
    assert_eq!(th.kind, TheoryKind::ZeroMeasure);
    assert_eq!(th.integral_eps0, Some(0.0));

    let mut hd = h.clone();
    hd.density = hypoweyl::vfalgebra::parse_coeff("2 + sin(2*pi*x)", 3).unwrap();
    let th = theoretical_coefficient(&hd, &run_audit(&hd, &[6, 6, 6], 1).unwrap());
    assert_eq!(th.kind, TheoryKind::Unknown);
}

fn synthetic(c: f64, p: f64, lo: f64, hi: f64) -> hypoweyl::asymptotics::PowerFit {
    let s: Vec<(f64, f64)> = geometric(lo, hi, 10)
        .into_iter()
        .map(|u| (u, c * u.powf(p)))
        .collect();
    fit_power_law(&s, &WindowPolicy::All).unwrap()
}

#[test]
fn karamata_examples() {
    let count = synthetic(1.0, 2.0, 10.0, 100.0);
    let trace = synthetic(gamma(3.0), -2.0, 0.01, 0.1);
    let r = karamata_check(&trace, &count, 1e-6, 1e-6);
    assert!(r.pass, "{r:?}");
    assert!(r.exponent_gap <= 1e-12 && r.coefficient_gap <= 1e-12);

    let bad = synthetic(1.0, 2.5, 10.0, 100.0);
    assert!(!karamata_check(&trace, &bad, 0.05, 0.15).pass);
}

#[test]
fn karamata_closure() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let p = rng.gen_range(0.5..3.0);
        let c = rng.gen_range(0.01..10.0);
        let s: Vec<(f64, f64)> = geometric(5.0, 500.0, 12)
            .into_iter()
            .map(|u| (u, c * u.powf(p) * (1.0 + rng.gen_range(-0.05..0.05))))
            .collect();
        let count = fit_power_law(&s, &WindowPolicy::All).unwrap();
        let trace = synthetic(
            count.coefficient * gamma(count.exponent + 1.0),
            -count.exponent,
            1e-3,
            1e-1,
        );
        let r = karamata_check(&trace, &count, 1e-9, 1e-9);
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn verify_torus_is_deterministic() {
    let sc = scenario(
        "t2-small",
        ChartSpec::Torus {
            lengths: vec![2.0 * PI; 2],
        },
        &["d/dx", "d/dy"],
    );
    let opts = VerifyOptions {
        resolution: vec![64, 64],
        probes: 16,
        trace_times: 10,
        trace_method: TraceChoice::Stochastic,
        ..VerifyOptions::default()
    };
    let th = Thresholds::default();
    let a = verify(&sc, &th, &opts);
    let b = verify(&sc, &th, &opts);
    assert_eq!(a.verdict.to_json(), b.verdict.to_json());
    assert!(
        a.verdict.diagnostics.is_empty(),
        "{:?}",
        a.verdict.diagnostics
    );
    let names: Vec<&str> = a.verdict.checks.iter().map(|c| c.name.as_str()).collect();
    for n in [
        "count_exponent",
        "trace_exponent",
        "count_coefficient",
        "karamata_exponent",
        "uniform_bound_spread",
    ] {
        assert!(names.contains(&n), "{names:?}");
    }
    let f = a.count_fit.unwrap();
    assert!((f.exponent - 1.0).abs() <= 0.1, "{f:?}");
}

#[test]
fn verify_reports_audit_failure() {
    let sc = scenario(
        "bad",
        ChartSpec::Torus {
            lengths: vec![2.0 * PI; 2],
        },
        &["d/dx"],
    );
    let opts = VerifyOptions {
        resolution: vec![16, 16],
        ..VerifyOptions::default()
    };
    let out = verify(&sc, &Thresholds::default(), &opts);
    assert!(!out.verdict.overall);
    assert!(!out.verdict.diagnostics.is_empty());
    assert!(out.count_fit.is_none());
}
