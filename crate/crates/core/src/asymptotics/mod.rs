//! Power-law fits of counting and trace data, theoretical leading
//! coefficients, the Karamata cross-check and verdicts.

pub mod verify;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{ChartSpec, Scenario};
use crate::filtration::AuditReport;
use crate::vfalgebra::parse_field;

pub use verify::{verify, Thresholds, TraceChoice, VerifyOptions, VerifyOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{found} samples in the window, at least {need} needed")]
    InsufficientSamples { found: usize, need: usize },
    #[error("nonpositive value {v} at u = {u}")]
    NonPositive { u: f64, v: f64 },
}

/// Minimum number of samples for a fit.
pub const MIN_SAMPLES: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
}

/// Ordinary least squares y = a + b x with regression standard errors.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let s2 = if n > 2.0 { rss / (n - 2.0) } else { 0.0 };
    let slope_se = if sxx > 0.0 {
        (s2 / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    let intercept_se = (s2 * (1.0 / n + mx * mx / sxx.max(f64::MIN_POSITIVE))).sqrt();
    LinearFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
    }
}

/// v ~ C u^p over a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub coefficient: f64,
    pub exponent_stderr: f64,
    pub coefficient_stderr: f64,
    pub window: (f64, f64),
    /// Max relative deviation of the data from the fit inside the window.
    pub residual: f64,
    /// The (u, v) pairs used.
    pub samples: Vec<(f64, f64)>,
}

impl PowerFit {
    /// Least-squares C with the exponent pinned to `p` (geometric mean of v/u^p).
    pub fn coefficient_at(&self, p: f64) -> f64 {
        let m = self
            .samples
            .iter()
            .map(|(u, v)| v.ln() - p * u.ln())
            .sum::<f64>()
            / self.samples.len() as f64;
        m.exp()
    }
}

/// Which samples enter a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowPolicy {
    All,
    /// u in [lo, hi].
    Range {
        lo: f64,
        hi: f64,
    },
    /// Counting data: 30 <= N <= 0.05 dim and lambda <= lambda_cap.
    Counting {
        dim: usize,
        lambda_cap: Option<f64>,
    },
    /// Trace data: t >= t_lo and Tr >= 10.
    Trace {
        t_lo: f64,
    },
}

impl WindowPolicy {
    pub fn admits(&self, u: f64, v: f64) -> bool {
        match self {
            WindowPolicy::All => true,
            WindowPolicy::Range { lo, hi } => u >= *lo && u <= *hi,
            WindowPolicy::Counting { dim, lambda_cap } => {
                v >= 30.0 && v <= 0.05 * *dim as f64 && lambda_cap.map_or(true, |c| u <= c)
            }
            WindowPolicy::Trace { t_lo } => u >= *t_lo && v >= 10.0,
        }
    }
}

/// Least squares on (log u, log v) over the window.
pub fn fit_power_law(samples: &[(f64, f64)], policy: &WindowPolicy) -> Result<PowerFit, FitError> {
    let mut sel: Vec<(f64, f64)> = samples
        .iter()
        .cloned()
        .filter(|&(u, v)| policy.admits(u, v))
        .collect();
    sel.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if let Some(&(u, v)) = sel.iter().find(|&&(u, v)| !(v > 0.0) || !(u > 0.0)) {
        return Err(FitError::NonPositive { u, v });
    }
    if sel.len() < MIN_SAMPLES {
        return Err(FitError::InsufficientSamples {
            found: sel.len(),
            need: MIN_SAMPLES,
        });
    }
    let lx: Vec<f64> = sel.iter().map(|s| s.0.ln()).collect();
    let ly: Vec<f64> = sel.iter().map(|s| s.1.ln()).collect();
    let f = linear_fit(&lx, &ly);
    let c = f.intercept.exp();
    let residual = sel
        .iter()
        .map(|&(u, v)| (v / (c * u.powf(f.slope)) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(PowerFit {
        exponent: f.slope,
        coefficient: c,
        exponent_stderr: f.slope_se,
        coefficient_stderr: c * f.intercept_se,
        window: (sel[0].0, sel[sel.len() - 1].0),
        residual,
        samples: sel,
    })
}

/// Gamma function; exact closed forms at integers and half-integers.
pub fn gamma(x: f64) -> f64 {
    let twice = 2.0 * x;
    if x > 0.0 && x <= 171.0 && twice.fract() == 0.0 {
        let k = x.floor() as u64;
        if x.fract() == 0.0 {
            return (1..k).fold(1.0, |acc, i| acc * i as f64);
        }
        // Gamma(k + 1/2) = (2k)! sqrt(pi) / (4^k k!) = sqrt(pi) prod_{i<k} (i + 1/2).
        return (0..k).fold(PI.sqrt(), |acc, i| acc * (i as f64 + 0.5));
    }
    statrs::function::gamma::gamma(x)
}

/// x with Gamma(a, x) / Gamma(a) = q.
pub fn upper_gamma_quantile(a: f64, q: f64) -> f64 {
    let f = |x: f64| statrs::function::gamma::gamma_ur(a, x) - q;
    let (mut lo, mut hi) = (0.0, a.max(1.0));
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Heat-kernel diagonal constant of the Heisenberg group for
/// -(X^2 + Y^2) with [X, Y] = d/dz: p_t(0) = c0 t^{-2},
/// c0 = (4 pi^2)^{-1} int_0^inf tau / sinh(tau) dtau, by composite Simpson.
pub fn heisenberg_c0() -> f64 {
    let upper = 60.0;
    let m = 60_000;
    let h = upper / m as f64;
    let f = |t: f64| if t == 0.0 { 1.0 } else { t / t.sinh() };
    let mut s = f(0.0) + f(upper);
    for i in 1..m {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0 / (4.0 * PI * PI)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoryKind {
    EllipticClosedForm,
    HeisenbergOracle,
    ZeroMeasure,
    Unknown,
}

impl TheoryKind {
    pub fn name(self) -> &'static str {
        match self {
            TheoryKind::EllipticClosedForm => "elliptic-closed-form",
            TheoryKind::HeisenbergOracle => "heisenberg-oracle",
            TheoryKind::ZeroMeasure => "zero-measure",
            TheoryKind::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryCoefficient {
    pub kind: TheoryKind,
    pub integral_eps0: Option<f64>,
    /// integral_eps0 / Gamma(Q_L/2 + 1).
    pub spectral_coeff: Option<f64>,
    pub q_l: usize,
}

fn is_standard_heisenberg(scenario: &Scenario) -> bool {
    if scenario.chart != ChartSpec::Nilmanifold3
        || scenario.psi.is_some()
        || scenario.has_first_order()
    {
        return false;
    }
    let x = parse_field("d/dx", 3).unwrap();
    let y = parse_field("d/dy + x*d/dz", 3).unwrap();
    let f = &scenario.terms.fields;
    f.len() == 2 && f[0] == x && f[1] == y && scenario.density.as_constant() == Some(1.0)
}

/// Leading coefficient of the heat trace / counting function predicted for
/// a scenario, given its audit.
pub fn theoretical_coefficient(scenario: &Scenario, audit: &AuditReport) -> TheoryCoefficient {
    let q_l = audit.q_l;
    let n = audit.dim;
    let g = gamma(q_l as f64 / 2.0 + 1.0);
    let with = |kind, v: f64| TheoryCoefficient {
        kind,
        integral_eps0: Some(v),
        spectral_coeff: Some(v / g),
        q_l,
    };
    if !audit.failures.is_empty() || q_l == 0 {
        return TheoryCoefficient {
            kind: TheoryKind::Unknown,
            integral_eps0: None,
            spectral_coeff: None,
            q_l,
        };
    }
    if audit.fk(q_l).map_or(false, |m| m.measure_zero_candidate) {
        return with(TheoryKind::ZeroMeasure, 0.0);
    }
    if q_l == n && !scenario.has_first_order() {
        // (4 pi)^{-n/2} int det(G)^{-1/2} dx over the chart, G = sum X_i X_i^T.
        let fields: Vec<_> = scenario
            .principal_fields()
            .iter()
            .map(|f| f.compile())
            .collect();
        let h = scenario.density.compile();
        let mut acc = 0.0;
        for p in &audit.points {
            let mut gm = nalgebra::DMatrix::<f64>::zeros(n, n);
            for f in &fields {
                let v = f.eval(&p.x);
                for i in 0..n {
                    for j in 0..n {
                        gm[(i, j)] += v[i] * v[j];
                    }
                }
            }
            let det = gm.determinant();
            if det > 0.0 {
                acc += p.weight / h.eval(&p.x) / det.sqrt();
            }
        }
        return with(
            TheoryKind::EllipticClosedForm,
            (4.0 * PI).powf(-(n as f64) / 2.0) * acc,
        );
    }
    if is_standard_heisenberg(scenario) && q_l == 4 {
        return with(
            TheoryKind::HeisenbergOracle,
            heisenberg_c0() * audit.total_mass,
        );
    }
    TheoryCoefficient {
        kind: TheoryKind::Unknown,
        integral_eps0: None,
        spectral_coeff: None,
        q_l,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KaramataReport {
    pub trace_exponent: f64,
    pub count_exponent: f64,
    /// |p_T - p_N| / p_N.
    pub exponent_gap: f64,
    pub trace_coefficient: f64,
    pub predicted_trace_coefficient: f64,
    /// |C_T - C_N Gamma(p+1)| / C_T, both refit at the count exponent.
    pub coefficient_gap: f64,
    pub exponent_tol: f64,
    pub coefficient_tol: f64,
    pub pass: bool,
}

/// Karamata relation between Tr ~ C_T t^{-p} and N ~ C_N lambda^p:
/// C_T = C_N Gamma(p+1). The trace fit is in u = t with exponent -p.
pub fn karamata_check(
    trace_fit: &PowerFit,
    count_fit: &PowerFit,
    exponent_tol: f64,
    coefficient_tol: f64,
) -> KaramataReport {
    let pn = count_fit.exponent;
    let pt = -trace_fit.exponent;
    let exponent_gap = (pt - pn).abs() / pn.abs().max(f64::MIN_POSITIVE);
    let ct = trace_fit.coefficient_at(-pn);
    let cn = count_fit.coefficient_at(pn);
    let pred = cn * gamma(pn + 1.0);
    let coefficient_gap = (ct - pred).abs() / ct;
    KaramataReport {
        trace_exponent: pt,
        count_exponent: pn,
        exponent_gap,
        trace_coefficient: ct,
        predicted_trace_coefficient: pred,
        coefficient_gap,
        exponent_tol,
        coefficient_tol,
        pass: exponent_gap <= exponent_tol && coefficient_gap <= coefficient_tol,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub scenario: String,
    pub checks: Vec<Check>,
    pub overall: bool,
    /// Error text when the pipeline stopped early.
    pub diagnostics: Vec<String>,
}

impl Verdict {
    pub fn new(scenario: &str) -> Self {
        Verdict {
            scenario: scenario.into(),
            checks: Vec::new(),
            overall: false,
            diagnostics: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        name: &str,
        expected: String,
        measured: f64,
        tolerance: f64,
        pass: bool,
    ) {
        self.checks.push(Check {
            name: name.into(),
            expected,
            measured,
            tolerance,
            pass,
        });
    }

    /// Overall = all checks pass and no diagnostics.
    pub fn finish(&mut self) {
        self.overall = !self.checks.is_empty()
            && self.diagnostics.is_empty()
            && self.checks.iter().all(|c| c.pass);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,expected,measured,tolerance,pass\n");
        for c in &self.checks {
            s.push_str(&format!(
                "{},\"{}\",{:.10e},{:.6e},{}\n",
                c.name, c.expected, c.measured, c.tolerance, c.pass
            ));
        }
        s
    }
}
