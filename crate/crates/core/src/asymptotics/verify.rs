//! End-to-end verification of one scenario: audit, assembly, counting and
//! trace data, fits and checks.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    fit_power_law, gamma, karamata_check, linear_fit, theoretical_coefficient,
    upper_gamma_quantile, KaramataReport, PowerFit, TheoryCoefficient, TheoryKind, Verdict,
    WindowPolicy,
};
use crate::assembly::{assemble_operator, build_grid, ChartSpec, Grid, OperatorPencil, Scenario};
use crate::filtration::{hormander_audit, AuditDomain, AuditReport, SampleSpec};
use crate::spectral::trace::{eigsum_traces_ctx, heat_diag_ctx, stochastic_traces_ctx};
use crate::spectral::{
    CountRecord, DiagProbe, SpectralContext, TraceEstimate, TraceMethod, TraceOptions,
};
use crate::vfalgebra::TAU_CAP;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TraceChoice {
    #[default]
    Auto,
    Eigsum,
    Stochastic,
}

/// Largest dimension for which `auto` adds eigenvalue sums to the stochastic traces.
pub const EIGSUM_AUTO_DIM: usize = 20_000;
/// Eigenvalues `auto` is willing to compute for the eigenvalue sums.
pub const EIGSUM_BUDGET: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Absolute tolerance on the counting exponent against Q_L/2.
    pub count_exponent_tol: f64,
    /// Absolute tolerance on the trace exponent against Q_L/2.
    pub trace_exponent_tol: f64,
    /// Relative tolerance of the counting coefficient against theory.
    pub coefficient_rel: f64,
    pub karamata_exponent_rel: f64,
    pub karamata_coefficient_rel: f64,
    /// Exponent margin standing in for little-o statements.
    pub margin: f64,
    /// Max/min spread allowed in the uniform-bound probe.
    pub spread_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            count_exponent_tol: 0.05,
            trace_exponent_tol: 0.05,
            coefficient_rel: 0.10,
            karamata_exponent_rel: 0.05,
            karamata_coefficient_rel: 0.15,
            margin: 0.25,
            spread_factor: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    pub resolution: Vec<usize>,
    /// Vertex-grid counts per axis for the audit.
    pub audit_grid: Vec<usize>,
    pub count_samples: usize,
    pub trace_times: usize,
    pub probes: usize,
    pub seed: u64,
    pub diag_nodes: usize,
    pub diag_times: usize,
    pub trace_method: TraceChoice,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            resolution: vec![],
            audit_grid: vec![],
            count_samples: 12,
            trace_times: 16,
            probes: 64,
            seed: 1,
            diag_nodes: 16,
            diag_times: 8,
            trace_method: TraceChoice::Auto,
        }
    }
}

/// Everything a verification run produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub verdict: Verdict,
    pub audit: Option<AuditReport>,
    pub theory: Option<TheoryCoefficient>,
    pub counts: Vec<CountRecord>,
    pub count_window: Option<(f64, f64)>,
    pub count_fit: Option<PowerFit>,
    pub traces: Vec<TraceEstimate>,
    pub trace_fit: Option<PowerFit>,
    pub karamata: Option<KaramataReport>,
    pub diag: Vec<DiagProbe>,
    pub pencil_dim: usize,
    /// Informational remarks that do not affect the verdict.
    pub notes: Vec<String>,
    /// Wall-clock seconds per stage (not part of the verdict).
    pub timings: Vec<(String, f64)>,
}

/// Audit region for a chart: the fundamental domain with the scenario density.
pub fn audit_domain(scenario: &Scenario) -> AuditDomain {
    let n = scenario.dim();
    AuditDomain {
        origin: vec![0.0; n],
        lengths: scenario.chart.lengths(),
        density: scenario.density.clone(),
    }
}

pub fn run_audit(scenario: &Scenario, grid: &[usize], seed: u64) -> Result<AuditReport, String> {
    let n = scenario.dim();
    let g = if grid.is_empty() {
        vec![if n <= 2 { 64 } else { 24 }; n]
    } else {
        grid.to_vec()
    };
    let spec = SampleSpec {
        grid: g,
        random: 0,
        seed,
    };
    hormander_audit(
        &scenario.principal_fields(),
        &audit_domain(scenario),
        &spec,
        TAU_CAP,
    )
    .map_err(|e| e.to_string())
}

/// Resolution limit of the slowest direction: lambda <= (pi / h_max)^(2/tau_L).
pub fn nyquist_cap(grid: &Grid, tau_l: usize) -> f64 {
    (PI / grid.h_max()).powf(2.0 / tau_l.max(1) as f64)
}

struct CountSearch<'c, 'p> {
    ctx: &'c SpectralContext<'p>,
    seen: Vec<CountRecord>,
}

impl CountSearch<'_, '_> {
    fn eval(&mut self, l: f64) -> Result<usize, String> {
        if let Some(r) = self.seen.iter().find(|r| r.lambda == l) {
            return Ok(r.count);
        }
        let r = self.ctx.count(l).map_err(|e| e.to_string())?;
        self.seen.push(r);
        Ok(r.count)
    }

    /// lambda with count in [lo_ok, hi_ok], by log-log secant steps inside a bracket.
    fn find(
        &mut self,
        aim: f64,
        lo_ok: f64,
        hi_ok: f64,
        start: f64,
        p: f64,
    ) -> Result<f64, String> {
        let mut l = start.max(1e-12);
        let mut below: Option<(f64, f64)> = None;
        let mut above: Option<(f64, f64)> = None;
        for _ in 0..40 {
            let c = self.eval(l)? as f64;
            if c >= lo_ok && c <= hi_ok {
                return Ok(l);
            }
            if c < lo_ok {
                below = Some((l, c));
            } else {
                above = Some((l, c));
            }
            l = match (below, above) {
                (Some((a, ca)), Some((b, cb))) => {
                    if ca > 0.0 {
                        let s = (cb.ln() - ca.ln()) / (b.ln() - a.ln());
                        let t = a * (aim / ca).powf(1.0 / s.max(1e-3));
                        if t > a && t < b {
                            t
                        } else {
                            (a * b).sqrt()
                        }
                    } else {
                        (a * b).sqrt()
                    }
                }
                (Some((a, ca)), None) => {
                    if ca > 0.0 {
                        a * (aim / ca).powf(1.0 / p).clamp(1.05, 16.0)
                    } else {
                        a * 4.0
                    }
                }
                (None, Some((b, cb))) => b * (aim / cb).powf(1.0 / p).clamp(1.0 / 16.0, 0.95),
                (None, None) => unreachable!(),
            };
        }
        Err(format!("no shift with count in [{lo_ok}, {hi_ok}]"))
    }
}

/// Counts over the counting window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountStudy {
    pub records: Vec<CountRecord>,
    pub window: (f64, f64),
}

/// Locate the counting window (30 <= N <= 0.05 dim, lambda below the
/// resolution cap) and sample `samples` geometric points across it.
/// `coeff` seeds the search with a predicted C_N when known.
pub fn count_study(
    ctx: &SpectralContext<'_>,
    grid: &Grid,
    p: f64,
    tau_l: usize,
    coeff: Option<f64>,
    samples: usize,
) -> Result<CountStudy, String> {
    let dim = ctx.pencil.dim();
    let cap = nyquist_cap(grid, tau_l);
    let top = 0.05 * dim as f64;
    let mut search = CountSearch {
        ctx,
        seen: Vec::new(),
    };
    let start = coeff
        .filter(|c| *c > 0.0)
        .map(|c| (top * 0.5 / c).powf(1.0 / p))
        .unwrap_or(1.0);
    let cap_count = search.eval(cap)? as f64;
    let lam_hi = if cap_count <= top {
        cap
    } else {
        search.find(0.95 * top, 0.8 * top, top, start.min(cap), p)?
    };
    let n_hi = search.eval(lam_hi)? as f64;
    if n_hi < 60.0 {
        return Err(format!("counting window empty: N({lam_hi:.4}) = {n_hi}"));
    }
    let lam_lo = search.find(36.0, 30.0, 45.0, lam_hi * (36.0 / n_hi).powf(1.0 / p), p)?;
    for l in geometric(lam_lo, lam_hi, samples) {
        search.eval(l)?;
    }
    let mut records = search.seen;
    records.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    Ok(CountStudy {
        records,
        window: (lam_lo, lam_hi),
    })
}

/// Trace window `[x_p / lambda_hi, 1.2 t_10]` (t_10: predicted Tr = 10 from
/// the count fit) and `k` geometric times in it.
pub fn trace_times(
    count_fit: &PowerFit,
    p: f64,
    lam_hi: f64,
    k: usize,
) -> Result<(f64, Vec<f64>), String> {
    let t_lo = upper_gamma_quantile(p + 1.0, 0.05) / lam_hi;
    let c_t = count_fit.coefficient_at(p) * gamma(p + 1.0);
    let t_top = 1.2 * (c_t / 10.0).powf(1.0 / p);
    if !(t_top > t_lo) {
        return Err(format!(
            "trace window empty: t_lo {t_lo:.4e} >= t_top {t_top:.4e}"
        ));
    }
    Ok((t_lo, geometric(t_lo, t_top, k)))
}

/// Heat traces at `ts` by the chosen method. `auto` runs the stochastic
/// estimator everywhere and adds eigenvalue sums at the times whose cut fits
/// the eigenvalue budget; the second value is then the worst
/// |eigsum - stochastic| / (3 stderr + tail) over the shared times.
pub fn trace_curve(
    ctx: &SpectralContext<'_>,
    ts: &[f64],
    count_fit: Option<&PowerFit>,
    p: f64,
    opt: &VerifyOptions,
    notes: &mut Vec<String>,
) -> Result<(Vec<TraceEstimate>, Option<f64>), String> {
    let topts = TraceOptions {
        probes: opt.probes,
        seed: opt.seed,
        ..TraceOptions::default()
    };
    let err = |e: crate::spectral::SpectralError| e.to_string();
    match opt.trace_method {
        TraceChoice::Eigsum => Ok((eigsum_traces_ctx(ctx, ts, &topts).map_err(err)?, None)),
        TraceChoice::Stochastic => Ok((stochastic_traces_ctx(ctx, ts, &topts).map_err(err)?, None)),
        TraceChoice::Auto => {
            let mut all = stochastic_traces_ctx(ctx, ts, &topts).map_err(err)?;
            let Some(count_fit) = count_fit else {
                notes.push("eigsum trace skipped: no counting fit".into());
                return Ok((all, None));
            };
            let lam_b = (EIGSUM_BUDGET as f64 / count_fit.coefficient_at(p)).powf(1.0 / p);
            let large: Vec<f64> = ts.iter().cloned().filter(|&t| 7.0 / t <= lam_b).collect();
            if ctx.pencil.dim() > EIGSUM_AUTO_DIM || large.len() < 3 {
                return Ok((all, None));
            }
            match eigsum_traces_ctx(ctx, &large, &topts) {
                Ok(es) => {
                    let worst = es
                        .iter()
                        .map(|e| {
                            let s = all.iter().find(|s| s.t == e.t).expect("shared time");
                            (e.value - s.value).abs() / (3.0 * s.stderr + e.tail_bound)
                        })
                        .fold(0.0, f64::max);
                    all.extend(es);
                    Ok((all, Some(worst)))
                }
                Err(e) => {
                    notes.push(format!("eigsum trace skipped: {e}"));
                    Ok((all, None))
                }
            }
        }
    }
}

/// One value per time, the eigenvalue sum where both methods ran.
pub fn preferred_traces(ts: &[f64], traces: &[TraceEstimate]) -> Vec<(f64, f64)> {
    ts.iter()
        .filter_map(|&t| {
            let at: Vec<&TraceEstimate> = traces.iter().filter(|e| e.t == t).collect();
            at.iter()
                .find(|e| e.method == TraceMethod::Eigsum)
                .or(at.first())
                .map(|e| (t, e.value))
        })
        .collect()
}

fn geometric(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k <= 1 {
        return vec![lo];
    }
    (0..k)
        .map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64))
        .collect()
}

/// Probe nodes: even slots on the first x-plane (where Grushin-type
/// degenerations sit), odd slots uniformly random.
pub fn probe_nodes(grid: &Grid, count: usize, seed: u64) -> Vec<usize> {
    let dims = grid.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1a6);
    let mut out = Vec::with_capacity(count);
    // Dirichlet kernels vanish at the wall; box probes stay in the middle half.
    let boxed = matches!(grid.chart(), ChartSpec::Box { .. });
    while out.len() < count {
        let i = out.len();
        let mut c: Vec<usize> = if boxed {
            dims.iter()
                .map(|&d| rng.gen_range(d / 4..(3 * d / 4).max(d / 4 + 1)))
                .collect()
        } else {
            dims.iter().map(|&d| rng.gen_range(0..d)).collect()
        };
        if i % 2 == 0 && !boxed {
            c[0] = 0;
        }
        let idx = grid.index(&c);
        if !out.contains(&idx) || out.len() >= grid.n_nodes() {
            out.push(idx);
        }
    }
    out
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Audit, assemble, count, trace, probe and check one scenario.
pub fn verify(
    scenario: &Scenario,
    thresholds: &Thresholds,
    options: &VerifyOptions,
) -> VerifyOutcome {
    let mut out = VerifyOutcome {
        verdict: Verdict::new(&scenario.id),
        audit: None,
        theory: None,
        counts: Vec::new(),
        count_window: None,
        count_fit: None,
        traces: Vec::new(),
        trace_fit: None,
        karamata: None,
        diag: Vec::new(),
        pencil_dim: 0,
        notes: Vec::new(),
        timings: Vec::new(),
    };
    if let Err(e) = verify_into(scenario, thresholds, options, &mut out) {
        out.verdict.diagnostics.push(e);
    }
    out.verdict.finish();
    out
}

fn verify_into(
    scenario: &Scenario,
    th: &Thresholds,
    opt: &VerifyOptions,
    out: &mut VerifyOutcome,
) -> Result<(), String> {
    let t0 = Instant::now();
    let audit = run_audit(scenario, &opt.audit_grid, opt.seed)?;
    out.timings.push(("audit".into(), elapsed(t0)));
    if !audit.failures.is_empty() {
        out.audit = Some(audit);
        return Err("Hormander condition fails at sampled points".into());
    }
    let theory = theoretical_coefficient(scenario, &audit);
    let q_l = audit.q_l;
    let tau_l = audit.tau_l;
    let p_theory = q_l as f64 / 2.0;
    out.audit = Some(audit);
    out.theory = Some(theory.clone());

    let t0 = Instant::now();
    let grid = build_grid(scenario.chart.clone(), &opt.resolution).map_err(|e| e.to_string())?;
    let pencil: OperatorPencil = assemble_operator(scenario, &grid).map_err(|e| e.to_string())?;
    out.pencil_dim = pencil.dim();
    out.timings.push(("assemble".into(), elapsed(t0)));
    if !pencil.symmetric {
        return Err(
            "pencil is not symmetric; large-scale counting needs a symmetric pencil".into(),
        );
    }
    let ctx = SpectralContext::new(&pencil).map_err(|e| e.to_string())?;
    let dim = pencil.dim();

    let t0 = Instant::now();
    let study = count_study(
        &ctx,
        &grid,
        p_theory,
        tau_l,
        theory.spectral_coeff,
        opt.count_samples,
    )?;
    let (counts, (lam_lo, lam_hi)) = (study.records, study.window);
    out.counts = counts.clone();
    out.count_window = Some((lam_lo, lam_hi));
    out.timings.push(("count".into(), elapsed(t0)));
    let samples: Vec<(f64, f64)> = counts.iter().map(|r| (r.lambda, r.count as f64)).collect();
    let policy = WindowPolicy::Counting {
        dim,
        lambda_cap: Some(lam_hi),
    };
    let count_fit = fit_power_law(&samples, &policy).map_err(|e| format!("count fit: {e}"))?;
    out.count_fit = Some(count_fit.clone());

    let t0 = Instant::now();
    let (t_lo, ts) = trace_times(&count_fit, p_theory, lam_hi, opt.trace_times)?;
    let (traces, agreement) =
        trace_curve(&ctx, &ts, Some(&count_fit), p_theory, opt, &mut out.notes)?;
    out.traces = traces.clone();
    out.timings.push(("trace".into(), elapsed(t0)));
    let tsamples = preferred_traces(&ts, &traces);
    let trace_fit = fit_power_law(&tsamples, &WindowPolicy::Trace { t_lo })
        .map_err(|e| format!("trace fit: {e}"))?;
    out.trace_fit = Some(trace_fit.clone());
    let trace_exp = -trace_fit.exponent;

    // Uniform-bound probe over window times.
    let t0 = Instant::now();
    let nodes = probe_nodes(&grid, opt.diag_nodes, opt.seed);
    let dts = geometric(trace_fit.window.0, trace_fit.window.1, opt.diag_times);
    let diag = heat_diag_ctx(&ctx, &dts, &nodes).map_err(|e| e.to_string())?;
    out.diag = diag.clone();
    out.timings.push(("diag".into(), elapsed(t0)));
    let scaled: Vec<f64> = diag.iter().map(|d| d.t.powf(p_theory) * d.value).collect();
    let per_t: Vec<f64> = dts
        .iter()
        .map(|&t| {
            diag.iter()
                .zip(&scaled)
                .filter(|(d, _)| d.t == t)
                .map(|(_, s)| *s)
                .fold(0.0, f64::max)
        })
        .collect();

    let v = &mut out.verdict;
    if let Some(worst) = agreement {
        v.push(
            "trace_estimators_agree",
            "<= 1".into(),
            worst,
            1.0,
            worst <= 1.0,
        );
    }
    let zero = theory.kind == TheoryKind::ZeroMeasure;
    if !zero {
        v.push(
            "count_exponent",
            format!("{p_theory}"),
            count_fit.exponent,
            th.count_exponent_tol,
            (count_fit.exponent - p_theory).abs() <= th.count_exponent_tol,
        );
        v.push(
            "trace_exponent",
            format!("{p_theory}"),
            trace_exp,
            th.trace_exponent_tol,
            (trace_exp - p_theory).abs() <= th.trace_exponent_tol,
        );
        if let Some(c) = theory.spectral_coeff {
            let measured = count_fit.coefficient_at(p_theory);
            v.push(
                "count_coefficient",
                format!("{c:.6e}"),
                measured,
                th.coefficient_rel,
                (measured - c).abs() <= th.coefficient_rel * c,
            );
        }
        let k = karamata_check(
            &trace_fit,
            &count_fit,
            th.karamata_exponent_rel,
            th.karamata_coefficient_rel,
        );
        v.push(
            "karamata_exponent",
            "0".into(),
            k.exponent_gap,
            th.karamata_exponent_rel,
            k.exponent_gap <= th.karamata_exponent_rel,
        );
        v.push(
            "karamata_coefficient",
            "0".into(),
            k.coefficient_gap,
            th.karamata_coefficient_rel,
            k.coefficient_gap <= th.karamata_coefficient_rel,
        );
        out.karamata = Some(k);
        let max = scaled.iter().cloned().fold(0.0, f64::max);
        let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = max / min;
        v.push(
            "uniform_bound_spread",
            format!("<= {}", th.spread_factor),
            spread,
            th.spread_factor,
            max.is_finite() && min > 0.0 && spread <= th.spread_factor,
        );
    } else {
        let bound = p_theory - th.margin;
        v.push(
            "trace_exponent_below",
            format!("<= {bound}"),
            trace_exp,
            th.margin,
            trace_exp <= bound,
        );
        // Growth of the node-wise max as t decreases: slope of log M against log t.
        let lx: Vec<f64> = dts.iter().map(|t| t.ln()).collect();
        let ly: Vec<f64> = per_t.iter().map(|m| m.ln()).collect();
        let slope = linear_fit(&lx, &ly).slope;
        v.push(
            "uniform_bound_trend",
            format!(">= {}", -th.margin),
            slope,
            th.margin,
            slope.is_finite() && slope >= -th.margin,
        );
    }
    Ok(())
}
