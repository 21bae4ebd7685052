//! Heat traces (eigenvalue sums with certified tails, stochastic Lanczos
//! quadrature) and heat-kernel diagonal probes.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lanczos::eigs_in_interval_ctx;
use super::{SpectralContext, SpectralError};
use crate::assembly::OperatorPencil;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMethod {
    Eigsum,
    Stochastic,
}

impl TraceMethod {
    pub fn name(self) -> &'static str {
        match self {
            TraceMethod::Eigsum => "eigsum",
            TraceMethod::Stochastic => "stochastic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub t: f64,
    pub value: f64,
    /// Standard error over probes (stochastic) or 0.
    pub stderr: f64,
    /// Half-width of the certified tail enclosure (eigsum) or 0.
    pub tail_bound: f64,
    pub method: TraceMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagProbe {
    pub node: usize,
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub probes: usize,
    pub seed: u64,
    /// Stop the quadrature once the values move by less than this.
    pub rel_tol: f64,
    pub max_depth: usize,
    /// Required tail half-width relative to the eigsum value.
    pub tail_tol: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            probes: 64,
            seed: 1,
            rel_tol: 1e-3,
            max_depth: 600,
            tail_tol: 0.01,
        }
    }
}

const LADDER_RATIO: f64 = 1.15;

/// e1^T f(T) e1 for every t, with f = exp(-t .), from the tridiagonal
/// coefficients.
fn gauss_quadrature(alpha: &[f64], beta: &[f64], ts: &[f64]) -> Vec<f64> {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let first: Vec<f64> = (0..m).map(|k| eig.eigenvectors[(0, k)].powi(2)).collect();
    ts.iter()
        .map(|&tt| {
            first
                .iter()
                .zip(eig.eigenvalues.iter())
                .map(|(w, th)| w * (-tt * th).exp())
                .sum()
        })
        .collect()
}

/// Lanczos quadrature of `v^T exp(-t H) v / |v|^2` at all `ts`.
fn lanczos_quadrature(
    ctx: &SpectralContext,
    start: &[f64],
    ts: &[f64],
    rel_tol: f64,
    max_depth: usize,
) -> Result<Vec<f64>, SpectralError> {
    let n = start.len();
    let nv = start.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut q: Vec<f64> = start.iter().map(|x| x / nv).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut prev: Option<Vec<f64>> = None;
    let mut settled = 0;
    let depth = max_depth.min(n);
    for step in 0..depth {
        ctx.apply_h(&q, &mut w);
        let a: f64 = q.iter().zip(&w).map(|(x, y)| x * y).sum();
        alpha.push(a);
        basis.push(q.clone());
        // Full reorthogonalization (two passes).
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = b.iter().zip(&w).map(|(x, y)| x * y).sum();
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let bn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let invariant = bn <= 1e-12 * ctx.scale;
        let check = invariant || step + 1 == depth || step % 2 == 1;
        if check {
            let vals = gauss_quadrature(&alpha, &beta, ts);
            if invariant {
                return Ok(vals);
            }
            if let Some(p) = &prev {
                let conv = vals
                    .iter()
                    .zip(p)
                    .all(|(v, o)| (v - o).abs() <= rel_tol * v.abs());
                settled = if conv { settled + 1 } else { 0 };
                if settled >= 2 {
                    return Ok(vals);
                }
            }
            if step + 1 == depth {
                if depth == n {
                    return Ok(vals);
                }
                return Err(SpectralError::NoConvergence(format!(
                    "Lanczos quadrature: depth {depth} reached"
                )));
            }
            prev = Some(vals);
        }
        beta.push(bn);
        for (qi, wi) in q.iter_mut().zip(&w) {
            *qi = wi / bn;
        }
    }
    Err(SpectralError::NoConvergence(
        "Lanczos quadrature: empty".into(),
    ))
}

/// Hutchinson estimates with Rademacher probes, one Lanczos run per probe
/// serving all times.
pub fn stochastic_traces_ctx(
    ctx: &SpectralContext,
    ts: &[f64],
    opts: &TraceOptions,
) -> Result<Vec<TraceEstimate>, SpectralError> {
    if opts.probes < 8 {
        return Err(SpectralError::TooFewProbes(opts.probes));
    }
    if ts.iter().any(|&t| !(t > 0.0)) {
        return Err(SpectralError::InvalidArgument(
            "trace times must be positive".into(),
        ));
    }
    let n = ctx.dim();
    let per_probe: Vec<Vec<f64>> = (0..opts.probes)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(p as u64);
            let z: Vec<f64> = (0..n)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            lanczos_quadrature(ctx, &z, ts, opts.rel_tol, opts.max_depth)
                .map(|v| v.into_iter().map(|x| x * n as f64).collect())
        })
        .collect::<Result<_, _>>()?;
    let pn = opts.probes as f64;
    Ok(ts
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mean = per_probe.iter().map(|v| v[k]).sum::<f64>() / pn;
            let var = per_probe.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (pn - 1.0);
            TraceEstimate {
                t,
                value: mean,
                stderr: (var / pn).sqrt(),
                tail_bound: 0.0,
                method: TraceMethod::Stochastic,
            }
        })
        .collect())
}

pub fn stochastic_traces(
    pencil: &OperatorPencil,
    ts: &[f64],
    opts: &TraceOptions,
) -> Result<Vec<TraceEstimate>, SpectralError> {
    stochastic_traces_ctx(&SpectralContext::new(pencil)?, ts, opts)
}

/// Eigenvalue sums with a tail enclosed by inertia counts on a geometric
/// ladder above the cut. Value is the midpoint of the enclosure.
pub fn eigsum_traces_ctx(
    ctx: &SpectralContext,
    ts: &[f64],
    opts: &TraceOptions,
) -> Result<Vec<TraceEstimate>, SpectralError> {
    if ts.is_empty() {
        return Ok(Vec::new());
    }
    if ts.iter().any(|&t| !(t > 0.0)) {
        return Err(SpectralError::InvalidArgument(
            "trace times must be positive".into(),
        ));
    }
    let n = ctx.dim();
    let tmin = ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let bottom = ctx.lower - 1e-9 * ctx.scale - 1e-300;
    let top = ctx.lower.max(0.0) + ctx.scale * (1.0 + 1e-9) + 1e-300;
    let mut eigs: Vec<f64> = Vec::new();
    let mut lo_edge = bottom;
    // First cut: where exp(-t_min * cut) is 1e-3 above the bottom.
    let mut cut = (ctx.lower.max(0.0) + 7.0 / tmin).min(top);
    loop {
        let sp = eigs_in_interval_ctx(ctx, lo_edge, cut, opts.seed)?;
        eigs.extend(sp.eigenvalues);
        lo_edge = cut;
        let ncut = ctx.count(cut)?.count;
        // Ladder from the cut to the top, stopped once the remainder is negligible.
        let mut rungs = vec![(cut, ncut)];
        let mut mu = cut;
        let mut ncur = ncut;
        while ncur < n {
            let rest = (n - ncur) as f64 * (-tmin * mu).exp();
            if rest <= 1e-6 * opts.tail_tol * eigs.len().max(1) as f64 * (-tmin * cut).exp()
                && rest < 1e-12 * n as f64
            {
                break;
            }
            let step = (mu.abs() * (LADDER_RATIO - 1.0)).max(0.05 / tmin);
            mu = (mu + step).min(top);
            ncur = if mu >= top { n } else { ctx.count(mu)?.count };
            rungs.push((mu, ncur));
        }
        let mut out = Vec::with_capacity(ts.len());
        let mut ok = true;
        for &t in ts {
            let head: f64 = eigs.iter().map(|l| (-t * l).exp()).sum();
            let mut lo = 0.0;
            let mut hi = 0.0;
            for w in rungs.windows(2) {
                let dn = (w[1].1 - w[0].1) as f64;
                lo += dn * (-t * w[1].0).exp();
                hi += dn * (-t * w[0].0).exp();
            }
            let (last_mu, last_n) = *rungs.last().unwrap();
            hi += (n - last_n) as f64 * (-t * last_mu).exp();
            let value = head + 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            if half > opts.tail_tol * value {
                ok = false;
            }
            out.push(TraceEstimate {
                t,
                value,
                stderr: 0.0,
                tail_bound: half,
                method: TraceMethod::Eigsum,
            });
        }
        if ok {
            return Ok(out);
        }
        let next = (cut + (cut - ctx.lower.max(0.0)).max(1.0 / tmin)).min(top);
        if ncut >= n / 2 || next <= cut {
            let worst = out
                .iter()
                .max_by(|a, b| {
                    (a.tail_bound / a.value)
                        .partial_cmp(&(b.tail_bound / b.value))
                        .unwrap()
                })
                .unwrap();
            return Err(SpectralError::TailUncertified {
                t: worst.t,
                half_width: worst.tail_bound,
                value: worst.value,
            });
        }
        cut = next;
    }
}

pub fn eigsum_traces(
    pencil: &OperatorPencil,
    ts: &[f64],
    opts: &TraceOptions,
) -> Result<Vec<TraceEstimate>, SpectralError> {
    eigsum_traces_ctx(&SpectralContext::new(pencil)?, ts, opts)
}

/// Tr exp(-t pencil) by the requested method.
pub fn heat_trace(
    pencil: &OperatorPencil,
    t: f64,
    method: TraceMethod,
) -> Result<TraceEstimate, SpectralError> {
    let opts = TraceOptions::default();
    let v = match method {
        TraceMethod::Eigsum => eigsum_traces(pencil, &[t], &opts)?,
        TraceMethod::Stochastic => stochastic_traces(pencil, &[t], &opts)?,
    };
    Ok(v.into_iter().next().unwrap())
}

/// Relative tolerance for diagonal probes.
pub const DIAG_TOL: f64 = 1e-8;

/// mu-normalized heat-kernel diagonal `(exp(-tH))_{xx} / w_x` at every
/// node and time.
pub fn heat_diag_ctx(
    ctx: &SpectralContext,
    ts: &[f64],
    nodes: &[usize],
) -> Result<Vec<DiagProbe>, SpectralError> {
    let n = ctx.dim();
    if let Some(&bad) = nodes.iter().find(|&&x| x >= n) {
        return Err(SpectralError::InvalidArgument(format!(
            "node {bad} out of range"
        )));
    }
    let per: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&x| {
            let mut e = vec![0.0; n];
            e[x] = 1.0;
            lanczos_quadrature(ctx, &e, ts, DIAG_TOL, n.min(2000))
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (&x, vals) in nodes.iter().zip(&per) {
        for (&t, v) in ts.iter().zip(vals) {
            out.push(DiagProbe {
                node: x,
                t,
                value: v / ctx.pencil.w[x],
            });
        }
    }
    Ok(out)
}

pub fn heat_diag(
    pencil: &OperatorPencil,
    t: f64,
    nodes: &[usize],
) -> Result<Vec<DiagProbe>, SpectralError> {
    heat_diag_ctx(&SpectralContext::new(pencil)?, &[t], nodes)
}

pub fn traces_to_csv(v: &[TraceEstimate]) -> String {
    let mut s = String::from("t,value,stderr,method\n");
    for e in v {
        s.push_str(&format!(
            "{:.10e},{:.12e},{:.6e},{}\n",
            e.t,
            e.value,
            e.stderr.max(e.tail_bound),
            e.method.name()
        ));
    }
    s
}
