//! Monte-Carlo reachable sets for the control classes C2 (Euclidean norm of
//! the controls below delta) and Cinf (every control below delta).

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::ChartSpec;
use crate::asymptotics::linear_fit;
use crate::filtration::{Filtration, FiltrationError};
use crate::vfalgebra::{ChartCoeff, CompiledField, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BallError {
    #[error("empty cloud")]
    EmptyCloud,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Filtration(#[from] FiltrationError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassNorm {
    C2,
    Cinf,
}

/// Piecewise-constant controls: row k holds a_1..a_m on [k/K, (k+1)/K).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub controls: Vec<Vec<f64>>,
    pub class: ClassNorm,
}

impl ControlPath {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    /// Strict class constraint at every step.
    pub fn satisfies(&self, class: ClassNorm, delta: f64) -> bool {
        self.controls.iter().all(|a| match class {
            ClassNorm::C2 => a.iter().map(|v| v * v).sum::<f64>() < delta * delta,
            ClassNorm::Cinf => a.iter().all(|v| v.abs() < delta),
        })
    }

    pub fn scaled(&self, s: f64) -> ControlPath {
        ControlPath {
            controls: self
                .controls
                .iter()
                .map(|a| a.iter().map(|v| v * s).collect())
                .collect(),
            class: self.class,
        }
    }
}

/// How endpoints leaving the chart are handled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// No clipping (local chart).
    Plane,
    /// Wrap modulo the side lengths.
    Torus(Vec<f64>),
    /// Discard endpoints outside `[0, L_a]`.
    Box(Vec<f64>),
}

impl From<&ChartSpec> for Domain {
    fn from(c: &ChartSpec) -> Self {
        match c {
            ChartSpec::Torus { lengths } => Domain::Torus(lengths.clone()),
            ChartSpec::Box { lengths } => Domain::Box(lengths.clone()),
            // Balls are far smaller than the fundamental domain; the twist
            // never comes into play.
            ChartSpec::Nilmanifold3 => Domain::Plane,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub method: String,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleParams {
    pub n_paths: usize,
    /// RK4 steps per path.
    pub n_steps: usize,
    /// Control pieces per path.
    pub pieces: usize,
    pub seed: u64,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams {
            n_paths: 100_000,
            n_steps: 32,
            pieces: 2,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallCloud {
    pub center: Vec<f64>,
    pub delta: f64,
    pub class: ClassNorm,
    pub endpoints: Vec<Vec<f64>>,
    pub discarded: usize,
    pub seed: u64,
    pub integrator: Integrator,
}

impl BallCloud {
    pub fn to_csv(&self) -> String {
        let n = self.center.len();
        let mut s = (1..=n)
            .map(|i| format!("x{i}"))
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for p in &self.endpoints {
            s.push_str(
                &p.iter()
                    .map(|v| format!("{v:.12e}"))
                    .collect::<Vec<_>>()
                    .join(","),
            );
            s.push('\n');
        }
        s
    }
}

/// Controls for path `index`, drawn uniformly in the unit class ball per piece.
pub fn unit_controls(
    class: ClassNorm,
    m: usize,
    pieces: usize,
    seed: u64,
    index: u64,
) -> ControlPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let controls = (0..pieces)
        .map(|_| match class {
            ClassNorm::C2 => loop {
                let g: Vec<f64> = (0..m)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let r: f64 = rng.gen::<f64>().powf(1.0 / m as f64);
                if norm > 0.0 && r < 1.0 {
                    break g.iter().map(|v| v / norm * r).collect();
                }
            },
            ClassNorm::Cinf => (0..m)
                .map(|_| loop {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    if v > -1.0 {
                        break v;
                    }
                })
                .collect(),
        })
        .collect();
    ControlPath { controls, class }
}

/// Endpoint of c' = sum a_i X_i(c), c(0) = x, by RK4 with `n_steps` steps
/// spread over the control pieces.
pub fn integrate(
    x: &[f64],
    fields: &[CompiledField],
    path: &ControlPath,
    n_steps: usize,
) -> Vec<f64> {
    let n = x.len();
    let k = path.steps().max(1);
    let sub = (n_steps / k).max(1);
    let h = 1.0 / (k * sub) as f64;
    let mut c = x.to_vec();
    let mut buf = vec![0.0; n];
    let mut rhs = |p: &[f64], a: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (f, &ai) in fields.iter().zip(a) {
            if ai == 0.0 {
                continue;
            }
            f.eval_into(p, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += ai * b;
            }
        }
    };
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for a in &path.controls {
        for _ in 0..sub {
            rhs(&c, a, &mut k1);
            for i in 0..n {
                tmp[i] = c[i] + 0.5 * h * k1[i];
            }
            rhs(&tmp, a, &mut k2);
            for i in 0..n {
                tmp[i] = c[i] + 0.5 * h * k2[i];
            }
            rhs(&tmp, a, &mut k3);
            for i in 0..n {
                tmp[i] = c[i] + h * k3[i];
            }
            rhs(&tmp, a, &mut k4);
            for i in 0..n {
                c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    c
}

fn clip(p: &mut [f64], domain: &Domain) -> bool {
    match domain {
        Domain::Plane => true,
        Domain::Torus(l) => {
            for (v, &len) in p.iter_mut().zip(l) {
                *v = v.rem_euclid(len);
            }
            true
        }
        Domain::Box(l) => p.iter().zip(l).all(|(&v, &len)| v > 0.0 && v < len),
    }
}

/// Sample endpoints of class-`class` control paths of radius `delta` from `x`.
/// Paths at different radii share their unit control draws.
pub fn sample_ball(
    x: &[f64],
    delta: f64,
    fields: &[VectorField],
    class: ClassNorm,
    params: &SampleParams,
    domain: &Domain,
) -> Result<BallCloud, BallError> {
    if !(delta > 0.0) || params.n_paths == 0 || params.n_steps == 0 || params.pieces == 0 {
        return Err(BallError::Parameter(
            "delta, n_paths, n_steps and pieces must be positive".into(),
        ));
    }
    if fields.is_empty() || fields.iter().any(|f| f.dim() != x.len()) {
        return Err(BallError::Parameter(
            "field dimensions do not match the center".into(),
        ));
    }
    let compiled: Vec<CompiledField> = fields.iter().map(|f| f.compile()).collect();
    let m = fields.len();
    let pts: Vec<Option<Vec<f64>>> = (0..params.n_paths)
        .into_par_iter()
        .map(|i| {
            let path = unit_controls(class, m, params.pieces, params.seed, i as u64).scaled(delta);
            let mut e = integrate(x, &compiled, &path, params.n_steps);
            if clip(&mut e, domain) {
                Some(e)
            } else {
                None
            }
        })
        .collect();
    let discarded = pts.iter().filter(|p| p.is_none()).count();
    Ok(BallCloud {
        center: x.to_vec(),
        delta,
        class,
        endpoints: pts.into_iter().flatten().collect(),
        discarded,
        seed: params.seed,
        integrator: Integrator {
            method: "rk4".into(),
            steps: params.n_steps,
        },
    })
}

/// Occupied-bin volume with per-axis bin sizes; the mu-volume weights each
/// occupied bin by the density at its center.
pub fn ball_volume_bins(
    cloud: &BallCloud,
    bins: &[f64],
    density: Option<&ChartCoeff>,
) -> Result<(f64, f64), BallError> {
    if cloud.endpoints.is_empty() {
        return Err(BallError::EmptyCloud);
    }
    if bins.len() != cloud.center.len() || bins.iter().any(|&b| !(b > 0.0)) {
        return Err(BallError::Parameter(
            "bin sizes must be positive, one per axis".into(),
        ));
    }
    let occupied: HashSet<Vec<i64>> = cloud
        .endpoints
        .iter()
        .map(|p| {
            p.iter()
                .zip(bins)
                .map(|(v, b)| (v / b).floor() as i64)
                .collect()
        })
        .collect();
    let cell: f64 = bins.iter().product();
    let vol = occupied.len() as f64 * cell;
    let mu = match density {
        None => vol,
        Some(h) => {
            let f = h.compile();
            let mut keys: Vec<&Vec<i64>> = occupied.iter().collect();
            keys.sort();
            keys.iter()
                .map(|k| {
                    let c: Vec<f64> = k
                        .iter()
                        .zip(bins)
                        .map(|(&i, b)| (i as f64 + 0.5) * b)
                        .collect();
                    f.eval(&c) * cell
                })
                .sum()
        }
    };
    Ok((vol, mu))
}

/// Cubic bins of side `bin_size`.
pub fn ball_volume(
    cloud: &BallCloud,
    bin_size: f64,
    density: Option<&ChartCoeff>,
) -> Result<(f64, f64), BallError> {
    let bins = vec![bin_size; cloud.center.len()];
    ball_volume_bins(cloud, &bins, density)
}

/// Per-axis bins from the cloud's robust extent: the 0.5..99.5 percentile
/// range divided by `max(4, (paths/32)^(1/n))`.
pub fn adaptive_bins(cloud: &BallCloud) -> Result<Vec<f64>, BallError> {
    let m = cloud.endpoints.len();
    if m == 0 {
        return Err(BallError::EmptyCloud);
    }
    let n = cloud.center.len();
    let k = (m as f64 / 32.0).powf(1.0 / n as f64).max(4.0);
    (0..n)
        .map(|a| {
            let mut v: Vec<f64> = cloud.endpoints.iter().map(|p| p[a]).collect();
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let lo = v[((m - 1) as f64 * 0.005).round() as usize];
            let hi = v[((m - 1) as f64 * 0.995).round() as usize];
            let ext = hi - lo;
            if ext > 0.0 {
                Ok(ext / k)
            } else {
                Err(BallError::Parameter(format!(
                    "degenerate cloud along axis {a}"
                )))
            }
        })
        .collect()
}

/// Coordinate volume with adaptive bins, measured on torus endpoints taken
/// as the nearest image of the center.
fn local_volume(cloud: &BallCloud, domain: &Domain) -> Result<f64, BallError> {
    let local;
    let c = match domain {
        Domain::Torus(l) => {
            let mut u = cloud.clone();
            for e in &mut u.endpoints {
                for ((v, &len), &x) in e.iter_mut().zip(l).zip(&cloud.center) {
                    *v = x + (*v - x + 0.5 * len).rem_euclid(len) - 0.5 * len;
                }
            }
            local = u;
            &local
        }
        _ => cloud,
    };
    let bins = adaptive_bins(c)?;
    Ok(ball_volume_bins(c, &bins, None)?.0)
}

fn log_deltas(range: (f64, f64), samples: usize) -> Result<Vec<f64>, BallError> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi >= 2.0 * lo) || samples < 2 {
        return Err(BallError::Parameter(
            "delta range must span a doubling with at least two samples".into(),
        ));
    }
    Ok((0..samples)
        .map(|i| lo * (hi / lo).powf(i as f64 / (samples - 1) as f64))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub stderr: f64,
    /// 95% normal interval.
    pub ci: (f64, f64),
    pub deltas: Vec<f64>,
    pub volumes: Vec<f64>,
}

/// Slope of log volume against log delta.
pub fn doubling_exponent(
    x: &[f64],
    fields: &[VectorField],
    class: ClassNorm,
    delta_range: (f64, f64),
    samples: usize,
    params: &SampleParams,
    domain: &Domain,
) -> Result<ExponentFit, BallError> {
    let deltas = log_deltas(delta_range, samples)?;
    let mut volumes = Vec::with_capacity(deltas.len());
    for &d in &deltas {
        let cloud = sample_ball(x, d, fields, class, params, domain)?;
        volumes.push(local_volume(&cloud, domain)?);
    }
    let lx: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = volumes.iter().map(|v| v.ln()).collect();
    let f = linear_fit(&lx, &ly);
    Ok(ExponentFit {
        exponent: f.slope,
        stderr: f.slope_se,
        ci: (f.slope - 1.96 * f.slope_se, f.slope + 1.96 * f.slope_se),
        deltas,
        volumes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRatio {
    pub deltas: Vec<f64>,
    pub ratios: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Lambda(x, delta) over the C2 coordinate volume across a delta range;
/// Lambda uses brackets up to `depth`.
pub fn lambda_compare(
    x: &[f64],
    fields: &[VectorField],
    depth: usize,
    delta_range: (f64, f64),
    samples: usize,
    params: &SampleParams,
    domain: &Domain,
) -> Result<LambdaRatio, BallError> {
    let lp = Filtration::new(fields, depth.max(1))?.lambda_poly(x, depth)?;
    let deltas = log_deltas(delta_range, samples)?;
    let mut ratios = Vec::with_capacity(deltas.len());
    for &d in &deltas {
        let cloud = sample_ball(x, d, fields, ClassNorm::C2, params, domain)?;
        let v = local_volume(&cloud, domain)?;
        ratios.push(lp.eval(d) / v);
    }
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(LambdaRatio {
        deltas,
        ratios,
        min,
        max,
        mean,
    })
}
