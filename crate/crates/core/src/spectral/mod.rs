//! Spectral engine for symmetric pencils (S, W), W diagonal positive.
//!
//! Everything works with the congruent matrix `H = W^{-1/2} S W^{-1/2}`,
//! whose spectrum is that of the pencil.

pub mod lanczos;
pub mod ldlt;
pub mod oracle;
pub mod ordering;
pub mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::OperatorPencil;
use crate::sparse::CsrMatrix;
use ldlt::{Inertia, LdltFactor, LdltPlan};

pub use lanczos::{eigs_in_interval, lowest_eigs};
pub use oracle::{dense_oracle, DenseSpectrum, DENSE_CAP};
pub use trace::{
    heat_diag, heat_trace, stochastic_traces, DiagProbe, TraceEstimate, TraceMethod, TraceOptions,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("pencil is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("factorization of S - {lambda} W broke down after perturbation and jitter")]
    Breakdown { lambda: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("dimension {dim} exceeds dense cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("stochastic trace needs at least 8 probes, got {0}")]
    TooFewProbes(usize),
    #[error("tail of the eigenvalue sum at t = {t} not certified (half-width {half_width:e}, value {value:e})")]
    TailUncertified { t: f64, half_width: f64, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Lowest generalized eigenvalues with residuals `|S v - lambda W v| / |W v|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub k: usize,
    pub method: String,
}

impl Spectrum {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda\n");
        for l in &self.eigenvalues {
            s.push_str(&format!("{:.17e}\n", l));
        }
        s
    }
}

/// One inertia count, with the shift actually factored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub lambda: f64,
    pub shift_used: f64,
    pub count: usize,
    pub perturbed: bool,
    pub jittered: bool,
}

/// Residual tolerance relative to the Gershgorin bound of `H`.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// A symmetric pencil with its symbolic factorization and scale data.
pub struct SpectralContext<'a> {
    pub pencil: &'a OperatorPencil,
    plan: LdltPlan,
    /// Gershgorin bound on |H|.
    pub scale: f64,
    /// Gershgorin lower bound on the spectrum.
    pub lower: f64,
    winv_sqrt: Vec<f64>,
}

impl<'a> SpectralContext<'a> {
    pub fn new(pencil: &'a OperatorPencil) -> Result<Self, SpectralError> {
        if !pencil.symmetric {
            return Err(SpectralError::NotSymmetric(pencil.asymmetry));
        }
        let n = pencil.dim();
        let winv_sqrt: Vec<f64> = pencil.w.iter().map(|w| 1.0 / w.sqrt()).collect();
        let mut scale = 0.0f64;
        let mut lower = f64::INFINITY;
        for i in 0..n {
            let (cols, vals) = pencil.s.row(i);
            let mut diag = 0.0;
            let mut off = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                let h = v * winv_sqrt[i] * winv_sqrt[j];
                if j == i {
                    diag += h;
                } else {
                    off += h.abs();
                }
            }
            scale = scale.max(diag.abs() + off);
            lower = lower.min(diag - off);
        }
        if n == 0 {
            lower = 0.0;
        }
        let plan = LdltPlan::new(&pencil.s, pencil.lattice.as_deref());
        Ok(SpectralContext {
            pencil,
            plan,
            scale: scale.max(f64::MIN_POSITIVE),
            lower,
            winv_sqrt,
        })
    }

    pub fn dim(&self) -> usize {
        self.pencil.dim()
    }

    pub fn plan(&self) -> &LdltPlan {
        &self.plan
    }

    fn jitter(&self, lambda: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(lambda.to_bits() ^ 0x9e37_79b9_7f4a_7c15);
        let amp = 1e-12 * self.scale;
        self.pencil
            .w
            .iter()
            .map(|w| amp * w * rng.gen_range(-1.0..1.0))
            .collect()
    }

    fn retry<T>(
        &self,
        lambda: f64,
        mut f: impl FnMut(f64, Option<&[f64]>) -> Result<T, ldlt::Breakdown>,
    ) -> Result<(T, f64, bool, bool), SpectralError> {
        if let Ok(v) = f(lambda, None) {
            return Ok((v, lambda, false, false));
        }
        let bumped = if lambda == 0.0 {
            1e-9 * self.scale
        } else {
            lambda * (1.0 + 1e-9)
        };
        if let Ok(v) = f(bumped, None) {
            return Ok((v, bumped, true, false));
        }
        let j = self.jitter(bumped);
        match f(bumped, Some(&j)) {
            Ok(v) => Ok((v, bumped, true, true)),
            Err(_) => Err(SpectralError::Breakdown { lambda }),
        }
    }

    /// Inertia of `S - lambda W`, with the tie and breakdown retries.
    pub fn count(&self, lambda: f64) -> Result<CountRecord, SpectralError> {
        let p = self.pencil;
        let (inr, used, perturbed, jittered): (Inertia, _, _, _) =
            self.retry(lambda, |l, j| self.plan.inertia(&p.s, &p.w, l, j))?;
        Ok(CountRecord {
            lambda,
            shift_used: used,
            count: inr.negative,
            perturbed,
            jittered,
        })
    }

    pub fn count_below(&self, lambda: f64) -> Result<usize, SpectralError> {
        Ok(self.count(lambda)?.count)
    }

    /// Counts at many shifts, evaluated in parallel.
    pub fn counts(&self, lambdas: &[f64]) -> Result<Vec<CountRecord>, SpectralError> {
        use rayon::prelude::*;
        lambdas.par_iter().map(|&l| self.count(l)).collect()
    }

    /// Factor `S - sigma W` for solves; returns the shift actually used.
    pub fn factor_shift(&self, sigma: f64) -> Result<(LdltFactor, f64), SpectralError> {
        let p = self.pencil;
        let (f, used, _, _) = self.retry(sigma, |l, j| self.plan.factorize(&p.s, &p.w, l, j))?;
        Ok((f, used))
    }

    /// y = H x.
    pub fn apply_h(&self, x: &[f64], y: &mut [f64]) {
        let s = &self.pencil.s;
        for i in 0..s.nrows() {
            let (cols, vals) = s.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * self.winv_sqrt[j] * x[j];
            }
            y[i] = acc * self.winv_sqrt[i];
        }
    }

    pub fn winv_sqrt(&self) -> &[f64] {
        &self.winv_sqrt
    }
}

/// Number of generalized eigenvalues of the pencil not above `lambda`.
pub fn count_below(pencil: &OperatorPencil, lambda: f64) -> Result<usize, SpectralError> {
    SpectralContext::new(pencil)?.count_below(lambda)
}

/// Dense H for oracle use.
pub(crate) fn dense_h(s: &CsrMatrix, w: &[f64]) -> nalgebra::DMatrix<f64> {
    let n = w.len();
    let mut h = nalgebra::DMatrix::zeros(n, n);
    for (i, j, v) in s.triplets() {
        h[(i, j)] = v / (w[i] * w[j]).sqrt();
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_counts() {
        let s = CsrMatrix::diag(&[1.0, 2.0, 3.0]);
        let p = OperatorPencil::from_parts(s, vec![1.0; 3]);
        assert_eq!(count_below(&p, 2.5).unwrap(), 2);
        assert_eq!(count_below(&p, 0.5).unwrap(), 0);
        let rec = SpectralContext::new(&p).unwrap().count(2.0).unwrap();
        assert!(rec.perturbed);
        assert_eq!(rec.count, 2);
    }
}
