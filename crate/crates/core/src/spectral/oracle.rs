//! Dense brute-force oracle for small pencils.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{dense_h, SpectralError, Spectrum};
use crate::assembly::OperatorPencil;

pub const DENSE_CAP: usize = 4096;

#[derive(Clone, Debug)]
pub struct DenseSpectrum {
    /// Ascending real eigenvalues (symmetric pencils) or real parts sorted by
    /// (re, im) for general pencils.
    pub eigenvalues: Vec<f64>,
    /// Complex eigenvalues `(re, im)` for non-symmetric pencils.
    pub complex: Option<Vec<(f64, f64)>>,
    /// Orthonormal eigenvectors of `H`, columns matching `eigenvalues`.
    pub vectors: Option<DMatrix<f64>>,
    w: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleSummary {
    pub dim: usize,
    pub symmetric: bool,
}

/// Full eigendecomposition of a pencil with at most `DENSE_CAP` unknowns.
pub fn dense_oracle(pencil: &OperatorPencil) -> Result<DenseSpectrum, SpectralError> {
    let n = pencil.dim();
    if n > DENSE_CAP {
        return Err(SpectralError::DimensionCap {
            dim: n,
            cap: DENSE_CAP,
        });
    }
    if pencil.symmetric {
        let mut h = dense_h(&pencil.s, &pencil.w);
        // Exact symmetric copy; the measured asymmetry is below tolerance.
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = m;
                h[(j, i)] = m;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(DenseSpectrum {
            eigenvalues,
            complex: None,
            vectors: Some(vectors),
            w: pencil.w.clone(),
        })
    } else {
        let a = DMatrix::from_fn(n, n, |_, _| 0.0);
        let mut a = a;
        for (i, j, v) in pencil.s.triplets() {
            a[(i, j)] = v / pencil.w[i];
        }
        let ev = a.complex_eigenvalues();
        let mut c: Vec<(f64, f64)> = ev.iter().map(|z| (z.re, z.im)).collect();
        c.sort_by(|x, y| x.partial_cmp(y).unwrap());
        Ok(DenseSpectrum {
            eigenvalues: c.iter().map(|z| z.0).collect(),
            complex: Some(c),
            vectors: None,
            w: pencil.w.clone(),
        })
    }
}

impl DenseSpectrum {
    pub fn count_below(&self, lambda: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| l <= lambda).count()
    }

    /// Tr e^{-tA}; for complex spectra the real part of the sum.
    pub fn heat_trace(&self, t: f64) -> f64 {
        match &self.complex {
            None => self.eigenvalues.iter().map(|l| (-t * l).exp()).sum(),
            Some(c) => c
                .iter()
                .map(|&(re, im)| (-t * re).exp() * (t * im).cos())
                .sum(),
        }
    }

    /// (e^{-tH})_{xx} / w_x from the eigenvectors.
    pub fn heat_diag(&self, t: f64, node: usize) -> Option<f64> {
        let v = self.vectors.as_ref()?;
        let s: f64 = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| v[(node, k)].powi(2) * (-t * l).exp())
            .sum();
        Some(s / self.w[node])
    }

    pub fn lowest(&self, k: usize) -> Spectrum {
        let e: Vec<f64> = self.eigenvalues.iter().take(k).cloned().collect();
        Spectrum {
            k: e.len(),
            residual_norms: vec![0.0; e.len()],
            eigenvalues: e,
            method: "dense".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    #[test]
    fn two_by_two() {
        let s = CsrMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)],
        );
        let d = dense_oracle(&OperatorPencil::from_parts(s, vec![1.0, 1.0])).unwrap();
        assert!((d.eigenvalues[0] - 1.0).abs() < 1e-14 && (d.eigenvalues[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn general_spectrum() {
        let s = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, -1.0)]);
        let d = dense_oracle(&OperatorPencil::from_parts(s, vec![1.0, 1.0])).unwrap();
        let c = d.complex.unwrap();
        assert!((c[0].1 + 1.0).abs() < 1e-12 && (c[1].1 - 1.0).abs() < 1e-12);
    }
}
