//! Minimal compressed-row sparse matrix used by assembly and the solvers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: d.to_vec(),
        }
    }

    /// Duplicates are summed; exact zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols, "triplet out of range");
            match rows[r].last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => rows[r].push((c, v)),
            }
        }
        Self::from_rows(ncols, rows)
    }

    /// Rows given as (column, value) lists; each row is sorted and merged.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by(|a, b| a.0.cmp(&b.0));
            let start = indices.len();
            for (c, v) in row {
                assert!(c < ncols, "column out of range");
                if indices.len() > start && *indices.last().unwrap() == c {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                }
            }
            let mut k = start;
            let mut w = start;
            while k < indices.len() {
                if data[k] != 0.0 {
                    indices[w] = indices[k];
                    data[w] = data[k];
                    w += 1;
                }
                k += 1;
            }
            indices.truncate(w);
            data.truncate(w);
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        match idx.binary_search(&j) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (idx, val) = self.row(i);
            idx.iter().zip(val).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                indices[next[j]] = i;
                data[next[j]] = v;
                next[j] += 1;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr: counts,
            indices,
            data,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (idx, val) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in idx.iter().zip(val) {
                acc += v * x[j];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn scale(&self, a: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= a);
        m
    }

    /// diag(d) * self.
    pub fn scale_rows(&self, d: &[f64]) -> CsrMatrix {
        let mut m = self.clone();
        for i in 0..self.nrows {
            for k in m.indptr[i]..m.indptr[i + 1] {
                m.data[k] *= d[i];
            }
        }
        m.drop_zeros()
    }

    fn drop_zeros(self) -> CsrMatrix {
        if self.data.iter().all(|&v| v != 0.0) {
            return self;
        }
        let rows = (0..self.nrows)
            .map(|i| {
                let (idx, val) = self.row(i);
                idx.iter().cloned().zip(val.iter().cloned()).collect()
            })
            .collect();
        CsrMatrix::from_rows(self.ncols, rows)
    }

    /// self + a * other.
    pub fn add_scaled(&self, other: &CsrMatrix, a: f64) -> CsrMatrix {
        assert_eq!(
            (self.nrows, self.ncols),
            (other.nrows, other.ncols),
            "shape mismatch"
        );
        let rows = (0..self.nrows)
            .map(|i| {
                let (ia, va) = self.row(i);
                let (ib, vb) = other.row(i);
                let mut r: Vec<(usize, f64)> = Vec::with_capacity(ia.len() + ib.len());
                let (mut p, mut q) = (0, 0);
                while p < ia.len() || q < ib.len() {
                    if q >= ib.len() || (p < ia.len() && ia[p] < ib[q]) {
                        r.push((ia[p], va[p]));
                        p += 1;
                    } else if p >= ia.len() || ib[q] < ia[p] {
                        r.push((ib[q], a * vb[q]));
                        q += 1;
                    } else {
                        r.push((ia[p], va[p] + a * vb[q]));
                        p += 1;
                        q += 1;
                    }
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(self.ncols, rows)
    }

    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        self.add_scaled(other, 1.0)
    }

    /// D^T diag(w) D, with every entry summed in ascending row order of D and
    /// each product formed as w_k*(D_ki*D_kj), so the result is exactly symmetric.
    pub fn gram(&self, w: &[f64]) -> CsrMatrix {
        assert_eq!(w.len(), self.nrows);
        let dt = self.transpose();
        let n = self.ncols;
        let mut acc = vec![0.0; n];
        let mut mark = vec![usize::MAX; n];
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut cols: Vec<usize> = Vec::new();
            let (ks, dki) = dt.row(i);
            for (&k, &a) in ks.iter().zip(dki) {
                let (js, dkj) = self.row(k);
                for (&j, &b) in js.iter().zip(dkj) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        cols.push(j);
                    }
                    acc[j] += w[k] * (a * b);
                }
            }
            rows.push(cols.iter().map(|&j| (j, acc[j])).collect());
        }
        CsrMatrix::from_rows(n, rows)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max |A_ij - A_ji|.
    pub fn max_asymmetry(&self) -> f64 {
        let t = self.transpose();
        let d = self.add_scaled(&t, -1.0);
        d.max_abs()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Symmetric permutation P A P^T with `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> CsrMatrix {
        let n = self.nrows;
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let rows = perm
            .iter()
            .map(|&old| {
                let (idx, val) = self.row(old);
                idx.iter().zip(val).map(|(&j, &v)| (inv[j], v)).collect()
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }
}
