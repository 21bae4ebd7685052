//! Multifrontal LDL^T without pivoting on a nested-dissection tree. Inertia
//! comes from the signs of D; factors can be kept for solves.

use serde::{Deserialize, Serialize};

use super::ordering::{analyse, Symbolic};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

/// A pivot fell below the breakdown threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakdown {
    pub pivot: usize,
    pub value: f64,
}

const PANEL: usize = 64;
const TRAIL_BLOCK: usize = 192;
/// Pivots with |d| below this multiple of the diagonal scale count as breakdown.
pub const PIVOT_TOL: f64 = 1e-13;

// In-place partial LDL^T of the leading `npiv` columns of a col-major f x f
// front (lower triangle); the trailing block becomes the Schur complement.
fn partial_ldlt(
    fr: &mut [f64],
    f: usize,
    npiv: usize,
    tiny: f64,
    inertia: &mut Inertia,
    base: usize,
) -> Result<(), Breakdown> {
    let mut wbuf: Vec<f64> = Vec::new();
    let mut k0 = 0;
    while k0 < npiv {
        let k1 = (k0 + PANEL).min(npiv);
        for j in k0..k1 {
            let d = fr[j + j * f];
            if !(d.abs() > tiny) {
                return Err(Breakdown {
                    pivot: base + j,
                    value: d,
                });
            }
            if d < 0.0 {
                inertia.negative += 1;
            } else {
                inertia.positive += 1;
            }
            let inv = 1.0 / d;
            let (head, tail) = fr.split_at_mut((j + 1) * f);
            let colj = &mut head[j * f..];
            for v in colj[j + 1..f].iter_mut() {
                *v *= inv;
            }
            // Update the remaining panel columns.
            for jp in j + 1..k1 {
                let t = d * colj[jp];
                if t == 0.0 {
                    continue;
                }
                let off = (jp - j - 1) * f;
                let dst = &mut tail[off + jp..off + f];
                let src = &colj[jp..f];
                for (a, b) in dst.iter_mut().zip(src) {
                    *a -= b * t;
                }
            }
        }
        // Trailing update: F[k1.., k1..] -= L W^T with W = L D, lower blocks only.
        let m = f - k1;
        let nb = k1 - k0;
        if m > 0 {
            wbuf.clear();
            wbuf.resize(m * nb, 0.0);
            for p in 0..nb {
                let d = fr[(k0 + p) + (k0 + p) * f];
                for r in 0..m {
                    wbuf[r + p * m] = fr[(k1 + r) + (k0 + p) * f] * d;
                }
            }
            let mut cb = 0;
            while cb < m {
                let ce = (cb + TRAIL_BLOCK).min(m);
                let rows = m - cb;
                let cols = ce - cb;
                unsafe {
                    let a = wbuf.as_ptr().add(cb);
                    let b = fr.as_ptr().add((k1 + cb) + k0 * f);
                    let c = fr.as_mut_ptr().add((k1 + cb) + (k1 + cb) * f);
                    matrixmultiply::dgemm(
                        rows, nb, cols, -1.0, a, 1, m as isize, b, f as isize, 1, 1.0, c, 1,
                        f as isize,
                    );
                }
                cb = ce;
            }
        }
        k0 = k1;
    }
    Ok(())
}

/// Factor blocks kept for solves.
#[derive(Clone, Debug)]
struct FrontFactor {
    // f x npiv col-major: unit L below the diagonal, D on the diagonal.
    data: Vec<f64>,
    f: usize,
}

/// Symbolic analysis bound to one sparsity pattern.
#[derive(Clone, Debug)]
pub struct LdltPlan {
    sym: Symbolic,
}

#[derive(Clone, Debug)]
pub struct LdltFactor {
    plan: LdltPlan,
    fronts: Vec<FrontFactor>,
    pub inertia: Inertia,
}

impl LdltPlan {
    /// Analyse the pattern of a symmetric matrix; `shape` is the lattice shape
    /// when the unknowns are lattice nodes.
    pub fn new(pattern: &CsrMatrix, shape: Option<&[usize]>) -> Self {
        let n = pattern.nrows();
        let leaf = if shape.is_none() && n <= 2048 { n } else { 48 };
        LdltPlan {
            sym: analyse(pattern, shape, leaf),
        }
    }

    pub fn symbolic(&self) -> &Symbolic {
        &self.sym
    }

    /// Factor `S - lambda*diag(w) + diag(jitter)`. With `keep = false` only
    /// the inertia is produced and front memory is released as it goes.
    fn factor(
        &self,
        s: &CsrMatrix,
        w: &[f64],
        lambda: f64,
        jitter: Option<&[f64]>,
        keep: bool,
    ) -> Result<(Inertia, Option<Vec<FrontFactor>>), Breakdown> {
        let sym = &self.sym;
        let n = sym.n;
        let scale = (0..n)
            .map(|i| s.get(i, i).abs() + (lambda * w[i]).abs())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let tiny = PIVOT_TOL * scale;
        let mut inertia = Inertia::default();
        let mut local = vec![usize::MAX; n];
        let mut stack: Vec<(Vec<f64>, usize, usize)> = Vec::new(); // (update, size, node id)
        let mut kept = if keep {
            Vec::with_capacity(sym.nodes.len())
        } else {
            Vec::new()
        };
        for (id, sn) in sym.nodes.iter().enumerate() {
            let npiv = sn.npiv();
            let f = sn.front();
            for (k, i) in (sn.p0..sn.p1).enumerate() {
                local[i] = k;
            }
            for (k, &r) in sn.rows.iter().enumerate() {
                local[r] = npiv + k;
            }
            let mut fr = vec![0.0; f * f];
            for i in sn.p0..sn.p1 {
                let li = local[i];
                let old = sym.perm[i];
                let (cols, vals) = s.row(old);
                for (&oj, &v) in cols.iter().zip(vals) {
                    let j = sym.inv[oj];
                    if j >= i {
                        fr[local[j] + li * f] += v;
                    }
                }
                fr[li + li * f] -= lambda * w[old];
                if let Some(jt) = jitter {
                    fr[li + li * f] += jt[old];
                }
            }
            // Extend-add children updates (top of the stack, in child order).
            let nch = sn.children.len();
            let start = stack.len() - nch;
            for (upd, u, cid) in stack.drain(start..) {
                let crow = &sym.nodes[cid].rows;
                let loc: Vec<usize> = crow.iter().map(|&r| local[r]).collect();
                for b in 0..u {
                    let cb = loc[b] * f;
                    let col = &upd[b * u..(b + 1) * u];
                    for a in b..u {
                        fr[loc[a] + cb] += col[a];
                    }
                }
            }
            partial_ldlt(&mut fr, f, npiv, tiny, &mut inertia, sn.p0)?;
            let u = f - npiv;
            if u > 0 {
                let mut upd = vec![0.0; u * u];
                for b in 0..u {
                    let src = &fr[(npiv + b) * f + npiv..(npiv + b + 1) * f];
                    upd[b * u + b..(b + 1) * u].copy_from_slice(&src[b..]);
                }
                stack.push((upd, u, id));
            }
            for i in sn.p0..sn.p1 {
                local[i] = usize::MAX;
            }
            for &r in &sn.rows {
                local[r] = usize::MAX;
            }
            if keep {
                fr.truncate(f * npiv);
                fr.shrink_to_fit();
                kept.push(FrontFactor { data: fr, f });
            }
        }
        Ok((inertia, if keep { Some(kept) } else { None }))
    }

    pub fn inertia(
        &self,
        s: &CsrMatrix,
        w: &[f64],
        lambda: f64,
        jitter: Option<&[f64]>,
    ) -> Result<Inertia, Breakdown> {
        Ok(self.factor(s, w, lambda, jitter, false)?.0)
    }

    pub fn factorize(
        &self,
        s: &CsrMatrix,
        w: &[f64],
        lambda: f64,
        jitter: Option<&[f64]>,
    ) -> Result<LdltFactor, Breakdown> {
        let (inertia, fronts) = self.factor(s, w, lambda, jitter, true)?;
        Ok(LdltFactor {
            plan: self.clone(),
            fronts: fronts.unwrap(),
            inertia,
        })
    }
}

impl LdltFactor {
    pub fn dim(&self) -> usize {
        self.plan.sym.n
    }

    /// Solve A X = B in place for `k` right-hand sides stored row-major
    /// (`b[i*k + c]`), in the original numbering.
    pub fn solve_many(&self, b: &mut [f64], k: usize) {
        let sym = &self.plan.sym;
        let n = sym.n;
        assert_eq!(b.len(), n * k);
        // Permute into elimination order.
        let mut x = vec![0.0; n * k];
        for i in 0..n {
            let o = sym.perm[i];
            x[i * k..(i + 1) * k].copy_from_slice(&b[o * k..(o + 1) * k]);
        }
        let mut buf: Vec<f64> = Vec::new();
        let mut piv: Vec<f64> = Vec::new();
        // Forward: L y = b.
        for (sn, ff) in sym.nodes.iter().zip(&self.fronts) {
            let p = sn.npiv();
            let f = ff.f;
            let l = &ff.data;
            piv.clear();
            piv.extend_from_slice(&x[sn.p0 * k..sn.p1 * k]);
            for j in 0..p {
                for i in j + 1..p {
                    let lij = l[i + j * f];
                    if lij != 0.0 {
                        for c in 0..k {
                            piv[i * k + c] -= lij * piv[j * k + c];
                        }
                    }
                }
            }
            x[sn.p0 * k..sn.p1 * k].copy_from_slice(&piv);
            let u = sn.rows.len();
            if u > 0 {
                buf.clear();
                buf.resize(u * k, 0.0);
                unsafe {
                    // buf (u x k) = L21 (u x p) * piv (p x k)
                    matrixmultiply::dgemm(
                        u,
                        p,
                        k,
                        1.0,
                        l.as_ptr().add(p),
                        1,
                        f as isize,
                        piv.as_ptr(),
                        k as isize,
                        1,
                        0.0,
                        buf.as_mut_ptr(),
                        k as isize,
                        1,
                    );
                }
                for (r, &row) in sn.rows.iter().enumerate() {
                    for c in 0..k {
                        x[row * k + c] -= buf[r * k + c];
                    }
                }
            }
        }
        // Diagonal.
        for (sn, ff) in sym.nodes.iter().zip(&self.fronts) {
            for j in 0..sn.npiv() {
                let d = ff.data[j + j * ff.f];
                let i = sn.p0 + j;
                for c in 0..k {
                    x[i * k + c] /= d;
                }
            }
        }
        // Backward: L^T x = y.
        for (sn, ff) in sym.nodes.iter().zip(&self.fronts).rev() {
            let p = sn.npiv();
            let f = ff.f;
            let l = &ff.data;
            piv.clear();
            piv.extend_from_slice(&x[sn.p0 * k..sn.p1 * k]);
            let u = sn.rows.len();
            if u > 0 {
                buf.clear();
                buf.resize(u * k, 0.0);
                for (r, &row) in sn.rows.iter().enumerate() {
                    buf[r * k..(r + 1) * k].copy_from_slice(&x[row * k..(row + 1) * k]);
                }
                unsafe {
                    // piv -= L21^T (p x u) * buf (u x k)
                    matrixmultiply::dgemm(
                        p,
                        u,
                        k,
                        -1.0,
                        l.as_ptr().add(p),
                        f as isize,
                        1,
                        buf.as_ptr(),
                        k as isize,
                        1,
                        1.0,
                        piv.as_mut_ptr(),
                        k as isize,
                        1,
                    );
                }
            }
            for j in (0..p).rev() {
                for i in j + 1..p {
                    let lij = l[i + j * f];
                    if lij != 0.0 {
                        for c in 0..k {
                            piv[j * k + c] -= lij * piv[i * k + c];
                        }
                    }
                }
            }
            x[sn.p0 * k..sn.p1 * k].copy_from_slice(&piv);
        }
        for i in 0..n {
            let o = sym.perm[i];
            b[o * k..(o + 1) * k].copy_from_slice(&x[i * k..(i + 1) * k]);
        }
    }

    pub fn solve(&self, b: &mut [f64]) {
        self.solve_many(b, 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.gen::<f64>()));
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                if j != i {
                    let v = rng.gen::<f64>() - 0.5;
                    t.push((i, j, v));
                    t.push((j, i, v));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn inertia_matches_dense_eigenvalues() {
        let a = random_sym(300, 1);
        let w = vec![1.0; 300];
        let eig = a.to_dense().symmetric_eigenvalues();
        let plan = LdltPlan::new(&a, Some(&[20, 15]));
        for &lam in &[3.0, 3.7, 4.2, 4.9, 6.0] {
            let inr = plan.inertia(&a, &w, lam, None).unwrap();
            let expect = eig.iter().filter(|&&e| e < lam).count();
            assert_eq!(inr.negative, expect, "lambda {}", lam);
        }
    }

    #[test]
    fn solve_recovers_solution() {
        let a = random_sym(257, 7);
        let w = vec![1.0; 257];
        let plan = LdltPlan::new(&a, None);
        let f = plan.factorize(&a, &w, 4.4, None).unwrap();
        let xs: Vec<f64> = (0..257 * 2).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut b = vec![0.0; 257 * 2];
        for c in 0..2 {
            let col: Vec<f64> = (0..257).map(|i| xs[i * 2 + c]).collect();
            let y = a.mul_vec(&col);
            for i in 0..257 {
                b[i * 2 + c] = y[i] - 4.4 * col[i];
            }
        }
        f.solve_many(&mut b, 2);
        let err = b
            .iter()
            .zip(&xs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "err {}", err);
    }
}
