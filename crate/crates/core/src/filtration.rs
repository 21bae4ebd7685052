//! Bracket filtration, homogeneous dimension, level sets of Q, the Lambda
//! polynomial and minimal multi-word frames.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vfalgebra::{
    AlgebraError, BracketTable, ChartCoeff, CompiledField, VectorField, Word, TAU_CAP,
};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiltrationError {
    #[error("Hormander condition fails at {point:?}: dims {dims:?}")]
    HormanderFailure { point: Vec<f64>, dims: Vec<usize> },
    #[error("depth cap {0} exceeds the configured bracket cap")]
    DepthCap(usize),
    #[error("invalid sampling parameters: {0}")]
    Sample(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationPoint {
    pub point: Vec<f64>,
    pub dims: Vec<usize>,
    pub tau: usize,
    pub q: usize,
}

impl FiltrationPoint {
    fn from_dims(point: Vec<f64>, dims: Vec<usize>) -> Self {
        let n = *dims.last().unwrap();
        let tau = dims.len();
        let q = tau * n - dims[..tau - 1].iter().sum::<usize>();
        FiltrationPoint {
            point,
            dims,
            tau,
            q,
        }
    }
}

/// Numerical rank of a set of vectors in R^n.
pub fn numerical_rank(vectors: &[Vec<f64>], n: usize) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(n, vectors.len(), |i, j| vectors[j][i]);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 || !smax.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

fn full_rank_square(cols: &[&[f64]], n: usize) -> Option<f64> {
    let m = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin <= RANK_TOL * smax {
        return None;
    }
    Some(m.determinant().abs())
}

/// A set of n distinct words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiWord {
    pub words: Vec<Word>,
    pub deg: usize,
}

impl MultiWord {
    pub fn new(mut words: Vec<Word>) -> Self {
        words.sort();
        let deg = words.iter().map(|w| w.len()).sum();
        MultiWord { words, deg }
    }

    /// det of the matrix whose columns are X_I(x), I in the multi-word.
    pub fn det_at(&self, fields: &[VectorField], x: &[f64]) -> Result<f64, AlgebraError> {
        let n = x.len();
        let mut cols = Vec::with_capacity(n);
        for w in &self.words {
            let f = crate::vfalgebra::iterated_bracket(w, fields, TAU_CAP.max(w.len()))?;
            cols.push(f.eval(x));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]).determinant())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoly {
    pub point: Vec<f64>,
    pub coeffs: BTreeMap<usize, f64>,
}

impl LambdaPoly {
    pub fn eval(&self, delta: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&d, &c)| c * delta.powi(d as i32))
            .sum()
    }

    pub fn min_positive_degree(&self) -> Option<usize> {
        self.coeffs.iter().find(|(_, &c)| c > 0.0).map(|(&d, _)| d)
    }
}

// Words whose brackets agree up to sign and share a length.
#[derive(Clone, Debug)]
struct WordClass {
    rep: Word,
    len: usize,
    mult: usize,
    field: CompiledField,
}

/// Precomputed brackets of a family up to a depth cap; all point queries go
/// through this.
#[derive(Clone, Debug)]
pub struct Filtration {
    fields: Vec<VectorField>,
    table: BracketTable,
    evals: Vec<(usize, CompiledField)>,
    classes: Vec<WordClass>,
}

impl Filtration {
    pub fn new(fields: &[VectorField], depth_cap: usize) -> Result<Self, FiltrationError> {
        if depth_cap == 0 || depth_cap > TAU_CAP {
            return Err(FiltrationError::DepthCap(depth_cap));
        }
        let table = BracketTable::new(fields, depth_cap)?;
        let evals = table
            .entries()
            .iter()
            .filter(|(_, f)| !f.is_zero())
            .map(|(w, f)| (w.len(), f.compile()))
            .collect();
        let mut reps: Vec<(usize, VectorField, Word, usize)> = Vec::new();
        for (w, f) in table.entries() {
            if f.is_zero() {
                continue;
            }
            let canon = f.canonical_up_to_sign();
            match reps
                .iter_mut()
                .find(|(l, g, _, _)| *l == w.len() && *g == canon)
            {
                Some(r) => {
                    r.3 += 1;
                    if *w < r.2 {
                        r.2 = w.clone();
                    }
                }
                None => reps.push((w.len(), canon, w.clone(), 1)),
            }
        }
        let classes = reps
            .into_iter()
            .map(|(len, f, rep, mult)| WordClass {
                rep,
                len,
                mult,
                field: f.compile(),
            })
            .collect();
        Ok(Filtration {
            fields: fields.to_vec(),
            table,
            evals,
            classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn depth_cap(&self) -> usize {
        self.table.depth()
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    pub fn table(&self) -> &BracketTable {
        &self.table
    }

    /// Number of distinct word classes used by the multi-word enumeration.
    pub fn class_count(&self, depth: usize) -> usize {
        self.classes.iter().filter(|c| c.len <= depth).count()
    }

    pub fn at(&self, x: &[f64]) -> Result<FiltrationPoint, FiltrationError> {
        let n = self.dim();
        if x.len() != n {
            return Err(AlgebraError::Dimension {
                expected: n,
                found: x.len(),
            }
            .into());
        }
        let mut dims = Vec::new();
        let mut vecs = Vec::new();
        for j in 1..=self.depth_cap() {
            for (len, f) in &self.evals {
                if *len == j {
                    vecs.push(f.eval(x));
                }
            }
            let r = numerical_rank(&vecs, n);
            dims.push(r);
            if r == n {
                return Ok(FiltrationPoint::from_dims(x.to_vec(), dims));
            }
        }
        Err(FiltrationError::HormanderFailure {
            point: x.to_vec(),
            dims,
        })
    }

    fn class_vectors(&self, x: &[f64], depth: usize) -> Vec<(usize, Vec<f64>)> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.len <= depth)
            .map(|(k, c)| (k, c.field.eval(x)))
            .collect()
    }

    /// Lambda polynomial over multi-words with word length <= depth.
    pub fn lambda_poly(&self, x: &[f64], depth: usize) -> Result<LambdaPoly, FiltrationError> {
        self.at(x)?;
        let n = self.dim();
        let vecs = self.class_vectors(x, depth.min(self.depth_cap()));
        let mut coeffs = BTreeMap::new();
        for combo in Combinations::new(vecs.len(), n) {
            let cols: Vec<&[f64]> = combo.iter().map(|&k| vecs[k].1.as_slice()).collect();
            if let Some(d) = full_rank_square(&cols, n) {
                let cls: Vec<&WordClass> =
                    combo.iter().map(|&k| &self.classes[vecs[k].0]).collect();
                let deg: usize = cls.iter().map(|c| c.len).sum();
                let mult: usize = cls.iter().map(|c| c.mult).product();
                *coeffs.entry(deg).or_insert(0.0) += d * mult as f64;
            }
        }
        Ok(LambdaPoly {
            point: x.to_vec(),
            coeffs,
        })
    }

    /// Nonvanishing multi-word of least degree; ties by sorted word order.
    pub fn minimal_frame(
        &self,
        x: &[f64],
        depth: usize,
    ) -> Result<(MultiWord, f64), FiltrationError> {
        self.at(x)?;
        let n = self.dim();
        let vecs = self.class_vectors(x, depth.min(self.depth_cap()));
        let mut best: Option<(MultiWord, f64)> = None;
        for combo in Combinations::new(vecs.len(), n) {
            let cols: Vec<&[f64]> = combo.iter().map(|&k| vecs[k].1.as_slice()).collect();
            if let Some(d) = full_rank_square(&cols, n) {
                let mw = MultiWord::new(
                    combo
                        .iter()
                        .map(|&k| self.classes[vecs[k].0].rep.clone())
                        .collect(),
                );
                let better = match &best {
                    None => true,
                    Some((b, _)) => (mw.deg, &mw.words) < (b.deg, &b.words),
                };
                if better {
                    best = Some((mw, d));
                }
            }
        }
        best.ok_or_else(|| FiltrationError::HormanderFailure {
            point: x.to_vec(),
            dims: vec![],
        })
    }
}

/// k-subsets of 0..n in lexicographic order.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Filtration at a single point.
pub fn tangent_filtration(
    x: &[f64],
    fields: &[VectorField],
    depth_cap: usize,
) -> Result<FiltrationPoint, FiltrationError> {
    Filtration::new(fields, depth_cap)?.at(x)
}

/// (Q(x), tau(x)) using the default bracket cap.
pub fn homogeneous_dimension(
    x: &[f64],
    fields: &[VectorField],
) -> Result<(usize, usize), FiltrationError> {
    let p = tangent_filtration(x, fields, TAU_CAP)?;
    Ok((p.q, p.tau))
}

pub fn lambda_poly(
    x: &[f64],
    fields: &[VectorField],
    depth: usize,
) -> Result<LambdaPoly, FiltrationError> {
    Filtration::new(fields, depth.max(1))?.lambda_poly(x, depth)
}

pub fn minimal_frame(
    x: &[f64],
    fields: &[VectorField],
    depth: usize,
) -> Result<MultiWord, FiltrationError> {
    Ok(Filtration::new(fields, depth.max(1))?
        .minimal_frame(x, depth)?
        .0)
}

/// Rectangular sample region with a density factor h.
#[derive(Clone, Debug)]
pub struct AuditDomain {
    pub origin: Vec<f64>,
    pub lengths: Vec<f64>,
    pub density: ChartCoeff,
}

/// Lattice points `origin + i*L/N` (vertex grid) plus optional uniform
/// random points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub grid: Vec<usize>,
    #[serde(default)]
    pub random: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: Vec<f64>,
    pub weight: f64,
    pub tau: usize,
    pub q: usize,
    pub dims: Vec<usize>,
    pub lambda_min_deg: usize,
    pub lambda_coeffs: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMass {
    pub mass: f64,
    /// Mass of lattice samples whose whole neighbour stencil lies in F_k.
    pub interior_mass: f64,
    pub measure_zero_candidate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub dim: usize,
    pub tau_l: usize,
    pub q_l: usize,
    pub total_mass: f64,
    pub cell_mass: f64,
    pub fk_mass: BTreeMap<usize, LevelMass>,
    pub failures: Vec<Vec<f64>>,
    /// Distinct lower dimension vectors (d(x,1..tau_L-1)) seen, with their mass.
    pub dim_vectors: Vec<(Vec<usize>, f64)>,
    pub semicontinuity_violations: usize,
    pub points: Vec<PointRecord>,
}

impl AuditReport {
    pub fn fk(&self, k: usize) -> Option<&LevelMass> {
        self.fk_mass.get(&k)
    }

    /// Per-point CSV: `x1..xn,tau,Q,lambda_min_deg,lambda_<deg>...`.
    pub fn to_csv(&self) -> String {
        let degs: Vec<usize> = {
            let mut d: Vec<usize> = self
                .points
                .iter()
                .flat_map(|p| p.lambda_coeffs.keys().cloned())
                .collect();
            d.sort();
            d.dedup();
            d
        };
        let mut s = String::new();
        let xs: Vec<String> = (1..=self.dim).map(|i| format!("x{}", i)).collect();
        s.push_str(&xs.join(","));
        s.push_str(",tau,Q,lambda_min_deg");
        for d in &degs {
            s.push_str(&format!(",lambda_{}", d));
        }
        s.push('\n');
        for p in &self.points {
            let xs: Vec<String> = p.x.iter().map(|v| format!("{}", v)).collect();
            s.push_str(&xs.join(","));
            s.push_str(&format!(",{},{},{}", p.tau, p.q, p.lambda_min_deg));
            for d in &degs {
                s.push_str(&format!(
                    ",{}",
                    p.lambda_coeffs.get(d).cloned().unwrap_or(0.0)
                ));
            }
            s.push('\n');
        }
        s
    }
}

/// Samples the region, computes the filtration at each point and aggregates
/// tau_L, Q_L and the mu-mass of every level set F_k = {Q >= k}.
pub fn hormander_audit(
    fields: &[VectorField],
    domain: &AuditDomain,
    spec: &SampleSpec,
    depth_cap: usize,
) -> Result<AuditReport, FiltrationError> {
    let n = domain.origin.len();
    if domain.lengths.len() != n || (!spec.grid.is_empty() && spec.grid.len() != n) {
        return Err(FiltrationError::Sample("dimension mismatch".into()));
    }
    if spec.grid.iter().any(|&g| g == 0) {
        return Err(FiltrationError::Sample(
            "grid counts must be positive".into(),
        ));
    }
    let filt = Filtration::new(fields, depth_cap)?;
    let h = domain.density.compile();
    let grid_count: usize = if spec.grid.is_empty() {
        0
    } else {
        spec.grid.iter().product()
    };
    let total = grid_count + spec.random;
    if total == 0 {
        return Err(FiltrationError::Sample("no sample points".into()));
    }
    let vol: f64 = domain.lengths.iter().product();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(total);
    for idx in 0..grid_count {
        let mut rem = idx;
        let mut p = vec![0.0; n];
        for a in 0..n {
            let i = rem % spec.grid[a];
            rem /= spec.grid[a];
            p[a] = domain.origin[a] + i as f64 * domain.lengths[a] / spec.grid[a] as f64;
        }
        pts.push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..spec.random {
        pts.push(
            (0..n)
                .map(|a| domain.origin[a] + rng.gen::<f64>() * domain.lengths[a])
                .collect(),
        );
    }

    let results: Vec<Result<(FiltrationPoint, LambdaPoly), Vec<usize>>> = pts
        .par_iter()
        .map(|p| match filt.at(p) {
            Ok(fp) => Ok((
                fp,
                LambdaPoly {
                    point: vec![],
                    coeffs: BTreeMap::new(),
                },
            )),
            Err(FiltrationError::HormanderFailure { dims, .. }) => Err(dims),
            Err(_) => Err(vec![]),
        })
        .collect();
    let tau_l = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|(f, _)| f.tau)
        .max()
        .unwrap_or(0);
    let q_l = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|(f, _)| f.q)
        .max()
        .unwrap_or(0);

    let mut points = Vec::with_capacity(total);
    let mut failures = Vec::new();
    let w_unit = vol / total as f64;
    let mut weights = Vec::with_capacity(total);
    let records: Vec<Option<PointRecord>> = pts
        .par_iter()
        .zip(results.par_iter())
        .map(|(p, r)| {
            let w = w_unit * h.eval(p);
            match r {
                Ok((fp, _)) => {
                    let lp = filt.lambda_poly(p, tau_l).ok()?;
                    Some(PointRecord {
                        x: p.clone(),
                        weight: w,
                        tau: fp.tau,
                        q: fp.q,
                        dims: fp.dims.clone(),
                        lambda_min_deg: lp.min_positive_degree().unwrap_or(0),
                        lambda_coeffs: lp.coeffs,
                    })
                }
                Err(_) => None,
            }
        })
        .collect();
    for (p, rec) in pts.iter().zip(records) {
        weights.push(w_unit * h.eval(p));
        match rec {
            Some(r) => points.push(r),
            None => failures.push(p.clone()),
        }
    }
    let total_mass: f64 = weights.iter().sum();
    let cell_mass = total_mass / total as f64;

    // Per-lattice-node Q for the interior and semicontinuity tests.
    let grid_q: Vec<Option<usize>> = results[..grid_count]
        .iter()
        .map(|r| r.as_ref().ok().map(|(f, _)| f.q))
        .collect();
    let neighbours = |idx: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut coords = vec![0usize; n];
        let mut rem = idx;
        for a in 0..n {
            coords[a] = rem % spec.grid[a];
            rem /= spec.grid[a];
        }
        let count = 3usize.pow(n as u32);
        for code in 0..count {
            let mut c = code;
            let mut flat = 0;
            let mut stride = 1;
            let mut valid = true;
            for a in 0..n {
                let d = (c % 3) as isize - 1;
                c /= 3;
                let g = spec.grid[a] as isize;
                let v = coords[a] as isize + d;
                // The sampled region is treated as periodic only if the grid wraps
                // cleanly; otherwise out-of-range neighbours are skipped.
                let v = if v < 0 || v >= g {
                    if g > 2 {
                        v.rem_euclid(g)
                    } else {
                        valid = false;
                        0
                    }
                } else {
                    v
                };
                flat += v as usize * stride;
                stride *= spec.grid[a];
            }
            if valid && flat != idx {
                out.push(flat);
            }
        }
        out
    };

    let mut fk_mass = BTreeMap::new();
    for k in n..=q_l.max(n) {
        let mass: f64 = points.iter().filter(|p| p.q >= k).map(|p| p.weight).sum();
        let interior_mass: f64 = (0..grid_count)
            .filter(|&i| grid_q[i].map_or(false, |q| q >= k))
            .filter(|&i| {
                neighbours(i)
                    .iter()
                    .all(|&j| grid_q[j].map_or(false, |q| q >= k))
            })
            .map(|i| weights[i])
            .sum();
        let candidate = if grid_count > 0 {
            interior_mass < cell_mass
        } else {
            mass < cell_mass
        };
        fk_mass.insert(
            k,
            LevelMass {
                mass,
                interior_mass,
                measure_zero_candidate: candidate,
            },
        );
    }

    let mut semicontinuity_violations = 0;
    for i in 0..grid_count {
        if let Some(qi) = grid_q[i] {
            let nb = neighbours(i);
            let cell_max = nb
                .iter()
                .filter_map(|&j| grid_q[j])
                .max()
                .unwrap_or(qi)
                .max(qi);
            for &j in &nb {
                if let Some(qj) = grid_q[j] {
                    if qj > cell_max {
                        semicontinuity_violations += 1;
                    }
                }
            }
        }
    }

    let mut dim_vectors: Vec<(Vec<usize>, f64)> = Vec::new();
    for p in &points {
        let mut v: Vec<usize> = p.dims.clone();
        v.resize(tau_l.saturating_sub(1), n);
        match dim_vectors.iter_mut().find(|(d, _)| *d == v) {
            Some(e) => e.1 += p.weight,
            None => dim_vectors.push((v, p.weight)),
        }
    }
    dim_vectors.sort_by(|a, b| a.0.cmp(&b.0));

    Ok(AuditReport {
        dim: n,
        tau_l,
        q_l,
        total_mass,
        cell_mass,
        fk_mass,
        failures,
        dim_vectors,
        semicontinuity_violations,
        points,
    })
}
