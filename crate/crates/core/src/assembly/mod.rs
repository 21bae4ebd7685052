//! Grids on the chart classes, field discretization and the operator pencil
//! (S, W) for `L + V` in the inner product of `mu = h dx`.

mod discretize;
mod grid;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use discretize::{
    boundary_rows, discretize, discretize_field, discretize_transport, periodic_kernel, DiffScheme,
    Stencil,
};
pub use grid::{build_grid, ChartSpec, Grid};

use crate::sparse::CsrMatrix;
use crate::vfalgebra::{default_names, ChartCoeff, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("invalid resolution: {0}")]
    Resolution(String),
    #[error("nilmanifold grids need N2 == N3 (got {n2}, {n3})")]
    Nilmanifold { n2: usize, n3: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("transport stencil: {0}")]
    Transport(String),
    #[error("density h must be positive, found {value} at {point:?}")]
    Density { value: f64, point: Vec<f64> },
    #[error("coefficient not finite at {0:?}")]
    NotFinite(Vec<f64>),
    #[error("self-adjoint claim violated: asymmetry {asymmetry:e} exceeds {bound:e}")]
    Asymmetric { asymmetry: f64, bound: f64 },
    #[error("chart mismatch: {0}")]
    ChartMismatch(String),
    #[error("malformed scenario: {0}")]
    Scenario(String),
    #[error("io: {0}")]
    Io(String),
}

/// Fields and first-order data of an operator
/// `-sum X_i^2 + sum c_ij [X_i, X_j] + sum gamma_i X_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTerms {
    pub fields: Vec<VectorField>,
    /// Sparse list of (i, j, c_ij).
    pub commutator: Vec<(usize, usize, ChartCoeff)>,
    /// gamma_i, either empty or one per field.
    pub drift: Vec<ChartCoeff>,
}

impl OperatorTerms {
    pub fn sum_of_squares(fields: Vec<VectorField>) -> Self {
        OperatorTerms {
            fields,
            commutator: Vec::new(),
            drift: Vec::new(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.fields.first().map(|f| f.dim())
    }

    pub fn has_first_order(&self) -> bool {
        self.commutator.iter().any(|(_, _, c)| !c.is_zero())
            || self.drift.iter().any(|c| !c.is_zero())
    }

    fn validate(&self, dim: usize) -> Result<(), AssemblyError> {
        if self.fields.is_empty() {
            return Err(AssemblyError::Scenario("no fields".into()));
        }
        if let Some(f) = self.fields.iter().find(|f| f.dim() != dim) {
            return Err(AssemblyError::Dimension {
                expected: dim,
                found: f.dim(),
            });
        }
        let m = self.fields.len();
        if self.commutator.iter().any(|&(i, j, _)| i >= m || j >= m) {
            return Err(AssemblyError::Scenario(
                "commutator index out of range".into(),
            ));
        }
        if !(self.drift.is_empty() || self.drift.len() == m) {
            return Err(AssemblyError::Scenario(
                "drift needs one coefficient per field".into(),
            ));
        }
        Ok(())
    }
}

/// `psi^2 L'` contribution of the symmetrized perturbation
/// `T = L + psi^2 L'/2 + (psi^2 L')^*/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiTerm {
    pub lprime: OperatorTerms,
    pub psi: ChartCoeff,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub chart: ChartSpec,
    pub terms: OperatorTerms,
    pub potential: ChartCoeff,
    pub density: ChartCoeff,
    pub self_adjoint_claim: bool,
    pub stencil: Stencil,
    pub psi: Option<PsiTerm>,
}

impl Scenario {
    pub fn new(id: &str, chart: ChartSpec, fields: Vec<VectorField>) -> Self {
        let n = chart.dim();
        Scenario {
            id: id.to_string(),
            chart,
            terms: OperatorTerms::sum_of_squares(fields),
            potential: ChartCoeff::zero(n),
            density: ChartCoeff::one(n),
            self_adjoint_claim: true,
            stencil: Stencil::Axis,
            psi: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// Fields whose squares make up the principal part: the X_i, plus
    /// psi*Y_j for a perturbation by `psi^2 L'`.
    pub fn principal_fields(&self) -> Vec<VectorField> {
        let mut out = self.terms.fields.clone();
        if let Some(p) = &self.psi {
            if !p.psi.is_zero() {
                out.extend(p.lprime.fields.iter().map(|f| f.times(&p.psi)));
            }
        }
        out
    }

    pub fn has_first_order(&self) -> bool {
        self.terms.has_first_order()
            || self
                .psi
                .as_ref()
                .map_or(false, |p| p.lprime.has_first_order())
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        let n = self.dim();
        self.terms.validate(n)?;
        if self.potential.dim() != n || self.density.dim() != n {
            return Err(AssemblyError::Dimension {
                expected: n,
                found: self.potential.dim(),
            });
        }
        if self.stencil == Stencil::Transport && !self.chart.is_periodic() {
            return Err(AssemblyError::Transport(
                "transport stencil needs a periodic chart".into(),
            ));
        }
        if let Some(p) = &self.psi {
            p.lprime.validate(n)?;
            if p.psi.dim() != n {
                return Err(AssemblyError::Dimension {
                    expected: n,
                    found: p.psi.dim(),
                });
            }
        }
        Ok(())
    }

    /// Textual description (fields and coefficients in the config grammar),
    /// used for cache keys and manifests.
    pub fn describe(&self) -> String {
        let names = default_names(self.dim());
        let mut s = String::new();
        let _ = writeln!(s, "id={}", self.id);
        let _ = writeln!(
            s,
            "chart={}",
            serde_json::to_string(&self.chart).unwrap_or_default()
        );
        let _ = writeln!(s, "stencil={:?}", self.stencil);
        describe_terms(&mut s, "", &self.terms, &names);
        let _ = writeln!(s, "V={}", self.potential.render(&names));
        let _ = writeln!(s, "h={}", self.density.render(&names));
        let _ = writeln!(s, "self_adjoint={}", self.self_adjoint_claim);
        if let Some(p) = &self.psi {
            let _ = writeln!(s, "psi={}", p.psi.render(&names));
            describe_terms(&mut s, "Lprime.", &p.lprime, &names);
        }
        s
    }
}

fn describe_terms(s: &mut String, prefix: &str, t: &OperatorTerms, names: &[String]) {
    for (i, f) in t.fields.iter().enumerate() {
        let _ = writeln!(s, "{}X{}={}", prefix, i + 1, f.render(names));
    }
    for (i, j, c) in &t.commutator {
        let _ = writeln!(s, "{}c{}{}={}", prefix, i + 1, j + 1, c.render(names));
    }
    for (i, c) in t.drift.iter().enumerate() {
        let _ = writeln!(s, "{}gamma{}={}", prefix, i + 1, c.render(names));
    }
}

/// Attach a `psi^2 L'` perturbation to a self-adjoint base scenario.
pub fn psi_transform(
    base: &Scenario,
    lprime: OperatorTerms,
    psi: ChartCoeff,
) -> Result<Scenario, AssemblyError> {
    if !base.self_adjoint_claim {
        return Err(AssemblyError::Scenario(
            "psi transform needs a self-adjoint base".into(),
        ));
    }
    if base.psi.is_some() {
        return Err(AssemblyError::Scenario(
            "base already carries a psi perturbation".into(),
        ));
    }
    let n = base.dim();
    match lprime.dim() {
        Some(d) if d == n => {}
        Some(d) => {
            return Err(AssemblyError::ChartMismatch(format!(
                "L' lives on dimension {}, base on {}",
                d, n
            )))
        }
        None => return Err(AssemblyError::Scenario("L' has no fields".into())),
    }
    if psi.dim() != n {
        return Err(AssemblyError::ChartMismatch(
            "psi dimension differs from the chart".into(),
        ));
    }
    let mut out = base.clone();
    out.id = format!("{}+psi", base.id);
    out.psi = Some(PsiTerm { lprime, psi });
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PencilMeta {
    pub scenario: String,
    pub chart: ChartSpec,
    pub resolution: Vec<usize>,
    pub stencil: Stencil,
    pub scheme: String,
    pub dim: usize,
    pub nnz: usize,
    pub symmetric: bool,
    pub asymmetry: f64,
    pub s_max_abs: f64,
}

/// Generalized eigenproblem S u = lambda W u with W diagonal positive.
#[derive(Clone, Debug)]
pub struct OperatorPencil {
    pub s: CsrMatrix,
    pub w: Vec<f64>,
    pub symmetric: bool,
    pub asymmetry: f64,
    pub meta: PencilMeta,
    /// Lattice shape and node coordinates, used for geometric orderings.
    pub lattice: Option<Vec<usize>>,
}

/// Symmetry threshold relative to max |S|.
pub const SYMMETRY_TOL: f64 = 1e-10;

impl OperatorPencil {
    /// Pencil from raw parts (no lattice information).
    pub fn from_parts(s: CsrMatrix, w: Vec<f64>) -> Self {
        let asym = s.max_asymmetry();
        let smax = s.max_abs();
        let symmetric = asym <= SYMMETRY_TOL * smax;
        let meta = PencilMeta {
            scenario: "raw".into(),
            chart: ChartSpec::Torus { lengths: vec![1.0] },
            resolution: vec![],
            stencil: Stencil::Axis,
            scheme: "raw".into(),
            dim: w.len(),
            nnz: s.nnz(),
            symmetric,
            asymmetry: asym,
            s_max_abs: smax,
        };
        OperatorPencil {
            s,
            w,
            symmetric,
            asymmetry: asym,
            meta,
            lattice: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Same pencil with S replaced by S + W diag(v).
    pub fn with_potential(&self, v: &[f64]) -> OperatorPencil {
        let wv: Vec<f64> = self.w.iter().zip(v).map(|(a, b)| a * b).collect();
        let s = self.s.add(&CsrMatrix::diag(&wv));
        let mut out = self.clone();
        out.s = s;
        out.meta.nnz = out.s.nnz();
        out
    }

    /// Same pencil with S replaced by S + c W.
    pub fn shifted(&self, c: f64) -> OperatorPencil {
        self.with_potential(&vec![c; self.dim()])
    }

    /// Triplet text (`row col value`, sorted) preceded by one `#` line of JSON header.
    pub fn write_triplets(&self, path: &Path) -> Result<(), AssemblyError> {
        let io = |e: std::io::Error| AssemblyError::Io(e.to_string());
        let f = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(f);
        let header =
            serde_json::to_string(&self.meta).map_err(|e| AssemblyError::Io(e.to_string()))?;
        writeln!(w, "# {}", header).map_err(io)?;
        for (i, j, v) in self.s.triplets() {
            writeln!(w, "{} {} {:e}", i, j, v).map_err(io)?;
        }
        Ok(())
    }

    /// Diagonal mass vector, one value per line.
    pub fn write_mass(&self, path: &Path) -> Result<(), AssemblyError> {
        let mut s = String::new();
        for v in &self.w {
            let _ = writeln!(s, "{:e}", v);
        }
        std::fs::write(path, s).map_err(|e| AssemblyError::Io(e.to_string()))
    }
}

fn eval_nodes(c: &ChartCoeff, grid: &Grid) -> Result<Vec<f64>, AssemblyError> {
    let f = c.compile();
    (0..grid.n_nodes())
        .map(|p| {
            let pt = grid.point(p);
            let v = f.eval(&pt);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(AssemblyError::NotFinite(pt))
            }
        })
        .collect()
}

// W * (L_terms) without potential: sum-of-squares part plus first-order part.
fn assemble_terms(
    terms: &OperatorTerms,
    grid: &Grid,
    stencil: Stencil,
    w: &[f64],
    density: &ChartCoeff,
) -> Result<CsrMatrix, AssemblyError> {
    let n = grid.n_nodes();
    let vol = grid.cell_volume();
    let hc = density.compile();
    let mut s = CsrMatrix::zeros(n, n);
    for x in &terms.fields {
        let mut g = CsrMatrix::zeros(n, n);
        for scheme in [DiffScheme::Forward, DiffScheme::Backward] {
            let d = discretize(x, grid, stencil, scheme)?;
            let (extra, pts) = boundary_rows(x, grid, scheme)?;
            if extra.is_empty() {
                g = g.add(&d.gram(w));
                continue;
            }
            let mut wx = w.to_vec();
            for pt in &pts {
                let h = hc.eval(pt);
                if !(h > 0.0) {
                    return Err(AssemblyError::Density {
                        value: h,
                        point: pt.clone(),
                    });
                }
                wx.push(h * vol);
            }
            let mut rows: Vec<Vec<(usize, f64)>> = (0..n)
                .map(|i| {
                    let (c, v) = d.row(i);
                    c.iter().cloned().zip(v.iter().cloned()).collect()
                })
                .collect();
            rows.extend(extra);
            g = g.add(&CsrMatrix::from_rows(n, rows).gram(&wx));
        }
        s = s.add_scaled(&g, 0.5);
    }
    let mut first = CsrMatrix::zeros(n, n);
    for (i, j, c) in &terms.commutator {
        if c.is_zero() {
            continue;
        }
        let b = terms.fields[*i].bracket(&terms.fields[*j]);
        if b.is_zero() {
            continue;
        }
        let d = discretize(&b, grid, stencil, DiffScheme::Central)?;
        first = first.add(&d.scale_rows(&eval_nodes(c, grid)?));
    }
    for (i, g) in terms.drift.iter().enumerate() {
        if g.is_zero() {
            continue;
        }
        let d = discretize(&terms.fields[i], grid, stencil, DiffScheme::Central)?;
        first = first.add(&d.scale_rows(&eval_nodes(g, grid)?));
    }
    if first.nnz() > 0 {
        s = s.add(&first.scale_rows(w));
    }
    Ok(s)
}

/// Assemble `S = 1/2 sum (D+^T W D+ + D-^T W D-) + W diag(V) + W A`, where A
/// holds the central-difference first-order terms (commutators via their
/// symbolic brackets), and `W = h(node) * cell volume`.
///
/// The sum-of-squares block is the form `sum <X_i u, X_i v>_mu`, i.e. the
/// operator `sum X_i^* X_i`, which is `-sum X_i^2` for mu-divergence-free fields.
pub fn assemble_operator(
    scenario: &Scenario,
    grid: &Grid,
) -> Result<OperatorPencil, AssemblyError> {
    scenario.validate()?;
    if grid.chart() != &scenario.chart {
        return Err(AssemblyError::ChartMismatch(
            "grid chart differs from scenario chart".into(),
        ));
    }
    let vol = grid.cell_volume();
    let hvals = eval_nodes(&scenario.density, grid)?;
    if let Some((p, &v)) = hvals.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(AssemblyError::Density {
            value: v,
            point: grid.point(p),
        });
    }
    let w: Vec<f64> = hvals.iter().map(|h| h * vol).collect();
    let mut s = assemble_terms(
        &scenario.terms,
        grid,
        scenario.stencil,
        &w,
        &scenario.density,
    )?;
    if !scenario.potential.is_zero() {
        let v = eval_nodes(&scenario.potential, grid)?;
        let wv: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a * b).collect();
        s = s.add(&CsrMatrix::diag(&wv));
    }
    if let Some(p) = &scenario.psi {
        if !p.psi.is_zero() {
            let sp = assemble_terms(&p.lprime, grid, scenario.stencil, &w, &scenario.density)?;
            let psi2: Vec<f64> = eval_nodes(&p.psi, grid)?.iter().map(|v| v * v).collect();
            let b = sp.scale_rows(&psi2);
            let sym = b.add(&b.transpose());
            s = s.add_scaled(&sym, 0.5);
        }
    }
    let asymmetry = s.max_asymmetry();
    let smax = s.max_abs();
    let symmetric = asymmetry <= SYMMETRY_TOL * smax;
    if scenario.self_adjoint_claim && !symmetric {
        return Err(AssemblyError::Asymmetric {
            asymmetry,
            bound: SYMMETRY_TOL * smax,
        });
    }
    let meta = PencilMeta {
        scenario: scenario.id.clone(),
        chart: scenario.chart.clone(),
        resolution: grid.resolution().to_vec(),
        stencil: scenario.stencil,
        scheme: "sos:forward+backward;first-order:central".into(),
        dim: grid.n_nodes(),
        nnz: s.nnz(),
        symmetric,
        asymmetry,
        s_max_abs: smax,
    };
    Ok(OperatorPencil {
        s,
        w,
        symmetric,
        asymmetry,
        meta,
        lattice: Some(grid.dims().to_vec()),
    })
}
