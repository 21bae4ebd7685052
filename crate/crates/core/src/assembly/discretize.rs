use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::AssemblyError;
use crate::sparse::CsrMatrix;
use crate::vfalgebra::VectorField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffScheme {
    Forward,
    Backward,
    Central,
}

/// How a field becomes a difference operator.
///
/// `Axis` combines one-dimensional differences along each coordinate axis,
/// weighted by the field components at the node. `Transport` differences
/// along the field itself: `(u(p + eta X(p)) - u(p)) / eta`, with
/// `eta = h_min`; off-lattice targets are read by periodic trigonometric
/// interpolation along one plain periodic axis. For constant axis-aligned
/// unit fields the two coincide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    #[default]
    Axis,
    Transport,
}

/// Trigonometric interpolation weight of lattice sample m for the real
/// position m + s on an n-periodic axis (Nyquist mode taken as a cosine).
pub fn periodic_kernel(s: f64, n: usize) -> f64 {
    let nf = n as f64;
    let half = n / 2;
    let mut acc = 1.0;
    let top = if n % 2 == 0 { half - 1 } else { half };
    for m in 1..=top {
        acc += 2.0 * (2.0 * PI * m as f64 * s / nf).cos();
    }
    if n % 2 == 0 {
        acc += (PI * s).cos();
    }
    acc / nf
}

const INTEGER_TOL: f64 = 1e-9;

/// Axis-difference discretization of X.
pub fn discretize_field(
    x: &VectorField,
    grid: &Grid,
    scheme: DiffScheme,
) -> Result<CsrMatrix, AssemblyError> {
    check_dim(x, grid)?;
    let comps: Vec<_> = x.components().iter().map(|c| c.compile()).collect();
    let n = grid.n_nodes();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let pt = grid.point(p);
            let mut row = Vec::new();
            for (a, c) in comps.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let v = c.eval(&pt);
                if v == 0.0 {
                    continue;
                }
                let h = grid.spacing()[a];
                match scheme {
                    DiffScheme::Forward => {
                        row.push((p, -v / h));
                        if let Some(q) = grid.neighbor(p, a, 1) {
                            row.push((q, v / h));
                        }
                    }
                    DiffScheme::Backward => {
                        row.push((p, v / h));
                        if let Some(q) = grid.neighbor(p, a, -1) {
                            row.push((q, -v / h));
                        }
                    }
                    DiffScheme::Central => {
                        if let Some(q) = grid.neighbor(p, a, 1) {
                            row.push((q, v / (2.0 * h)));
                        }
                        if let Some(q) = grid.neighbor(p, a, -1) {
                            row.push((q, -v / (2.0 * h)));
                        }
                    }
                }
            }
            row
        })
        .collect();
    Ok(CsrMatrix::from_rows(n, rows))
}

fn check_dim(x: &VectorField, grid: &Grid) -> Result<(), AssemblyError> {
    if x.dim() != grid.ndim() {
        return Err(AssemblyError::Dimension {
            expected: grid.ndim(),
            found: x.dim(),
        });
    }
    Ok(())
}

// Interpolation row for the point p + sigma * eta * X(p), appended with weight `scale`.
fn transport_row(
    grid: &Grid,
    p: usize,
    disp: &[f64],
    scale: f64,
    row: &mut Vec<(usize, f64)>,
) -> Result<(), AssemblyError> {
    let base = grid.coords(p);
    let mut c: Vec<i64> = base.iter().map(|&v| v as i64).collect();
    let mut frac_axis = None;
    for (a, &d) in disp.iter().enumerate() {
        let r = d.round();
        if (d - r).abs() <= INTEGER_TOL {
            c[a] += r as i64;
        } else {
            if frac_axis.is_some() {
                return Err(AssemblyError::Transport(format!(
                    "off-lattice displacement along two axes at node {}",
                    p
                )));
            }
            if !grid.plain_periodic(a) {
                return Err(AssemblyError::Transport(format!(
                    "off-lattice displacement along axis {} which is not plain periodic",
                    a
                )));
            }
            frac_axis = Some(a);
        }
    }
    match frac_axis {
        None => {
            if let Some(q) = grid.resolve(&mut c, None) {
                row.push((q, scale));
            }
        }
        Some(f) => {
            let mut r = c[f] as f64 + disp[f];
            let q0 = grid
                .resolve(&mut c, Some((f, &mut r)))
                .expect("periodic axes always resolve");
            let nf = grid.dims()[f];
            let stride: usize = grid.dims()[..f].iter().product();
            let line_start = q0 - c[f] as usize * stride;
            for m in 0..nf {
                let w = periodic_kernel(r - m as f64, nf);
                row.push((line_start + m * stride, scale * w));
            }
        }
    }
    Ok(())
}

/// One-sided difference rows at the boundary layer of a Dirichlet grid.
///
/// The interior rows of D+ miss the edges leaving the lower boundary (and D-
/// those entering from the upper one). These extra rows, at the boundary
/// nodes adjacent to the interior, complete the form `sum |X u|^2` over all
/// cells. Returns the rows (over interior unknowns) and their node points.
pub fn boundary_rows(
    x: &VectorField,
    grid: &Grid,
    scheme: DiffScheme,
) -> Result<(Vec<Vec<(usize, f64)>>, Vec<Vec<f64>>), AssemblyError> {
    check_dim(x, grid)?;
    let mut rows = Vec::new();
    let mut pts = Vec::new();
    if grid.chart().is_periodic() || scheme == DiffScheme::Central {
        return Ok((rows, pts));
    }
    let dims = grid.dims().to_vec();
    let nd = dims.len();
    for (a, comp) in x.components().iter().enumerate() {
        if comp.is_zero() {
            continue;
        }
        let c = comp.compile();
        let h = grid.spacing()[a];
        // Lattice index of the ghost layer and of its interior neighbour.
        let (ghost, inner, sign) = match scheme {
            DiffScheme::Forward => (0usize, 0usize, 1.0),
            _ => (dims[a] + 1, dims[a] - 1, -1.0),
        };
        let face: usize = dims
            .iter()
            .enumerate()
            .filter(|&(b, _)| b != a)
            .map(|(_, &d)| d)
            .product();
        for f in 0..face {
            let mut rem = f;
            let mut coords = vec![0usize; nd];
            for b in 0..nd {
                if b == a {
                    continue;
                }
                coords[b] = rem % dims[b];
                rem /= dims[b];
            }
            let pt: Vec<f64> = (0..nd)
                .map(|b| {
                    let lattice = if b == a { ghost } else { coords[b] + 1 };
                    grid.origin()[b] + lattice as f64 * grid.spacing()[b]
                })
                .collect();
            let v = c.eval(&pt);
            coords[a] = inner;
            let q = grid.index(&coords);
            rows.push(if v == 0.0 {
                Vec::new()
            } else {
                vec![(q, sign * v / h)]
            });
            pts.push(pt);
        }
    }
    Ok((rows, pts))
}

/// Transport-difference discretization of X.
pub fn discretize_transport(
    x: &VectorField,
    grid: &Grid,
    scheme: DiffScheme,
) -> Result<CsrMatrix, AssemblyError> {
    check_dim(x, grid)?;
    let f = x.compile();
    let eta = grid.h_min();
    let n = grid.n_nodes();
    let rows: Result<Vec<Vec<(usize, f64)>>, AssemblyError> = (0..n)
        .into_par_iter()
        .map(|p| {
            let pt = grid.point(p);
            let v = f.eval(&pt);
            let mut row = Vec::new();
            if v.iter().all(|&c| c == 0.0) {
                return Ok(row);
            }
            let fwd: Vec<f64> = v
                .iter()
                .zip(grid.spacing())
                .map(|(c, h)| eta * c / h)
                .collect();
            let bwd: Vec<f64> = fwd.iter().map(|d| -d).collect();
            match scheme {
                DiffScheme::Forward => {
                    transport_row(grid, p, &fwd, 1.0 / eta, &mut row)?;
                    row.push((p, -1.0 / eta));
                }
                DiffScheme::Backward => {
                    row.push((p, 1.0 / eta));
                    transport_row(grid, p, &bwd, -1.0 / eta, &mut row)?;
                }
                DiffScheme::Central => {
                    transport_row(grid, p, &fwd, 0.5 / eta, &mut row)?;
                    transport_row(grid, p, &bwd, -0.5 / eta, &mut row)?;
                }
            }
            Ok(row)
        })
        .collect();
    Ok(CsrMatrix::from_rows(n, rows?))
}

pub fn discretize(
    x: &VectorField,
    grid: &Grid,
    stencil: Stencil,
    scheme: DiffScheme,
) -> Result<CsrMatrix, AssemblyError> {
    match stencil {
        Stencil::Axis => discretize_field(x, grid, scheme),
        Stencil::Transport => discretize_transport(x, grid, scheme),
    }
}
