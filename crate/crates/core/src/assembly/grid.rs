use serde::{Deserialize, Serialize};

use super::AssemblyError;

/// Chart classes with their boundary identification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartSpec {
    /// Periodic box `prod [0, L_a)`.
    Torus { lengths: Vec<f64> },
    /// Unit-cube fundamental domain of the Heisenberg group modulo the integer
    /// lattice, law (a,b,c)(x,y,z) = (a+x, b+y, c+z+ay).
    Nilmanifold3,
    /// Open box `prod (0, L_a)` with homogeneous Dirichlet data.
    Box { lengths: Vec<f64> },
}

impl ChartSpec {
    pub fn dim(&self) -> usize {
        match self {
            ChartSpec::Torus { lengths } | ChartSpec::Box { lengths } => lengths.len(),
            ChartSpec::Nilmanifold3 => 3,
        }
    }

    pub fn lengths(&self) -> Vec<f64> {
        match self {
            ChartSpec::Torus { lengths } | ChartSpec::Box { lengths } => lengths.clone(),
            ChartSpec::Nilmanifold3 => vec![1.0; 3],
        }
    }

    pub fn is_periodic(&self) -> bool {
        !matches!(self, ChartSpec::Box { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChartSpec::Torus { .. } => "torus",
            ChartSpec::Nilmanifold3 => "nilmanifold3",
            ChartSpec::Box { .. } => "box",
        }
    }
}

/// Uniform lattice on a chart. Node (c_0, .., c_{n-1}) has flat index
/// `sum c_a * stride_a` with axis 0 fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    chart: ChartSpec,
    resolution: Vec<usize>,
    dims: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(chart: ChartSpec, resolution: &[usize]) -> Result<Self, AssemblyError> {
        let n = chart.dim();
        if resolution.len() != n {
            return Err(AssemblyError::Resolution(format!(
                "expected {} per-axis resolutions, got {}",
                n,
                resolution.len()
            )));
        }
        if let Some(r) = resolution.iter().find(|&&r| r < 4) {
            return Err(AssemblyError::Resolution(format!(
                "resolution {} below 4",
                r
            )));
        }
        let lengths = chart.lengths();
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(AssemblyError::Resolution(
                "chart lengths must be positive".into(),
            ));
        }
        if matches!(chart, ChartSpec::Nilmanifold3) && resolution[1] != resolution[2] {
            return Err(AssemblyError::Nilmanifold {
                n2: resolution[1],
                n3: resolution[2],
            });
        }
        let dims: Vec<usize> = match chart {
            ChartSpec::Box { .. } => resolution.iter().map(|r| r - 1).collect(),
            _ => resolution.to_vec(),
        };
        let spacing = lengths
            .iter()
            .zip(resolution)
            .map(|(l, &r)| l / r as f64)
            .collect();
        let mut strides = vec![1; n];
        for a in 1..n {
            strides[a] = strides[a - 1] * dims[a - 1];
        }
        Ok(Grid {
            chart,
            resolution: resolution.to_vec(),
            dims,
            spacing,
            origin: vec![0.0; n],
            strides,
        })
    }

    /// Same lattice with a shifted chart origin. On the nilmanifold only the
    /// x and z origins may move (the twist depends on the y value).
    pub fn with_origin(mut self, origin: Vec<f64>) -> Result<Self, AssemblyError> {
        if origin.len() != self.ndim() {
            return Err(AssemblyError::Resolution(
                "origin dimension mismatch".into(),
            ));
        }
        if matches!(self.chart, ChartSpec::Nilmanifold3) && origin[1] != 0.0 {
            return Err(AssemblyError::Resolution(
                "nilmanifold origin must have y = 0".into(),
            ));
        }
        self.origin = origin;
        Ok(self)
    }

    pub fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    /// Node counts per axis.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn h_max(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn n_nodes(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn coords(&self, idx: usize) -> Vec<usize> {
        let mut rem = idx;
        self.dims
            .iter()
            .map(|&d| {
                let c = rem % d;
                rem /= d;
                c
            })
            .collect()
    }

    pub fn index(&self, c: &[usize]) -> usize {
        c.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let off = if self.chart.is_periodic() { 0.0 } else { 1.0 };
        self.coords(idx)
            .iter()
            .enumerate()
            .map(|(a, &c)| self.origin[a] + (c as f64 + off) * self.spacing[a])
            .collect()
    }

    /// Whether fractional displacements along `axis` may be resolved by
    /// periodic interpolation.
    pub fn plain_periodic(&self, axis: usize) -> bool {
        match self.chart {
            ChartSpec::Torus { .. } => true,
            ChartSpec::Nilmanifold3 => axis == 2,
            ChartSpec::Box { .. } => false,
        }
    }

    /// Reduce unreduced lattice coordinates to a node; `frac_z` carries a
    /// real-valued coordinate along the nilmanifold twist axis (cells) that
    /// must follow the twist. Returns None for Dirichlet-excluded targets.
    pub fn resolve(&self, c: &mut [i64], mut frac: Option<(usize, &mut f64)>) -> Option<usize> {
        match self.chart {
            ChartSpec::Box { .. } => {
                if c.iter()
                    .zip(&self.dims)
                    .any(|(&v, &d)| v < 0 || v >= d as i64)
                {
                    return None;
                }
            }
            ChartSpec::Torus { .. } => {
                for (v, &d) in c.iter_mut().zip(&self.dims) {
                    *v = v.rem_euclid(d as i64);
                }
            }
            ChartSpec::Nilmanifold3 => {
                let n1 = self.dims[0] as i64;
                // (x,y,z) ~ (x-1, y, z-y): crossing x = 1 moves z by -y, i.e. by -j cells.
                let wraps = c[0].div_euclid(n1);
                if wraps != 0 {
                    c[0] -= wraps * n1;
                    match frac.as_mut() {
                        Some((2, z)) => **z -= (wraps * c[1]) as f64,
                        _ => c[2] -= wraps * c[1],
                    }
                }
                c[1] = c[1].rem_euclid(self.dims[1] as i64);
                c[2] = c[2].rem_euclid(self.dims[2] as i64);
            }
        }
        Some(
            c.iter()
                .zip(&self.strides)
                .map(|(&v, &s)| v as usize * s)
                .sum(),
        )
    }

    /// Neighbour `steps` cells away along `axis`.
    pub fn neighbor(&self, idx: usize, axis: usize, steps: i64) -> Option<usize> {
        let mut c: Vec<i64> = self.coords(idx).iter().map(|&v| v as i64).collect();
        c[axis] += steps;
        self.resolve(&mut c, None)
    }
}

/// Validates a resolution and builds the lattice.
pub fn build_grid(chart: ChartSpec, resolution: &[usize]) -> Result<Grid, AssemblyError> {
    Grid::new(chart, resolution)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_wrap() {
        let g = build_grid(
            ChartSpec::Torus {
                lengths: vec![6.28, 6.28],
            },
            &[4, 4],
        )
        .unwrap();
        assert_eq!(g.n_nodes(), 16);
        let p = g.index(&[3, 2]);
        assert_eq!(g.neighbor(p, 0, 1), Some(g.index(&[0, 2])));
        assert_eq!(g.neighbor(g.index(&[0, 0]), 1, -1), Some(g.index(&[0, 3])));
    }

    #[test]
    fn nilmanifold_twist() {
        let g = build_grid(ChartSpec::Nilmanifold3, &[8, 8, 8]).unwrap();
        assert_eq!(
            g.neighbor(g.index(&[7, 3, 5]), 0, 1),
            Some(g.index(&[0, 3, 2]))
        );
        assert_eq!(
            g.neighbor(g.index(&[0, 3, 2]), 0, -1),
            Some(g.index(&[7, 3, 5]))
        );
        assert!(build_grid(ChartSpec::Nilmanifold3, &[8, 8, 6]).is_err());
    }

    #[test]
    fn box_interior() {
        let g = build_grid(
            ChartSpec::Box {
                lengths: vec![std::f64::consts::PI],
            },
            &[8],
        )
        .unwrap();
        assert_eq!(g.n_nodes(), 7);
        assert_eq!(g.neighbor(0, 0, -1), None);
        assert!((g.point(0)[0] - std::f64::consts::PI / 8.0).abs() < 1e-15);
        assert!(build_grid(ChartSpec::Box { lengths: vec![1.0] }, &[3]).is_err());
    }
}
