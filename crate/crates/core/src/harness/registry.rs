//! Built-in scenarios.

use std::f64::consts::PI;

use serde::Serialize;

use crate::assembly::{psi_transform, ChartSpec, OperatorTerms, Scenario, Stencil};
use crate::asymptotics::verify::Thresholds;
use crate::asymptotics::TheoryKind;
use crate::vfalgebra::{parse_coeff, parse_field};

#[derive(Clone, Debug, Serialize)]
pub struct RegistryEntry {
    pub id: &'static str,
    pub description: &'static str,
    pub chart: ChartSpec,
    pub fields: Vec<&'static str>,
    pub potential: &'static str,
    pub stencil: Stencil,
    /// psi and the fields of L' for a T_psi perturbation.
    pub psi: Option<(&'static str, Vec<&'static str>)>,
    pub expected_q: usize,
    pub expected_tau: usize,
    pub theory: TheoryKind,
    /// Desk-scale resolution used by `verify` when the config gives none.
    pub resolution: Vec<usize>,
    pub thresholds: Thresholds,
}

impl RegistryEntry {
    pub fn scenario(&self) -> Scenario {
        let n = self.chart.dim();
        let fields = self
            .fields
            .iter()
            .map(|f| parse_field(f, n).expect("registry field parses"))
            .collect();
        let mut sc = Scenario::new(self.id, self.chart.clone(), fields);
        sc.potential = parse_coeff(self.potential, n).expect("registry potential parses");
        sc.stencil = self.stencil;
        if let Some((psi, lp)) = &self.psi {
            let lp = lp
                .iter()
                .map(|f| parse_field(f, n).expect("registry field parses"))
                .collect();
            let psi = parse_coeff(psi, n).expect("registry psi parses");
            sc = psi_transform(&sc, OperatorTerms::sum_of_squares(lp), psi)
                .expect("registry psi transform");
            sc.id = self.id.to_string();
        }
        sc
    }
}

fn torus(n: usize) -> ChartSpec {
    ChartSpec::Torus {
        lengths: vec![2.0 * PI; n],
    }
}

pub fn registry() -> Vec<RegistryEntry> {
    let base = Thresholds::default();
    vec![
        RegistryEntry {
            id: "torus2-elliptic",
            description: "flat Laplacian on the square torus of side 2 pi",
            chart: torus(2),
            fields: vec!["d/dx", "d/dy"],
            potential: "0",
            stencil: Stencil::Axis,
            psi: None,
            expected_q: 2,
            expected_tau: 1,
            theory: TheoryKind::EllipticClosedForm,
            resolution: vec![128, 128],
            thresholds: base.clone(),
        },
        RegistryEntry {
            id: "torus3-elliptic",
            description: "flat Laplacian on the cubic torus of side 2 pi",
            chart: torus(3),
            fields: vec!["d/dx", "d/dy", "d/dz"],
            potential: "0",
            stencil: Stencil::Axis,
            psi: None,
            expected_q: 3,
            expected_tau: 1,
            theory: TheoryKind::EllipticClosedForm,
            resolution: vec![48, 48, 48],
            thresholds: Thresholds {
                count_exponent_tol: 0.07,
                trace_exponent_tol: 0.07,
                coefficient_rel: 0.12,
                ..base.clone()
            },
        },
        RegistryEntry {
            id: "heisenberg-nilmanifold",
            description: "Heisenberg sublaplacian on the integer-lattice nilmanifold",
            chart: ChartSpec::Nilmanifold3,
            fields: vec!["d/dx", "d/dy + x*d/dz"],
            potential: "0",
            stencil: Stencil::Transport,
            psi: None,
            expected_q: 4,
            expected_tau: 2,
            theory: TheoryKind::HeisenbergOracle,
            resolution: vec![32, 32, 32],
            thresholds: Thresholds {
                count_exponent_tol: 0.1,
                trace_exponent_tol: 0.1,
                coefficient_rel: 0.25,
                ..base.clone()
            },
        },
        RegistryEntry {
            id: "grushin-torus2",
            description: "Grushin-type operator -dx^2 - sin(x)^2 dy^2 on the square torus",
            chart: torus(2),
            fields: vec!["d/dx", "sin(x)*d/dy"],
            potential: "0",
            stencil: Stencil::Axis,
            psi: None,
            expected_q: 3,
            expected_tau: 2,
            theory: TheoryKind::ZeroMeasure,
            resolution: vec![128, 128],
            thresholds: base.clone(),
        },
        RegistryEntry {
            id: "martinet-torus3",
            description: "Martinet-type distribution d/dx, d/dy + sin(x)^2 d/dz on the cubic torus",
            chart: torus(3),
            fields: vec!["d/dx", "d/dy + sin(x)^2*d/dz"],
            potential: "0",
            stencil: Stencil::Transport,
            psi: None,
            expected_q: 5,
            expected_tau: 3,
            theory: TheoryKind::ZeroMeasure,
            resolution: vec![24, 24, 24],
            thresholds: base.clone(),
        },
        RegistryEntry {
            id: "dirichlet-box2",
            description: "Dirichlet Laplacian on the square (0, pi)^2",
            chart: ChartSpec::Box {
                lengths: vec![PI; 2],
            },
            fields: vec!["d/dx", "d/dy"],
            potential: "0",
            stencil: Stencil::Axis,
            psi: None,
            expected_q: 2,
            expected_tau: 1,
            theory: TheoryKind::EllipticClosedForm,
            resolution: vec![256, 256],
            thresholds: Thresholds {
                count_exponent_tol: 0.07,
                trace_exponent_tol: 0.07,
                ..base.clone()
            },
        },
        RegistryEntry {
            id: "psi-mixed",
            description:
                "Grushin operator plus sin(x)^4 times the flat Laplacian on the 2 pi torus (T_psi)",
            chart: torus(2),
            fields: vec!["d/dx", "sin(x)*d/dy"],
            potential: "0",
            stencil: Stencil::Axis,
            psi: Some(("sin(x)^2", vec!["d/dx", "d/dy"])),
            expected_q: 3,
            expected_tau: 2,
            theory: TheoryKind::ZeroMeasure,
            resolution: vec![128, 128],
            thresholds: base,
        },
    ]
}

pub fn lookup(id: &str) -> Option<RegistryEntry> {
    registry().into_iter().find(|e| e.id == id)
}
