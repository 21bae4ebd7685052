//! TOML run configuration. Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::registry::lookup;
use super::HarnessError;
use crate::assembly::{psi_transform, ChartSpec, OperatorTerms, Scenario, Stencil};
use crate::asymptotics::verify::{Thresholds, TraceChoice, VerifyOptions};
use crate::ccball::ClassNorm;
use crate::vfalgebra::{parse_coeff, parse_field};

/// Geometric grid `lo .. hi` with `count` points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeomGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GeomGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.lo];
        }
        (0..self.count)
            .map(|i| self.lo * (self.hi / self.lo).powf(i as f64 / (self.count - 1) as f64))
            .collect()
    }

    fn validate(&self, what: &str) -> Result<(), HarnessError> {
        if !(self.lo > 0.0 && self.hi >= self.lo && self.count >= 1) {
            return Err(HarnessError::Config(format!(
                "{what}: need 0 < lo <= hi and count >= 1"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommutatorConfig {
    pub i: usize,
    pub j: usize,
    pub c: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiConfig {
    pub psi: String,
    pub fields: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Torus,
    Nilmanifold3,
    Box,
}

/// Inline scenario in the field-expression grammar. Field indices in
/// `commutator` are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub chart: ChartKind,
    /// Side lengths (torus and box); default 2 pi per axis for tori, pi for boxes.
    #[serde(default)]
    pub lengths: Option<Vec<f64>>,
    /// Chart dimension when `lengths` is absent.
    #[serde(default)]
    pub dim: Option<usize>,
    pub fields: Vec<String>,
    #[serde(default)]
    pub commutator: Vec<CommutatorConfig>,
    #[serde(default)]
    pub drift: Vec<String>,
    #[serde(default = "zero")]
    pub potential: String,
    #[serde(default = "one")]
    pub density: String,
    #[serde(default = "yes")]
    pub self_adjoint: bool,
    #[serde(default)]
    pub stencil: Stencil,
    #[serde(default)]
    pub psi: Option<PsiConfig>,
}

fn zero() -> String {
    "0".into()
}
fn one() -> String {
    "1".into()
}
fn yes() -> bool {
    true
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<Scenario, HarnessError> {
        let bad = |e: String| HarnessError::Config(format!("scenario {}: {e}", self.id));
        let chart = match self.chart {
            ChartKind::Nilmanifold3 => ChartSpec::Nilmanifold3,
            ChartKind::Torus | ChartKind::Box => {
                let side = if self.chart == ChartKind::Torus {
                    2.0 * PI
                } else {
                    PI
                };
                let lengths = match (&self.lengths, self.dim) {
                    (Some(l), _) => l.clone(),
                    (None, Some(d)) => vec![side; d],
                    (None, None) => return Err(bad("give `lengths` or `dim`".into())),
                };
                if lengths.is_empty() || lengths.iter().any(|l| !(*l > 0.0)) {
                    return Err(bad("lengths must be positive".into()));
                }
                if self.chart == ChartKind::Torus {
                    ChartSpec::Torus { lengths }
                } else {
                    ChartSpec::Box { lengths }
                }
            }
        };
        let n = chart.dim();
        let field = |s: &String| parse_field(s, n).map_err(|e| bad(e.to_string()));
        let coeff = |s: &String| parse_coeff(s, n).map_err(|e| bad(e.to_string()));
        let fields = self
            .fields
            .iter()
            .map(field)
            .collect::<Result<Vec<_>, _>>()?;
        let mut sc = Scenario::new(&self.id, chart, fields);
        for c in &self.commutator {
            if c.i == 0 || c.j == 0 {
                return Err(bad("commutator indices are 1-based".into()));
            }
            sc.terms.commutator.push((c.i - 1, c.j - 1, coeff(&c.c)?));
        }
        sc.terms.drift = self.drift.iter().map(coeff).collect::<Result<_, _>>()?;
        sc.potential = coeff(&self.potential)?;
        sc.density = coeff(&self.density)?;
        sc.self_adjoint_claim = self.self_adjoint;
        sc.stencil = self.stencil;
        if let Some(p) = &self.psi {
            let lp = p.fields.iter().map(field).collect::<Result<Vec<_>, _>>()?;
            sc = psi_transform(&sc, OperatorTerms::sum_of_squares(lp), coeff(&p.psi)?)
                .map_err(|e| bad(e.to_string()))?;
            sc.id = self.id.clone();
        }
        sc.validate().map_err(|e| bad(e.to_string()))?;
        Ok(sc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BallConfig {
    /// Ball center; defaults to the chart origin.
    pub center: Option<Vec<f64>>,
    pub class: ClassNorm,
    pub deltas: GeomGrid,
    pub paths: usize,
    pub steps: usize,
    pub pieces: usize,
}

impl Default for BallConfig {
    fn default() -> Self {
        BallConfig {
            center: None,
            class: ClassNorm::C2,
            deltas: GeomGrid {
                lo: 0.05,
                hi: 0.2,
                count: 5,
            },
            paths: 100_000,
            steps: 32,
            pieces: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Registry id; exclusive with `inline`.
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub inline: Option<ScenarioConfig>,
    #[serde(default)]
    pub resolution: Option<Vec<usize>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Explicit lambda grid for `spectrum`; otherwise the counting window is searched.
    #[serde(default)]
    pub lambda_grid: Option<GeomGrid>,
    /// Explicit t grid for `trace`; otherwise the trace window is used.
    #[serde(default)]
    pub t_grid: Option<GeomGrid>,
    /// Number of lowest eigenvalues written by `spectrum`.
    #[serde(default = "default_eigs")]
    pub eigs: usize,
    #[serde(default)]
    pub trace_method: TraceChoice,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub ball: BallConfig,
}

/// Sampling sizes for `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub audit_grid: Vec<usize>,
    pub count_samples: usize,
    pub trace_times: usize,
    pub probes: usize,
    pub diag_nodes: usize,
    pub diag_times: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        let d = VerifyOptions::default();
        VerifySection {
            audit_grid: d.audit_grid,
            count_samples: d.count_samples,
            trace_times: d.trace_times,
            probes: d.probes,
            diag_nodes: d.diag_nodes,
            diag_times: d.diag_times,
        }
    }
}

fn default_seed() -> u64 {
    1
}
fn default_workers() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}
fn default_eigs() -> usize {
    50
}

/// A validated configuration with its scenario resolved.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub scenario: Scenario,
    pub resolution: Vec<usize>,
    pub thresholds: Thresholds,
}

impl ResolvedRun {
    pub fn verify_options(&self) -> VerifyOptions {
        let v = &self.config.verify;
        VerifyOptions {
            resolution: self.resolution.clone(),
            audit_grid: v.audit_grid.clone(),
            count_samples: v.count_samples,
            trace_times: v.trace_times,
            probes: v.probes,
            seed: self.config.seed,
            diag_nodes: v.diag_nodes,
            diag_times: v.diag_times,
            trace_method: self.config.trace_method,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Config for a registry id with every other key at its default.
    pub fn for_scenario(id: &str) -> RunConfig {
        RunConfig::parse(&format!("scenario = \"{id}\"")).expect("minimal config parses")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Schema checks and scenario resolution; nothing is computed.
    pub fn resolve(&self) -> Result<ResolvedRun, HarnessError> {
        if self.workers == 0 {
            return Err(HarnessError::Config("workers must be >= 1".into()));
        }
        if let Some(g) = &self.lambda_grid {
            g.validate("lambda_grid")?;
        }
        if let Some(g) = &self.t_grid {
            g.validate("t_grid")?;
        }
        self.ball.deltas.validate("ball.deltas")?;
        let (scenario, default_res, th) = match (&self.scenario, &self.inline) {
            (Some(id), None) => {
                let e = lookup(id)
                    .ok_or_else(|| HarnessError::Config(format!("unknown scenario id `{id}`")))?;
                (
                    e.scenario(),
                    Some(e.resolution.clone()),
                    e.thresholds.clone(),
                )
            }
            (None, Some(s)) => (s.build()?, None, Thresholds::default()),
            _ => {
                return Err(HarnessError::Config(
                    "give exactly one of `scenario` and `inline`".into(),
                ))
            }
        };
        let resolution = match (&self.resolution, default_res) {
            (Some(r), _) => r.clone(),
            (None, Some(r)) => r,
            (None, None) => {
                return Err(HarnessError::Config(
                    "inline scenarios need `resolution`".into(),
                ))
            }
        };
        if resolution.len() != scenario.dim() || resolution.iter().any(|&n| n < 4) {
            return Err(HarnessError::Config(format!(
                "resolution needs {} entries, each >= 4",
                scenario.dim()
            )));
        }
        let v = &self.verify;
        if v.probes < 8 || v.count_samples < 6 || v.trace_times < 6 {
            return Err(HarnessError::Config(
                "verify needs probes >= 8, count_samples >= 6, trace_times >= 6".into(),
            ));
        }
        Ok(ResolvedRun {
            config: self.clone(),
            scenario,
            resolution,
            thresholds: self.thresholds.clone().unwrap_or(th),
        })
    }
}
