//! Stage pipeline and artifact tree.
//!
//! Every stage writes into `out/` and finishes with `manifest.json`, which
//! carries the full resolved config so any artifact can be regenerated.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::ResolvedRun;
use super::registry::registry;
use super::HarnessError;
use crate::assembly::{assemble_operator, build_grid, ChartSpec, Grid, OperatorPencil};
use crate::asymptotics::verify::{
    count_study, preferred_traces, run_audit, trace_curve, trace_times, verify, VerifyOutcome,
};
use crate::asymptotics::{fit_power_law, karamata_check, theoretical_coefficient, WindowPolicy};
use crate::ccball::{doubling_exponent, lambda_compare, sample_ball, Domain, SampleParams};
use crate::spectral::lanczos::lowest_eigs_ctx;
use crate::spectral::trace::traces_to_csv;
use crate::spectral::{dense_oracle, CountRecord, DiagProbe, SpectralContext, DENSE_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Audit,
    Assemble,
    Spectrum,
    Trace,
    Ball,
    Fit,
    Verify,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Audit => "audit",
            Stage::Assemble => "assemble",
            Stage::Spectrum => "spectrum",
            Stage::Trace => "trace",
            Stage::Ball => "ball",
            Stage::Fit => "fit",
            Stage::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub out: PathBuf,
    pub artifacts: Vec<String>,
    pub cache_hit: bool,
    /// Verdict outcome for `verify`; `None` for the other stages.
    pub pass: Option<bool>,
    pub summary: String,
}

impl StageReport {
    pub fn exit_code(&self) -> i32 {
        if self.pass == Some(false) {
            1
        } else {
            0
        }
    }
}

/// One line per registry entry: id, chart, Q_L, tau_L, coefficient kind.
pub fn list_scenarios() -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} {:<13} {:>3} {:>5}  {}",
        "id", "chart", "Q_L", "tau_L", "coefficient"
    );
    for e in registry() {
        let _ = writeln!(
            s,
            "{:<24} {:<13} {:>3} {:>5}  {}",
            e.id,
            e.chart.name(),
            e.expected_q,
            e.expected_tau,
            e.theory.name()
        );
    }
    s
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<(), HarnessError> {
        fs::write(self.dir.join(name), content)?;
        self.written.push((
            name.to_string(),
            hex::encode(Sha256::digest(content.as_bytes())),
        ));
        Ok(())
    }

    fn record(&mut self, name: &str) -> Result<(), HarnessError> {
        let bytes = fs::read(self.dir.join(name))?;
        self.written
            .push((name.to_string(), hex::encode(Sha256::digest(&bytes))));
        Ok(())
    }
}

fn compute<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Compute(e.to_string())
}

pub fn counts_csv(records: &[CountRecord]) -> String {
    let mut s = String::from("lambda,count\n");
    for r in records {
        let _ = writeln!(s, "{:.17e},{}", r.lambda, r.count);
    }
    s
}

fn diag_csv(probes: &[DiagProbe]) -> String {
    let mut s = String::from("node,t,value\n");
    for p in probes {
        let _ = writeln!(s, "{},{:.17e},{:.17e}", p.node, p.t, p.value);
    }
    s
}

/// Two-column numeric CSV with a header line.
fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::Compute(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut it = line.split(',');
        let parse = |v: Option<&str>| v.and_then(|s| s.trim().parse::<f64>().ok());
        match (parse(it.next()), parse(it.next())) {
            (Some(a), Some(b)) => out.push((a, b)),
            _ => {
                return Err(HarnessError::Compute(format!(
                    "{}:{}: malformed row",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(compute)
}

/// Content hash of everything that determines a verify outcome.
pub fn verify_key(run: &ResolvedRun) -> String {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update(run.scenario.describe().as_bytes());
    h.update(
        serde_json::to_string(&run.verify_options())
            .expect("options serialize")
            .as_bytes(),
    );
    h.update(
        serde_json::to_string(&run.thresholds)
            .expect("thresholds serialize")
            .as_bytes(),
    );
    hex::encode(h.finalize())
}

fn assemble(run: &ResolvedRun) -> Result<(Grid, OperatorPencil), HarnessError> {
    let grid = build_grid(run.scenario.chart.clone(), &run.resolution).map_err(compute)?;
    let pencil = assemble_operator(&run.scenario, &grid).map_err(compute)?;
    Ok((grid, pencil))
}

/// Run one stage; errors before any computation leave no artifacts.
pub fn run_stage(stage: Stage, run: &ResolvedRun) -> Result<StageReport, HarnessError> {
    let cfg = &run.config;
    let pool = pool(cfg.workers)?;
    let mut art = Artifacts::new(&cfg.out)?;
    let mut report = StageReport {
        stage,
        out: cfg.out.clone(),
        artifacts: Vec::new(),
        cache_hit: false,
        pass: None,
        summary: String::new(),
    };
    pool.install(|| dispatch(stage, run, &mut art, &mut report))?;
    let manifest = json!({
        "tool": "hypoweyl",
        "version": env!("CARGO_PKG_VERSION"),
        "stage": stage.name(),
        "config": cfg.to_toml(),
        "config_hash": hex::encode(Sha256::digest(cfg.to_toml().as_bytes())),
        "scenario": run.scenario.describe(),
        "resolution": run.resolution,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "cache": if stage == Stage::Verify { if report.cache_hit { "hit" } else { "miss" } } else { "none" },
        "artifacts": art.written.iter().map(|(n, h)| json!({"name": n, "sha256": h})).collect::<Vec<_>>(),
    });
    art.write(
        "manifest.json",
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    report.artifacts = art.written.iter().map(|(n, _)| n.clone()).collect();
    Ok(report)
}

fn dispatch(
    stage: Stage,
    run: &ResolvedRun,
    art: &mut Artifacts,
    report: &mut StageReport,
) -> Result<(), HarnessError> {
    let cfg = &run.config;
    let sc = &run.scenario;
    let audit_grid = &cfg.verify.audit_grid;
    match stage {
        Stage::Audit => {
            let audit = run_audit(sc, audit_grid, cfg.seed).map_err(HarnessError::Compute)?;
            art.write(
                "audit.json",
                &serde_json::to_string_pretty(&audit).map_err(compute)?,
            )?;
            art.write("audit.csv", &audit.to_csv())?;
            let theory = theoretical_coefficient(sc, &audit);
            report.summary = format!(
                "Q_L = {}, tau_L = {}, coefficient kind {}, {} failing points",
                audit.q_l,
                audit.tau_l,
                theory.kind.name(),
                audit.failures.len()
            );
        }
        Stage::Assemble => {
            let (_, pencil) = assemble(run)?;
            pencil
                .write_triplets(&art.dir.join("pencil.txt"))
                .map_err(compute)?;
            art.record("pencil.txt")?;
            pencil
                .write_mass(&art.dir.join("mass.txt"))
                .map_err(compute)?;
            art.record("mass.txt")?;
            art.write(
                "pencil.json",
                &serde_json::to_string_pretty(&pencil.meta).map_err(compute)?,
            )?;
            report.summary = format!(
                "dim {}, nnz {}, symmetric {} (asymmetry {:.3e})",
                pencil.dim(),
                pencil.meta.nnz,
                pencil.symmetric,
                pencil.asymmetry
            );
        }
        Stage::Spectrum => {
            let (grid, pencil) = assemble(run)?;
            if !pencil.symmetric {
                if pencil.dim() > DENSE_CAP {
                    return Err(HarnessError::Compute(format!(
                        "non-symmetric pencil of dimension {} exceeds the dense cap {DENSE_CAP}",
                        pencil.dim()
                    )));
                }
                let d = dense_oracle(&pencil).map_err(compute)?;
                let mut s = String::from("re,im\n");
                for (re, im) in d.complex.clone().unwrap_or_default() {
                    let _ = writeln!(s, "{re:.17e},{im:.17e}");
                }
                art.write("spectrum.csv", &s)?;
                report.summary = format!(
                    "dense spectrum of a non-symmetric pencil, {} eigenvalues",
                    pencil.dim()
                );
                return Ok(());
            }
            let ctx = SpectralContext::new(&pencil).map_err(compute)?;
            let k = cfg.eigs.min(pencil.dim().saturating_sub(1) / 2);
            if k > 0 {
                let sp = lowest_eigs_ctx(&ctx, k, cfg.seed).map_err(compute)?;
                art.write("spectrum.csv", &sp.to_csv())?;
            }
            let records = match &cfg.lambda_grid {
                Some(g) => ctx.counts(&g.points()).map_err(compute)?,
                None => {
                    let audit =
                        run_audit(sc, audit_grid, cfg.seed).map_err(HarnessError::Compute)?;
                    let theory = theoretical_coefficient(sc, &audit);
                    let p = audit.q_l as f64 / 2.0;
                    count_study(
                        &ctx,
                        &grid,
                        p,
                        audit.tau_l,
                        theory.spectral_coeff,
                        cfg.verify.count_samples,
                    )
                    .map_err(HarnessError::Compute)?
                    .records
                }
            };
            art.write("counts.csv", &counts_csv(&records))?;
            report.summary = format!("{k} lowest eigenvalues, {} counts", records.len());
        }
        Stage::Trace => {
            let (grid, pencil) = assemble(run)?;
            if !pencil.symmetric {
                return Err(HarnessError::Compute(
                    "heat traces need a symmetric pencil".into(),
                ));
            }
            let ctx = SpectralContext::new(&pencil).map_err(compute)?;
            let audit = run_audit(sc, audit_grid, cfg.seed).map_err(HarnessError::Compute)?;
            let p = audit.q_l as f64 / 2.0;
            let theory = theoretical_coefficient(sc, &audit);
            let fitted = count_study(
                &ctx,
                &grid,
                p,
                audit.tau_l,
                theory.spectral_coeff,
                cfg.verify.count_samples,
            )
            .and_then(|study| {
                let samples: Vec<(f64, f64)> = study
                    .records
                    .iter()
                    .map(|r| (r.lambda, r.count as f64))
                    .collect();
                let policy = WindowPolicy::Counting {
                    dim: pencil.dim(),
                    lambda_cap: Some(study.window.1),
                };
                fit_power_law(&samples, &policy)
                    .map(|f| (f, study.window.1))
                    .map_err(|e| e.to_string())
            });
            let mut notes = Vec::new();
            let opts = run.verify_options();
            let (ts, traces, agreement) = match (&cfg.t_grid, fitted) {
                (None, Err(e)) => return Err(HarnessError::Compute(e)),
                (None, Ok((count_fit, lam_hi))) => {
                    let ts = trace_times(&count_fit, p, lam_hi, cfg.verify.trace_times)
                        .map_err(HarnessError::Compute)?
                        .1;
                    let (tr, a) = trace_curve(&ctx, &ts, Some(&count_fit), p, &opts, &mut notes)
                        .map_err(HarnessError::Compute)?;
                    (ts, tr, a)
                }
                (Some(g), fitted) => {
                    let ts = g.points();
                    let count_fit = fitted.ok().map(|f| f.0);
                    let (tr, a) = trace_curve(&ctx, &ts, count_fit.as_ref(), p, &opts, &mut notes)
                        .map_err(HarnessError::Compute)?;
                    (ts, tr, a)
                }
            };
            art.write("trace.csv", &traces_to_csv(&traces))?;
            report.summary = format!("{} trace values at {} times", traces.len(), ts.len());
            if let Some(a) = agreement {
                let _ = write!(
                    report.summary,
                    ", eigsum/stochastic disagreement {a:.3} (units of 3 stderr)"
                );
            }
            for n in notes {
                let _ = write!(report.summary, "; {n}");
            }
        }
        Stage::Fit => {
            let grid = build_grid(sc.chart.clone(), &run.resolution).map_err(compute)?;
            let counts = read_pairs(&art.dir.join("counts.csv"))?;
            let count_fit = fit_power_law(
                &counts,
                &WindowPolicy::Counting {
                    dim: grid.n_nodes(),
                    lambda_cap: None,
                },
            )
            .map_err(compute)?;
            let mut fits = json!({ "count_fit": count_fit });
            let trace_path = art.dir.join("trace.csv");
            if trace_path.exists() {
                let raw = read_pairs(&trace_path)?;
                let mut ts: Vec<f64> = raw.iter().map(|r| r.0).collect();
                ts.dedup();
                let t_lo = ts.iter().cloned().fold(f64::INFINITY, f64::min);
                // The file lists stochastic rows first; keep the last row per t.
                let per_t: Vec<(f64, f64)> = ts
                    .iter()
                    .map(|&t| *raw.iter().rev().find(|r| r.0 == t).expect("time present"))
                    .collect();
                let trace_fit =
                    fit_power_law(&per_t, &WindowPolicy::Trace { t_lo }).map_err(compute)?;
                let th = &run.thresholds;
                let k = karamata_check(
                    &trace_fit,
                    &count_fit,
                    th.karamata_exponent_rel,
                    th.karamata_coefficient_rel,
                );
                fits["trace_fit"] = json!(trace_fit);
                fits["karamata"] = json!(k);
            }
            art.write(
                "fits.json",
                &serde_json::to_string_pretty(&fits).map_err(compute)?,
            )?;
            report.summary = format!(
                "count exponent {:.4}, coefficient {:.4}",
                count_fit.exponent, count_fit.coefficient
            );
        }
        Stage::Ball => {
            let b = &cfg.ball;
            let fields = sc.principal_fields();
            let center = b.center.clone().unwrap_or_else(|| match &sc.chart {
                ChartSpec::Box { lengths } => lengths.iter().map(|l| 0.5 * l).collect(),
                _ => vec![0.0; sc.dim()],
            });
            if center.len() != sc.dim() {
                return Err(HarnessError::Config(
                    "ball.center has the wrong dimension".into(),
                ));
            }
            let domain = Domain::from(&sc.chart);
            let params = SampleParams {
                n_paths: b.paths,
                n_steps: b.steps,
                pieces: b.pieces,
                seed: cfg.seed,
            };
            let range = (b.deltas.lo, b.deltas.hi);
            let fit = doubling_exponent(
                &center,
                &fields,
                b.class,
                range,
                b.deltas.count,
                &params,
                &domain,
            )
            .map_err(compute)?;
            let audit = run_audit(sc, audit_grid, cfg.seed).map_err(HarnessError::Compute)?;
            let ratio = lambda_compare(
                &center,
                &fields,
                audit.tau_l,
                range,
                b.deltas.count,
                &params,
                &domain,
            )
            .map_err(compute)?;
            let cloud = sample_ball(&center, b.deltas.lo, &fields, b.class, &params, &domain)
                .map_err(compute)?;
            art.write("cloud.csv", &cloud.to_csv())?;
            let j = json!({ "center": center, "class": b.class, "doubling": fit, "lambda_ratio": ratio, "discarded": cloud.discarded });
            art.write(
                "ball.json",
                &serde_json::to_string_pretty(&j).map_err(compute)?,
            )?;
            report.summary = format!(
                "doubling exponent {:.3} +- {:.3}; Lambda/volume max/min {:.3}",
                fit.exponent,
                fit.stderr,
                ratio.max / ratio.min
            );
        }
        Stage::Verify => {
            let cache_dir = art.dir.join("cache");
            let key = verify_key(run);
            let cache_file = cache_dir.join(format!("verify-{}.json", &key[..16]));
            let cached: Option<VerifyOutcome> = fs::read_to_string(&cache_file)
                .ok()
                .and_then(|s| serde_json::from_str(&s).ok());
            let outcome = match cached {
                Some(o) => {
                    report.cache_hit = true;
                    o
                }
                None => {
                    let o = verify(sc, &run.thresholds, &run.verify_options());
                    fs::create_dir_all(&cache_dir)?;
                    fs::write(&cache_file, serde_json::to_string(&o).map_err(compute)?)?;
                    o
                }
            };
            write_outcome(art, &outcome, &run.resolution)?;
            report.pass = Some(outcome.verdict.overall);
            report.summary = format!(
                "{}: {} ({} checks{})",
                outcome.verdict.scenario,
                if outcome.verdict.overall {
                    "PASS"
                } else {
                    "FAIL"
                },
                outcome.verdict.checks.len(),
                if report.cache_hit { ", cache hit" } else { "" }
            );
        }
    }
    Ok(())
}

fn write_outcome(
    art: &mut Artifacts,
    o: &VerifyOutcome,
    resolution: &[usize],
) -> Result<(), HarnessError> {
    if let Some(a) = &o.audit {
        art.write(
            "audit.json",
            &serde_json::to_string_pretty(a).map_err(compute)?,
        )?;
        art.write("audit.csv", &a.to_csv())?;
    }
    art.write("counts.csv", &counts_csv(&o.counts))?;
    art.write("trace.csv", &traces_to_csv(&o.traces))?;
    art.write("diag.csv", &diag_csv(&o.diag))?;
    let ts: Vec<f64> = {
        let mut v: Vec<f64> = o.traces.iter().map(|e| e.t).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    };
    let fits = json!({
        "resolution": resolution,
        "dim": o.pencil_dim,
        "theory": o.theory,
        "count_window": o.count_window,
        "count_fit": o.count_fit,
        "trace_fit": o.trace_fit,
        "trace_samples": preferred_traces(&ts, &o.traces),
        "karamata": o.karamata,
        "notes": o.notes,
        "timings": o.timings,
    });
    art.write(
        "fits.json",
        &serde_json::to_string_pretty(&fits).map_err(compute)?,
    )?;
    art.write("verdict.json", &o.verdict.to_json())?;
    art.write("checks.csv", &o.verdict.to_csv())?;
    Ok(())
}
