use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypoweyl::harness::{list_scenarios, run_stage, HarnessError, RunConfig, Stage};

/// Spectral asymptotics laboratory for sum-of-squares operators.
#[derive(Parser)]
#[command(name = "hypoweyl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Registry scenario id (instead of a config file).
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Hormander audit: Q_L, tau_L, F_k masses.
    Audit(Common),
    /// Assemble and export the operator pencil.
    Assemble(Common),
    /// Lowest eigenvalues and the counting curve.
    Spectrum(Common),
    /// Heat-trace curve.
    Trace(Common),
    /// Monte-Carlo CC-ball volumes.
    Ball(Common),
    /// Power-law fits of counts.csv / trace.csv in the output directory.
    Fit(Common),
    /// Full pipeline and verdict; exit 0 iff the verdict passes.
    Verify(Common),
    /// Registry listing.
    List,
}

fn load(c: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = match (&c.config, &c.scenario) {
        (Some(p), None) => RunConfig::load(p)?,
        (None, Some(id)) => RunConfig::for_scenario(id),
        _ => {
            return Err(HarnessError::Config(
                "give exactly one of --config and --scenario".into(),
            ))
        }
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn run(stage: Stage, c: &Common) -> Result<i32, HarnessError> {
    let resolved = load(c)?.resolve()?;
    let report = run_stage(stage, &resolved)?;
    println!("{}", report.summary);
    eprintln!(
        "{} artifacts in {}{}",
        report.artifacts.len(),
        report.out.display(),
        if report.cache_hit { " (cache hit)" } else { "" }
    );
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, common) = match &cli.command {
        Command::List => {
            print!("{}", list_scenarios());
            return ExitCode::SUCCESS;
        }
        Command::Audit(c) => (Stage::Audit, c),
        Command::Assemble(c) => (Stage::Assemble, c),
        Command::Spectrum(c) => (Stage::Spectrum, c),
        Command::Trace(c) => (Stage::Trace, c),
        Command::Ball(c) => (Stage::Ball, c),
        Command::Fit(c) => (Stage::Fit, c),
        Command::Verify(c) => (Stage::Verify, c),
    };
    match run(stage, common) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
