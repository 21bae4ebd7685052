//! Configuration, scenario registry, artifact persistence and the stage
//! pipeline behind the command-line front end.

pub mod config;
pub mod registry;
pub mod run;

use thiserror::Error;

pub use config::{BallConfig, GeomGrid, ResolvedRun, RunConfig, ScenarioConfig};
pub use registry::{lookup, registry, RegistryEntry};
pub use run::{list_scenarios, run_stage, Stage, StageReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Compute(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}
