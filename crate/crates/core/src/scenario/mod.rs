//! Declarative scenarios: parsing, the simulation loop and its outputs.

mod config;
mod metrics;
mod output;
mod run;

use std::path::Path;

use thiserror::Error;

pub use config::{parse_scenario, ConfigError, MappingConfig, ScenarioConfig, TrafficConfig, Waypoint};
pub use metrics::{Metrics, CSV_HEADER};
pub use output::{emit_outputs, preflight_out_dir, preflight_out_file, write_trace, CLOUD_FILE, METRICS_FILE, TRACE_FILE};
pub use run::{run, AgentTrace, RunError, RunOutput, TraceRecord};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(#[from] ConfigError),
    #[error("simulation aborted at {0}")]
    Run(#[from] RunError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl ScenarioError {
    /// 1 for validation failures, 2 for runtime and I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 1,
            ScenarioError::Run(_) | ScenarioError::Io { .. } => 2,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        ScenarioError::Io { context: context.into(), source }
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::io(format!("reading {}", path.display()), e))?;
    Ok(parse_scenario(&text)?)
}
