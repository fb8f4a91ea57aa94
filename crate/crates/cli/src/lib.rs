//! Library side of the benchmark harness: configuration, sweeps,
//! summaries, CSV/SVG emission, and text dumps of synthesized
//! controllers. The `slsreg` binary is a thin command-line front end
//! over these pieces.

pub mod config;
pub mod csv_out;
pub mod dump;
pub mod plot;
pub mod records;
pub mod sweep;
pub mod verify;

pub use config::{ControllerKind, Scenario, ScenarioConfig};
pub use records::{summarize, ExperimentRecord, SummaryRow};
pub use sweep::{run_sweep, SweepOutput};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sls_regret::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
