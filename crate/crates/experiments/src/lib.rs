//! Configuration-driven sweeps over the QATE engines: engine dispatch,
//! parallel execution, power-law fits and plot-data bundles.

pub mod config;
pub mod figures;
pub mod fit;
pub mod output;
pub mod sweep;

use qate_core::QateError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Physics(#[from] QateError),
}

impl ExperimentError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Physics(QateError::Config(_)) => 1,
            ExperimentError::Physics(_) => 2,
            ExperimentError::Io(_) => 3,
        }
    }
}

pub fn io_error(path: &std::path::Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

pub use config::{load_config, EngineKind, ExperimentConfig};
pub use fit::{fit_power_law, PowerLawFit};
pub use sweep::{run_point, run_sweep, PointOutcome, ResultRecord};
