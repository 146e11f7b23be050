//! Experiment harness: seeded converter populations, calibration runs,
//! parameter sweeps and CSV output.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Algorithm, ExperimentConfig};
pub use run::{child_seed, run_adcs, run_experiment, run_sweep, ResultRow, SweepKind, SweepPoint};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure on ADC {adc_id}: {message}")]
    Numerical { adc_id: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub(crate) fn numerical(adc_id: usize, e: impl std::fmt::Display) -> Self {
        HarnessError::Numerical {
            adc_id,
            message: e.to_string(),
        }
    }

    /// Process exit code: 2 for configuration errors, 3 for numerical
    /// failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical { .. } => 3,
            HarnessError::Io { .. } => 1,
        }
    }
}
