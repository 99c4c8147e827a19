//! Std companion of `ampg_core`: JSON game, policy and config documents, CSV
//! traces, the multi-seed experiment runner and the `ampg` command line.

use std::path::{Path, PathBuf};

pub mod config;
pub mod experiment;
pub mod format;
pub mod trace;

pub use ampg_core as core;
pub use config::ExperimentConfig;
pub use experiment::{reference_policy, run_experiment, ExperimentOutcome, ReferencePolicy};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] ampg_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("format: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{failed} of {total} runs failed, see {record}")]
    RunsFailed {
        failed: usize,
        total: usize,
        record: PathBuf,
    },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        use ampg_core::Error as E;
        match self {
            HarnessError::Core(e) => match e {
                E::ShapeMismatch(_) => "shape_mismatch",
                E::AgentOutOfRange { .. } | E::StateOutOfRange { .. } => "index_out_of_range",
                E::InvalidGame(_) => "invalid_game",
                E::InvalidPolicy(_) => "invalid_policy",
                E::Ergodicity(_) => "ergodicity",
                E::SingularSystem(_) => "singular_system",
                E::NoConvergence { .. } => "no_convergence",
                E::UnsupportedStructure => "unsupported_structure",
                E::Infeasible { .. } => "infeasible",
                E::ZeroSupport { .. } => "zero_support",
                E::Length(_) => "length",
                E::InvalidParameter(_) => "invalid_parameter",
                E::Generation(_) => "generation",
                E::InfeasibleSpec(_) => "infeasible_spec",
            },
            HarnessError::Io { .. } => "io",
            HarnessError::Format(_) => "format",
            HarnessError::Config(_) => "config",
            HarnessError::RunsFailed { .. } => "runs_failed",
        }
    }
}
