use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RomError>;

#[derive(Debug, Error)]
pub enum RomError {
    /// Argument shapes or lengths do not agree with what the operation needs.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in state index {index} ({context})")]
    NumericalDomain { index: usize, context: String },

    #[error("integration blew up at substep {substep}: state index {index} is non-finite")]
    IntegrationBlowup { substep: usize, index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("steady state did not converge: residual max-norm {residual:.3e} after {iterations} iterations")]
    SteadyState { residual: f64, iterations: usize },

    #[error("SVD failed: {0}")]
    Svd(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate:e})")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("filter diverged at step {step}: {reason}")]
    FilterDivergence { step: usize, reason: String },

    #[error("innovation covariance is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    SingularUpdate { min_eigenvalue: f64 },

    #[error("missing artifact {path}: run `romkit {command}` first")]
    MissingArtifact { path: PathBuf, command: &'static str },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl RomError {
    /// Stable, machine-parsable category used by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            RomError::Contract(_) => "contract",
            RomError::NumericalDomain { .. } => "numerical-domain",
            RomError::IntegrationBlowup { .. } => "integration-blowup",
            RomError::Config(_) => "config",
            RomError::SteadyState { .. } => "steady-state",
            RomError::Svd(_) => "svd",
            RomError::Divergence { .. } => "divergence",
            RomError::FilterDivergence { .. } => "filter-divergence",
            RomError::SingularUpdate { .. } => "singular-update",
            RomError::MissingArtifact { .. } => "missing-artifact",
            RomError::Format { .. } => "format",
            RomError::Io(_) => "io",
            RomError::Csv(_) => "io",
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        RomError::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        RomError::Config(msg.into())
    }
}

pub(crate) fn ensure_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(RomError::Contract(format!("{what}: expected length {want}, got {got}")));
    }
    Ok(())
}
