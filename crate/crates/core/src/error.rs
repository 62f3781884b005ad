//! Error types shared across the crate.

use thiserror::Error;

/// A fatal numerical fault inside the step loop. The run halts with a
/// diagnostic instead of propagating NaNs through the population.
#[derive(Debug, Error)]
pub enum SimFault {
    #[error("non-finite value in {what} for agent {agent_id} at step {step}")]
    NonFinite {
        agent_id: u64,
        step: u64,
        what: &'static str,
        /// Offending controller weights, dumped so the fault is reproducible.
        genotype: Vec<f64>,
    },
}

/// Invalid run configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Corrupt, truncated, or mismatched on-disk artifacts.
#[derive(Debug, Error)]
pub enum IntegrityError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Corrupt { path: String, detail: String },
    #[error("config hash mismatch: {path} carries {found}, expected {expected}")]
    HashMismatch {
        path: String,
        found: String,
        expected: String,
    },
}
