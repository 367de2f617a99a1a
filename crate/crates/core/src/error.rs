// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates its invariant.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    /// Lorentzian kernel evaluated exactly on a pole with zero linewidth.
    #[error("singular spectral density at omega = {omega} eV (gamma = 0 and an emitter sits on the probe energy)")]
    SingularEvaluation { omega: f64 },

    #[error("eigensolver failed: {0}")]
    Convergence(String),

    #[error("fit failed: {0}")]
    Fit(String),

    /// Integrator or propagator left its accuracy envelope.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dense operator space too large: dim^2 = {dim_sq} exceeds cap {cap}")]
    DimensionCap { dim_sq: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("scenario {scenario}: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid { .. } => "invalid_config",
            Error::SingularEvaluation { .. } => "singular_evaluation",
            Error::Convergence(_) => "convergence",
            Error::Fit(_) => "fit",
            Error::Numerical(_) => "numerical",
            Error::DimensionCap { .. } => "dimension_cap",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::UnknownScenario(_) => "unknown_scenario",
            Error::Scenario { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
