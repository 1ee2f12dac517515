//! Error type shared across the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EngineError>;

/// Engine-wide error enum. Weighted estimators never return NaN: degenerate
/// inputs (for example, a regime nobody in the panel adhered to) surface as
/// explicit errors instead.
#[derive(Debug, Error)]
pub enum EngineError {
    /// No observation carries positive weight, so a weighted estimate is
    /// undefined. `stage` is the 0-based stage whose weight sum vanished,
    /// when the failure is stage-specific.
    #[error("no observations with positive weight{}", stage_suffix(stage))]
    NoAdherers { stage: Option<usize> },

    /// A configuration value is outside its documented domain.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data violate the panel contract (shape, finiteness, coding).
    #[error("invalid data: {0}")]
    Data(String),

    /// A nuisance-model fit could not be completed.
    #[error("model fitting failed: {0}")]
    Fit(String),

    /// Window selection could not produce a qualified candidate.
    #[error("window selection failed: {0}")]
    Selection(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EngineError {
    /// Stable machine-readable code used by the CLI's structured error output.
    pub fn reason_code(&self) -> &'static str {
        match self {
            EngineError::NoAdherers { .. } => "no_adherers",
            EngineError::Config(_) => "config",
            EngineError::Data(_) => "data",
            EngineError::Fit(_) => "fit",
            EngineError::Selection(_) => "selection",
            EngineError::Io(_) => "io",
            EngineError::Csv(_) => "csv",
            EngineError::Json(_) => "json",
        }
    }

    /// Process exit class: 2 = usage/config, 3 = data/i-o, 4 = statistical.
    pub fn exit_code(&self) -> i32 {
        match self {
            EngineError::Config(_) => 2,
            EngineError::Data(_)
            | EngineError::Io(_)
            | EngineError::Csv(_)
            | EngineError::Json(_) => 3,
            EngineError::NoAdherers { .. }
            | EngineError::Fit(_)
            | EngineError::Selection(_) => 4,
        }
    }
}

fn stage_suffix(stage: &Option<usize>) -> String {
    match stage {
        Some(t) => format!(" at stage {}", t + 1),
        None => String::new(),
    }
}
