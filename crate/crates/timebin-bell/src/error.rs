use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A chained Bell quantity was requested for an unsupported chain length.
    #[error("chain length must be at least 2, got {n}")]
    ChainTooShort { n: usize },

    /// Strategy enumeration is exact but exponential; it is capped.
    #[error("enumeration supports 2 <= n <= {max}, got {n}")]
    EnumerationOutOfRange { n: usize, max: usize },

    /// A correlation or probability term required by a Bell functional is absent.
    #[error("missing chained term A{alice}B{bob}")]
    MissingTerm { alice: usize, bob: usize },

    #[error("invalid {name}: {value} (expected {expected})")]
    InvalidValue {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("hidden-variable integration resolution {resolution} too small (minimum {min})")]
    ResolutionTooSmall { resolution: usize, min: usize },

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("streams come from different runs: {left} vs {right}")]
    RunLabelMismatch { left: String, right: String },

    #[error("cannot parse run label {0:?}")]
    BadRunLabel(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fringe fit needs at least {min} distinct phases, got {got}")]
    InsufficientPhases { min: usize, got: usize },

    #[error("fringe fit failed: {0}")]
    FitFailure(String),

    #[error("streams do not cover the run plan; missing runs: {}", missing.join(", "))]
    PlanCoverage { missing: Vec<String> },

    #[error("invalid timetag file: {0}")]
    BadFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
