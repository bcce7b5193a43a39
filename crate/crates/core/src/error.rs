use thiserror::Error;

/// Crate-wide error type. Variants carry enough context to act on: rank
/// failures name the remedy, constraint failures name the constraint.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("constraint unsatisfiable after {attempts} attempts: {what}")]
    ConstraintUnsatisfiable { what: String, attempts: usize },

    #[error("insufficient sensors: need at least {needed}, have {have} ({context})")]
    InsufficientSensors {
        needed: usize,
        have: usize,
        context: String,
    },

    #[error("rank deficient: numerical rank {rank} < required {needed}; {advice}")]
    RankDeficient {
        rank: usize,
        needed: usize,
        advice: String,
    },

    #[error("pairing ambiguity: {0}")]
    PairingAmbiguity(String),

    #[error("linear algebra backend: {0}")]
    Backend(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
