use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An SO(3) block sits on (or numerically next to) the rotation-by-π cut
    /// where the logarithm is not unique.
    #[error("SO(3) block {block} has rotation angle {angle} at the log cut locus")]
    AngleAtCut { block: usize, angle: f64 },

    #[error("group structure mismatch: {0}")]
    StructureMismatch(String),

    #[error("no convergence after {iterations} iterations (final step norm {step_norm:e})")]
    NoConvergence { iterations: usize, step_norm: f64 },

    #[error("generator is not unit norm (norm = {norm})")]
    UnitNormViolation { norm: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
