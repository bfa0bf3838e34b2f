use thiserror::Error;

/// Errors shared by the geometry, solver, and family modules.
///
/// Body indices in error payloads are 1-based, matching the labels used in
/// syzygy symbols and CLI output.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} bodies, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mass {index} is not positive (value {value})")]
    NonPositiveMass { index: usize, value: f64 },

    #[error("need at least two bodies, got {0}")]
    TooFewBodies(usize),

    #[error("bodies {a} and {b} are within the collision cutoff (separation {separation:.3e})")]
    CollisionSingularity { a: usize, b: usize, separation: f64 },

    #[error("shape is on the partial-collision locus: bodies {a} and {b} at separation {separation:.3e}")]
    PartialCollision { a: usize, b: usize, separation: f64 },

    #[error("configuration has zero size; shape direction is undefined")]
    DegenerateSize,

    #[error("configuration is not in the center-of-mass frame (relative offset {offset:.3e})")]
    NotCentered { offset: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty family: |J| exceeds the critical value {j_critical:.12e} at which the locus degenerates to the circular solution")]
    EmptyFamily { j_critical: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
