use thiserror::Error;

/// Errors produced by every stage of the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GarchError {
    #[error("invalid order: p and q must be at least 1 (got p={p}, q={q})")]
    InvalidOrder { p: usize, q: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty parameter space: {0}")]
    EmptySpace(String),

    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sum of t coordinates is {0}, must be < 1")]
    UnitRootCoefficients(f64),

    #[error("series too short: need at least {needed} observations, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("non-positive scale argument t = {0}")]
    NonPositiveScale(f64),

    #[error("moment {which} is infinite or undefined for {dist}")]
    MomentInfinite { which: &'static str, dist: String },

    #[error("bisection failed to bracket the scale divisor: {0}")]
    BracketFailure(String),

    #[error("no closed-form tau^2 for family {family} with {dist}; use tau_sq_empirical")]
    NoClosedForm { family: String, dist: String },

    #[error("simulation overflow at step {step}: sigma^2 exceeded 1e300")]
    SimulationOverflow { step: usize },

    #[error("objective is -infinity at every starting point")]
    DegenerateObjective,

    #[error("non-finite gradient at iterate {iter} (point {point:?})")]
    NonFiniteGradient { iter: usize, point: Vec<f64> },

    #[error(
        "information matrix is numerically singular (min/max eigenvalue {ratio:e}); \
         the parameter is likely not identifiable"
    )]
    SingularInformation { ratio: f64 },

    #[error("mean of g2 at the residuals is {0:e}, too close to zero")]
    VanishingCurvature(f64),

    #[error("mean of g1^2 at the residuals is zero: the score is degenerate")]
    DegenerateScore,

    #[error("need at least {needed} successful replications, got {got}")]
    InsufficientReplications { needed: usize, got: usize },

    #[error("coordinate {index} out of range for dimension {dim}")]
    CoordinateOutOfRange { index: usize, dim: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, GarchError>;
