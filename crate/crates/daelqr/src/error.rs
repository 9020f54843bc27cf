//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by system construction, analysis and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector shapes do not fit together.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A system failed one of its structural invariants.
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    /// `N^{n_N}` is not zero within tolerance.
    #[error("matrix is not nilpotent: |N^{power}| = {norm:e} exceeds {tolerance:e}")]
    NotNilpotent {
        power: usize,
        norm: f64,
        tolerance: f64,
    },

    /// Two supposedly equivalent internal computations disagree; this
    /// indicates a tolerance pathology, not user error.
    #[error("internal consistency check failed in {context}: {detail}")]
    InternalConsistency { context: String, detail: String },

    /// The initial value does not lie in the consistency space.
    #[error("inconsistent initial value: distance to the consistency space is {residual:e}")]
    InconsistentInitialValue { residual: f64 },

    /// The initial value and input signal do not match at t = 0.
    ///
    /// Condition 0 is membership of the initial value in the consistency
    /// space; condition i >= 1 is agreement of the input derivative of
    /// order i - 1 with the value pinned by the initial state.
    #[error("inconsistent initial pair, failed matching conditions {failed:?}: {detail}")]
    InconsistentInitialPair { failed: Vec<usize>, detail: String },

    /// A derivative order beyond what the signal can represent.
    #[error("derivative order {requested} exceeds representable order {representable}")]
    DerivativeOrder {
        requested: usize,
        representable: usize,
    },

    /// A signal description that violates the piecewise-polynomial contract.
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    /// Evaluation time outside the admissible domain.
    #[error("time {t} outside admissible range [{min}, {max}]")]
    TimeOutOfRange { t: f64, min: f64, max: f64 },

    /// Horizon must lie in (0, inf].
    #[error("invalid horizon {0}: must be positive (or infinite)")]
    InvalidHorizon(f64),

    /// One of the standing cost/system assumptions does not hold.
    #[error("assumption violation: {0}")]
    AssumptionViolation(String),

    /// The adaptive integrator could not continue.
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    /// The Riccati solution did not settle before the time cap.
    #[error(
        "no convergence to a stationary Riccati solution by t = {t_max}: \
         derivative norm {derivative_norm:e}"
    )]
    NoConvergence { t_max: f64, derivative_norm: f64 },

    /// Feedback synthesis requires a nonzero scaling parameter.
    #[error("feedback scaling alpha must be nonzero")]
    AlphaZero,

    /// Feedback synthesis is defined only for input index >= 1; for input
    /// index 0 the optimal control is the static augmented-state gain
    /// u = -r^{-1}(b' P + h') x and is produced by `optimal_trajectory`.
    #[error(
        "feedback synthesis requires input index >= 1; for input index 0 \
         use the static gain returned by the optimal trajectory solver"
    )]
    OmegaZeroFeedback,

    /// A supplied left inverse does not invert from the left.
    #[error("not a left inverse: |L*M - I| = {defect:e}")]
    NotALeftInverse { defect: f64 },

    /// The closed loop cannot be simulated through the derivative chain.
    #[error(
        "closed loop not simulable: leading chain gain {gamma:e} is zero \
         within tolerance"
    )]
    ClosedLoopNotSimulable { gamma: f64 },

    /// Too few grid points for the requested operation.
    #[error("grid too coarse: {points} points, need at least {needed}")]
    GridTooCoarse { points: usize, needed: usize },

    /// A grid that does not fit the requested operation.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A uniform grid was required.
    #[error("grid is not uniform: max deviation {deviation:e} at index {index}")]
    NonUniformGrid { deviation: f64, index: usize },

    /// File-format problems.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>) -> Self {
        Error::DimensionMismatch(context.into())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
