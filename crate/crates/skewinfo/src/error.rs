use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Clone, Error)]
#[non_exhaustive]
pub enum Error {
    /// A numeric argument is outside its admissible domain.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The requested standardization has no solution for this kernel.
    #[error("standardization infeasible: {rule} for {family}: {reason}")]
    StandardizationInfeasible {
        rule: &'static str,
        family: String,
        reason: String,
    },

    /// The integrator ran out of subdivisions before reaching the local
    /// error target. Carries the best estimate it reached.
    #[error("quadrature budget exhausted (best estimate {best:.6e}, error estimate {err:.2e})")]
    QuadratureBudget { best: f64, err: f64 },

    /// A required integral diverges under domain enlargement.
    /// `assumption` names the violated finiteness condition.
    #[error("assumption violation: {assumption} fails ({detail})")]
    AssumptionViolation {
        assumption: &'static str,
        detail: String,
    },

    /// The operation is not defined for this input (for example, sampling a
    /// kernel family with no sampler, or a skewer with no degenerate partner).
    #[error("unsupported: {0}")]
    Capability(String),

    /// A caller violated an operation's contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Root finding located more than one solution where the contract
    /// requires a unique one.
    #[error("ambiguous root: {count} sign changes found on the search grid")]
    AmbiguousRoot { count: usize },

    /// Not enough data for the requested fit.
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Data are degenerate (for example, zero variance in a coordinate).
    #[error("degenerate data: {0}")]
    DegenerateData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
