use thiserror::Error;

/// Errors raised by the platoon analysis and simulation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlatoonError {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular")]
    Singular,

    #[error("eigen-solver did not converge after {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },

    #[error("unknown built-in topology `{0}`")]
    UnknownTopology(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty window: lower bound {lo} is not below upper bound {hi}")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("Riccati iteration did not converge within {iterations} iterations (last step {last_delta:e})")]
    RiccatiNoConvergence { iterations: usize, last_delta: f64 },

    #[error("B^T P B = {0} is not positive")]
    NonPositiveGainDenominator(f64),

    #[error("Riccati residual W is not positive definite (min eigenvalue {0:e})")]
    ResidualNotPositiveDefinite(f64),

    #[error("certificate precondition violated: {0}")]
    CertificateInvalid(String),

    #[error("non-positive denominator in certificate ratio: {0}")]
    NonPositiveDenominator(f64),

    #[error("attack budget infeasible after {attempts} sampling attempts")]
    BudgetInfeasible { attempts: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, PlatoonError>;
