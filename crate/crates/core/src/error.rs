use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("complex exponents: discriminant {discriminant} < 0 for eigenvalue {lambda}")]
    ComplexRoots { lambda: f64, discriminant: f64 },
    #[error("Jacobi count mismatch: closed form {table}, enumeration {enumerated}")]
    CountDisagreement { table: usize, enumerated: usize },
    #[error("nonpositive {what}: minimum {min}")]
    NonPositive { what: &'static str, min: f64 },
    #[error("no nontrivial {k}-fold shrinker at alpha = {alpha} (shooting map has no sign change)")]
    NoNontrivialSolution { alpha: f64, k: usize },
    #[error("convexity lost while shooting at p = {p}")]
    NonConvex { p: f64 },
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal {off})")]
    EigenNoConvergence { sweeps: usize, off: f64 },
    #[error("convexity lost at s = {s}")]
    ConvexityLost { s: f64 },
    #[error("gamma = {gamma} is resonant with beta+_{j} = {beta}")]
    GammaOnResonance { gamma: f64, j: usize, beta: f64 },
    #[error("tail integral diverges: decay rate {rate} >= beta+_{j} = {beta}")]
    TailDivergence { rate: f64, j: usize, beta: f64 },
    #[error("Picard iteration failed to contract (ratios {ratios:?})")]
    NoContraction { ratios: Vec<f64> },
    #[error("graphicality lost (S_l <= 0) at l = {l}")]
    GraphicalityLost { l: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("fit rejected: {0}")]
    FitRejected(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
