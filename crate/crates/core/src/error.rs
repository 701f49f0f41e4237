use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("grid {nx}x{ny} too small, need at least 2 interior nodes per axis")]
    GridTooSmall { nx: usize, ny: usize },

    #[error("degenerate output: {0}")]
    DegenerateOutput(String),

    #[error("wrong boundary kind on {edge} edge: expected {expected}")]
    WrongEdgeKind {
        edge: &'static str,
        expected: &'static str,
    },

    #[error("unknown example id {0}, expected 1..=4")]
    UnknownExample(u32),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("m = {got} too small for the sinc step bound, need m >= {required}")]
    NodeCountTooSmall { required: usize, got: usize },

    #[error("integrand not finite at node index {index} (z = {node})")]
    NonFiniteIntegrand { index: i64, node: f64 },

    #[error("Krylov basis cap {max_basis} reached without convergence (residual estimate {residual:e})")]
    NonConvergence { residual: f64, max_basis: usize },

    #[error("ill-posed parameters: alpha = {alpha} must lie in [0, 1/2)")]
    IllPosed { alpha: f64 },

    #[error("singular linear solve in {0}")]
    SingularSolve(&'static str),

    #[error("solution diverged (non-finite entries) at step {step}")]
    Divergence { step: usize },

    #[error("size cap exceeded: n = {n} > {cap}")]
    SizeCap { n: usize, cap: usize },

    #[error("step size underflow at t = {t:e}; problem too stiff, reduce t or n")]
    Stiffness { t: f64 },

    #[error("oracle self-validation did not converge (last relative change {change:e})")]
    OracleNonConvergence { change: f64 },

    #[error("too few usable points: {got} < {needed}")]
    TooFewPoints { got: usize, needed: usize },

    #[error("degenerate time values: {0}")]
    DegenerateTimes(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
