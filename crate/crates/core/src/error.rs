use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} is not stochastic: {detail}")]
    NotStochastic { what: String, detail: String },

    #[error("observation function at step {step} is not centered (mean {mean:e})")]
    NotCentered { step: usize, mean: f64 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("state space too large for enumeration: {paths} paths exceed cap {cap}")]
    StateSpaceTooLarge { paths: f64, cap: usize },

    #[error("invalid joint law: {0}")]
    InvalidJoint(String),

    #[error("invalid moment order p = {0} (need p >= 2)")]
    InvalidOrder(f64),

    #[error("t = {t} exceeds the admissible maximum {max}")]
    InvalidT { t: f64, max: f64 },

    #[error("degenerate mixing: {0}")]
    DegenerateMixing(String),

    #[error("degenerate contraction: {0}")]
    DegenerateContraction(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("invalid rate: {0}")]
    InvalidRate(String),

    #[error("invalid autoregression coefficient phi = {0} (need |phi| < 1)")]
    InvalidPhi(f64),

    #[error("rejection budget exceeded after {attempts} attempts")]
    RejectionBudgetExceeded { attempts: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("geometric domination rho_k <= rho1^k fails at k = {k}: {rho_k} > {bound}")]
    DominationFailed { k: usize, rho_k: f64, bound: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("spec file {path}: field `{field}`: {reason}")]
    SpecFile {
        path: String,
        field: String,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
