use thiserror::Error;

/// Errors raised by the library. The CLI maps these onto exit codes.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid simplex point: {0}")]
    InvalidPoint(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("density is unbounded at boundary point (alpha_{index} = {alpha} < 1)")]
    UnboundedAtBoundary { index: usize, alpha: f64 },
    #[error("prior is not Condition 𝒫: {0}")]
    NotConditionP(String),
    #[error("unsupported dimension K = {k}: {reason}")]
    UnsupportedDimension { k: usize, reason: String },
    #[error("Bernstein coefficient table of {needed} entries exceeds budget of {budget}; reduce with induce_two_sided")]
    CoefficientBudget { needed: u128, budget: u128 },
    #[error("prior too rough for requested epsilon: degree cap {cap} reached")]
    TooRough { cap: usize },
    #[error("quadrature did not converge: estimate {value}, error estimate {error}")]
    Quadrature { value: f64, error: f64 },
    #[error("certificate mismatch: {0}")]
    Certificate(String),
    #[error("no feasible (beta, c') pair found: {0}")]
    Infeasible(String),
    #[error("search cap exceeded: {0}")]
    SearchCap(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
