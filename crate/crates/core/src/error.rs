use thiserror::Error;

/// Errors produced by network construction, cost generation, operator
/// analysis and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no strongly connected digraph after {attempts} attempts (n={n}, p={p})")]
    FailedConnectivity { n: usize, p: f64, attempts: u32 },

    #[error("aggregate Hessian not positive definite after {attempts} attempts")]
    FailedAggregatePd { attempts: u32 },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular linear system")]
    SingularSystem,

    #[error("operator is not contractive (measured Lipschitz constant {eta})")]
    NotContractive { eta: f64 },

    #[error("operation requires quadratic local costs")]
    NonQuadratic,

    #[error("push-sum weight y[{index}] = {value} is not positive")]
    NonpositiveY { index: usize, value: f64 },

    #[error("invalid rate: C*alpha = {c_alpha} must lie in (0, 1)")]
    InvalidRate { c_alpha: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(&'static str),

    #[error("every stepsize on the grid diverged")]
    AllDiverged,

    #[error("non-finite matrix entry")]
    NonFinite,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by bad input (as opposed to numeric failures).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Invalid(_) | Error::Json(_) | Error::Io(_) | Error::DimensionMismatch { .. } => {
                true
            }
            Error::Context { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
