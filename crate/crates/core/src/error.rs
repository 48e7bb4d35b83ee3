use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("{what} is outside its domain (got {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "quadrature budget exhausted after {subdivisions} subdivisions \
         (best estimate {estimate}, error bound {error_bound})"
    )]
    QuadratureBudget {
        estimate: f64,
        error_bound: f64,
        subdivisions: usize,
    },

    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("root search did not converge in {iterations} iterations")]
    RootNotConverged { iterations: usize },

    #[error("threshold search failed: {0}")]
    Threshold(String),

    #[error("walk positions S_{0} and S_{1} are tied")]
    TiedPositions(usize, usize),

    #[error("transform is not strictly increasing on the walk positions")]
    NonMonotoneTransform,

    #[error("policy contract violated: {0}")]
    PolicyContract(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid (p, q): {0}")]
    InvalidPq(String),

    #[error("invalid number: {0}")]
    InvalidNumber(String),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed user input rather than by a
    /// numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidDistribution(_)
                | Error::Domain { .. }
                | Error::InvalidConfig(_)
                | Error::InvalidPolicy(_)
                | Error::InvalidPq(_)
                | Error::InvalidNumber(_)
                | Error::Json(_)
                | Error::TiedPositions(..)
                | Error::NonMonotoneTransform
        )
    }
}
