use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No start time steers the state into the requested ball.
    #[error("infeasible target: eps = {eps:.6e} is below eps(0) = {eps_zero:.6e}")]
    Infeasible { eps: f64, eps_zero: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e}, last value {value:.12e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        value: f64,
    },

    /// The backward adjoint `G e^{Δ(T-t)} η` vanished at a control step, so the
    /// normalized control is undefined there.
    #[error(
        "degenerate certificate: |G e^(Δ(T-t)) η| = {norm:.3e} at step {step} (t = {time:.6})"
    )]
    DegenerateCertificate { step: usize, time: f64, norm: f64 },

    #[error("bisection predicate not monotone: eps({tau_low:.6}) = {eps_low:.12e} > eps({tau_high:.6}) = {eps_high:.12e}")]
    MonotonicityViolation {
        tau_low: f64,
        eps_low: f64,
        tau_high: f64,
        eps_high: f64,
    },

    #[error("fixture mismatch:\n{0}")]
    FixtureMismatch(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
