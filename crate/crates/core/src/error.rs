use thiserror::Error;

pub type Result<T> = std::result::Result<T, EscError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EscError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("gain rejected: {0}")]
    GainRejected(crate::controller::GainRejection),

    #[error("non-finite state at node {node} (t = {t}): {value}")]
    NonFiniteState { node: usize, t: f64, value: f64 },

    #[error("non-finite signal `{signal}` at step {step} (t = {t}); last recorded sample at t = {last_t:?}")]
    NonFiniteSignal {
        signal: &'static str,
        step: usize,
        t: f64,
        last_t: Option<f64>,
    },

    #[error("explicit scheme unstable: dt = {dt} exceeds dx^2/(2 eps) = {limit}")]
    UnstableTimeStep { dt: f64, limit: f64 },

    #[error("dither amplitude {0} is too small to demodulate (needs >= 1e-9)")]
    AmplitudeTooSmall(f64),

    #[error("integral identity violated: max residual {max_residual:e} at t = {worst_time} (tol {tol:e})")]
    IdentityViolated {
        max_residual: f64,
        worst_time: f64,
        tol: f64,
    },

    #[error("kernel normalisation is singular: |cos(sqrt(lambda) L)| = {0:e}")]
    SingularKernel(f64),
}

impl From<crate::controller::GainRejection> for EscError {
    fn from(r: crate::controller::GainRejection) -> Self {
        Self::GainRejected(r)
    }
}

impl EscError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidConfig(msg.into())
    }
}
