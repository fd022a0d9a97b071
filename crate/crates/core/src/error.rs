use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// Two objects that must share a basis (or a site count) do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A requested state has zero norm after construction.
    #[error("degenerate state: {0}")]
    DegenerateState(String),

    /// No M-excitation dark state exists for 2M > N.
    #[error("no dark state for 2M > N (N = {n}, M = {m})")]
    NoDarkState { n: usize, m: usize },

    /// The basis cannot represent the requested operator or state.
    #[error("unsupported basis: {0}")]
    Basis(String),

    /// The adaptive integrator could not keep the error below tolerance.
    #[error("step size underflow at t = {time} (h = {step:e}); the problem is too stiff for the requested tolerance")]
    Stiffness { time: f64, step: f64 },

    /// A conserved quantity drifted beyond tolerance during evolution.
    #[error("invariant violated at t = {time}: {what}")]
    Invariant { time: f64, what: String },

    /// Dense eigendecomposition did not converge.
    #[error("eigensolver failed for a {dim}x{dim} block (max |entry| = {max_abs:e}, frobenius norm = {frobenius:e})")]
    Eigensolver { dim: usize, max_abs: f64, frobenius: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter { name, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
