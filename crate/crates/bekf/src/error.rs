//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by frame construction, the subproblem solvers, the
/// certificate machinery and the filtering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A dimension argument was zero or inconsistent with its companions.
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// A solver input failed validation before any work started.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    /// Generator set too small or degenerate to span the symmetric space.
    #[error("degenerate generator set: {0}")]
    DegenerateGenerators(String),

    /// The semidefinite solve ran into numerical trouble it could not recover from.
    #[error("semidefinite solve failed: {0}")]
    Sdp(String),

    /// No (Q, q) pair satisfies the certificate inequality at the requested
    /// relaxation degree; either the growth assumption fails for this model
    /// or the degree knob is too low.
    #[error("certificate infeasible for frame member {p_index} at anchor {anchor:?}")]
    CertificateInfeasible { p_index: usize, anchor: Vec<f64> },

    /// An operation that needs polynomial drift/diffusion data got a model
    /// defined only through callables.
    #[error("non-polynomial model: {0}")]
    NonPolynomialModel(String),

    /// A per-step subproblem (t-value LP, s-selection LP) failed; `index`
    /// names the offending frame member or dual generator.
    #[error("bound subproblem failed at index {index}: {reason}")]
    BoundSubproblem { index: usize, reason: String },

    /// Innovation covariance was numerically singular in a measurement update.
    #[error("innovation covariance ill-conditioned (condition number ~ {cond:.3e})")]
    IllConditionedInnovation { cond: f64 },

    /// The simulated state left the representable range.
    #[error("simulation produced a non-finite state at step {step}")]
    NonFiniteState { step: usize },

    /// Monte-Carlo experiment level failure (too many aborted runs, bad config).
    #[error("experiment failed: {0}")]
    Experiment(String),

    /// Text-config parse or validation failure.
    #[error("config error: {0}")]
    Config(String),

    /// Underlying I/O failure while writing outputs.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
