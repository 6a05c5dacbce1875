//! Error taxonomy shared by all modules.

use thiserror::Error;

/// Errors produced by analytics, conditioning, simulation and verification.
#[derive(Debug, Error)]
pub enum Error {
    /// A model or configuration parameter violates its invariant
    /// (non-finite value, `alpha <= 0`, `x0 >= a`, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An evaluation point lies outside the operation's domain
    /// (e.g. inside the guard band of a removable singularity).
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is not defined for this model family.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// No closed form exists for this (source, scheme) combination.
    /// The message lists the supported pairs.
    #[error("no closed form for this source/scheme pair: {0}")]
    Dispatch(String),

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("quadrature failed to converge (error estimate {estimate:.3e})")]
    QuadratureNonConvergence { estimate: f64 },

    /// Too many paths aborted on non-finite drift evaluations.
    #[error(
        "simulation aborted {diagnostics} of {n_paths} paths on non-finite drift \
         evaluations (limit {limit})"
    )]
    TooManyDiagnostics {
        diagnostics: u64,
        n_paths: u64,
        limit: u64,
    },

    /// A distribution test needs a minimum number of absorbed paths.
    #[error("not enough absorbed paths for a distribution test: {got} < {required}")]
    TooFewAbsorbed { got: usize, required: usize },

    /// A finite-horizon target pair (gamma*, P*) does not satisfy
    /// total-mass consistency at construction.
    #[error(
        "inconsistent finite-horizon target: |∫P* - (1 - ∫γ*)| = {mismatch:.3e} \
         exceeds {tolerance:.1e}"
    )]
    InconsistentTarget { mismatch: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
