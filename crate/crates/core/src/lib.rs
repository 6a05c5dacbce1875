//! First-passage analytics and conditioned-drift constructions for three
//! families of one-dimensional diffusions with an absorbing barrier: Brownian
//! motion with constant drift, the tanh-drift (Benes) process, and the taboo
//! process. The library provides
//!
//! * closed-form propagators, first-passage-time densities, absorption and
//!   survival probabilities ([`analytics`]),
//! * Doob-conditioned drifts and Q-functions for conditioning on a fixed
//!   absorption time, on forever survival, or on the first-passage-time
//!   density of another family ([`conditioning`]),
//! * Euler–Maruyama ensemble simulation with barrier-bridge corrections and
//!   Girsanov reweighting ([`sim`]),
//! * goodness-of-fit reporting of ensembles against the closed forms
//!   ([`stats`]).
//!
//! Numerical policy: hyperbolic/exponential ratios are evaluated in log
//! space ([`special`]), semi-infinite first-passage integrals use the
//! substitutions in [`quad`], and probabilities are clamped to [0, 1] with a
//! warning if the excursion exceeds 1e-12.

// Validation deliberately uses `!(x < y)` so that NaN inputs fail the check;
// the `x >= y` form clippy prefers would accept them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod conditioning;
pub mod error;
pub mod quad;
pub mod sim;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
