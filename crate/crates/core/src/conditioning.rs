//! Doob h-transform constructions: Q-functions and conditioned drifts.
//!
//! A conditioning scheme prescribes the law of the absorption time T_a at the
//! barrier `a` (and, for finite horizons, the endpoint density of surviving
//! paths). The conditioned process has drift
//!
//! ```text
//! mu*(x, t) = mu(x) + d/dx log Q(x, t)
//! ```
//!
//! where Q is the likelihood ratio of the target law against the source
//! process's own first-passage law. For every (source family, scheme) pair
//! with a closed form, both Q and mu* are implemented as explicit formulas;
//! the general finite-horizon scheme evaluates Q by adaptive quadrature and
//! differentiates log Q by central finite differences.
//!
//! Dispatch policy: the closed-form drifts conditioned on a *foreign*
//! first-passage density are taken verbatim from their published forms, and
//! each pair's Q-function is the one whose log-derivative reproduces that
//! drift exactly, so the pair (Q, mu*) always satisfies the displayed
//! relation above. Schemes targeting a first-passage density are derived
//! from a process started at the origin, so their Q evaluators require
//! x0 = 0, t0 = 0; conditioned drifts are start-independent and carry no
//! such restriction.

use std::fmt;
use std::sync::Arc;

use crate::analytics::{
    self, drift_value, log_fpt_density_from, propagator_absorbed, BarrierSetup, DriftModel,
    SpaceTimePoint, POLE_GUARD,
};
use crate::error::{Error, Result};
use crate::quad;
use crate::special::{log1m_exp, log_add_exp, log_cosh, log_expm1, log_sinh};

/// A probability density supplied by the caller (of time for gamma-targets,
/// of the endpoint for P*-targets).
pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const SUPPORTED_PAIRS: &str = "supported (source, scheme) pairs: \
     any x DiracTime; any x ForeverSurvival; any x FiniteHorizon; \
     TanhDrift x FptOfBm; TanhDrift x FptOfTanh; \
     Bm x FptOfTanh; Bm x FptOfTaboo; Taboo x FptOfBm";

/// Relative tolerance of the internal adaptive quadratures.
const QUAD_REL_TOL: f64 = 1e-9;
/// Tolerance of the FiniteHorizon mass-consistency validation.
const TARGET_CONSISTENCY_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Schemes
// ---------------------------------------------------------------------------

/// The absorption-time part of a finite-horizon target: either a bona fide
/// density on (0, T] or a point mass at a prescribed time.
#[derive(Clone)]
pub enum GammaTarget {
    Density(DensityFn),
    Dirac { t_star: f64 },
}

impl fmt::Debug for GammaTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaTarget::Density(_) => f.write_str("GammaTarget::Density(..)"),
            GammaTarget::Dirac { t_star } => write!(f, "GammaTarget::Dirac {{ t_star: {t_star} }}"),
        }
    }
}

/// Conditioning on the joint law (absorption-time density gamma* on (0, T],
/// endpoint density P* on (-inf, a] at time T) over a finite horizon T.
///
/// Construction validates the mass-consistency relation
/// `integral P* = 1 - integral gamma*` to 1e-6 and fails fast otherwise.
#[derive(Clone)]
pub struct FiniteHorizonScheme {
    horizon: f64,
    barrier: f64,
    gamma_star: GammaTarget,
    p_star: Option<DensityFn>,
}

impl fmt::Debug for FiniteHorizonScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteHorizonScheme")
            .field("horizon", &self.horizon)
            .field("barrier", &self.barrier)
            .field("gamma_star", &self.gamma_star)
            .field("p_star", &self.p_star.as_ref().map(|_| "density"))
            .finish()
    }
}

impl FiniteHorizonScheme {
    pub fn new(
        horizon: f64,
        barrier: f64,
        gamma_star: GammaTarget,
        p_star: Option<DensityFn>,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "finite-horizon scheme needs horizon > 0, got {horizon}"
            )));
        }
        let gamma_mass = match &gamma_star {
            GammaTarget::Dirac { t_star } => {
                if !(*t_star > 0.0 && *t_star <= horizon) {
                    return Err(Error::InvalidParameter(format!(
                        "Dirac absorption time must lie in (0, horizon], got t_star={t_star} horizon={horizon}"
                    )));
                }
                1.0
            }
            GammaTarget::Density(f) => {
                let r = quad::adaptive(|t| f(t), 0.0, horizon, QUAD_REL_TOL, 1e-12);
                if !r.converged {
                    return Err(Error::QuadratureNonConvergence { estimate: r.error_estimate });
                }
                r.value
            }
        };
        let p_mass = match &p_star {
            None => 0.0,
            Some(f) => {
                let r = quad::left_tail(|y| f(y), barrier, QUAD_REL_TOL, 1e-12);
                if !r.converged {
                    return Err(Error::QuadratureNonConvergence { estimate: r.error_estimate });
                }
                r.value
            }
        };
        let mismatch = (gamma_mass + p_mass - 1.0).abs();
        if mismatch > TARGET_CONSISTENCY_TOL {
            return Err(Error::InconsistentTarget {
                mismatch,
                tolerance: TARGET_CONSISTENCY_TOL,
            });
        }
        Ok(FiniteHorizonScheme { horizon, barrier, gamma_star, p_star })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn barrier(&self) -> f64 {
        self.barrier
    }

    /// The prescribed absorption time if the target is a pure bridge
    /// (Dirac gamma*, no surviving mass).
    pub fn pure_dirac_time(&self) -> Option<f64> {
        match (&self.gamma_star, &self.p_star) {
            (GammaTarget::Dirac { t_star }, None) => Some(*t_star),
            _ => None,
        }
    }
}

/// The target law imposed on the absorption time T_a.
#[derive(Clone)]
pub enum ConditioningScheme {
    /// Absorption exactly at time T* (Brownian-bridge-like conditioning).
    DiracTime { t_star: f64 },
    /// No absorption, ever.
    ForeverSurvival,
    /// First-passage-time density of BM(mu) from the origin to `a`.
    FptOfBm { mu: f64 },
    /// First-passage-time density of the tanh-drift(gamma, delta) process.
    FptOfTanh { gamma: f64, delta: f64 },
    /// First-passage-time density of the taboo process with taboo state b.
    FptOfTaboo { b_target: f64 },
    /// Joint finite-horizon target (gamma*, P*) on (0, T] x (-inf, a].
    FiniteHorizon(FiniteHorizonScheme),
}

impl fmt::Debug for ConditioningScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditioningScheme::DiracTime { t_star } => write!(f, "DiracTime {{ t_star: {t_star} }}"),
            ConditioningScheme::ForeverSurvival => f.write_str("ForeverSurvival"),
            ConditioningScheme::FptOfBm { mu } => write!(f, "FptOfBm {{ mu: {mu} }}"),
            ConditioningScheme::FptOfTanh { gamma, delta } => {
                write!(f, "FptOfTanh {{ gamma: {gamma}, delta: {delta} }}")
            }
            ConditioningScheme::FptOfTaboo { b_target } => {
                write!(f, "FptOfTaboo {{ b_target: {b_target} }}")
            }
            ConditioningScheme::FiniteHorizon(s) => write!(f, "FiniteHorizon({s:?})"),
        }
    }
}

impl ConditioningScheme {
    pub fn validate(&self) -> Result<()> {
        match self {
            ConditioningScheme::DiracTime { t_star } => {
                if !(t_star.is_finite() && *t_star > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "DiracTime needs t_star > 0, got {t_star}"
                    )));
                }
            }
            ConditioningScheme::ForeverSurvival | ConditioningScheme::FiniteHorizon(_) => {}
            ConditioningScheme::FptOfBm { mu } => {
                if !mu.is_finite() {
                    return Err(Error::InvalidParameter(format!("FptOfBm mu={mu} not finite")));
                }
            }
            ConditioningScheme::FptOfTanh { gamma, delta } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "FptOfTanh needs gamma > 0, got gamma={gamma}"
                    )));
                }
                if !delta.is_finite() {
                    return Err(Error::InvalidParameter(format!("FptOfTanh delta={delta} not finite")));
                }
            }
            ConditioningScheme::FptOfTaboo { b_target } => {
                if !b_target.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "FptOfTaboo b_target={b_target} not finite"
                    )));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Numeric helpers
// ---------------------------------------------------------------------------

/// Evaluates (sum_i c_i e^{l_i}) / (sum_j d_j e^{m_j}) by factoring the
/// largest exponent out of both sums first, so the ratio stays finite even
/// when individual terms overflow a double.
fn ratio_of_exp_sums(numer: &[(f64, f64)], denom: &[(f64, f64)]) -> f64 {
    let m = numer
        .iter()
        .chain(denom.iter())
        .map(|term| term.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let reduce = |terms: &[(f64, f64)]| -> f64 {
        terms.iter().map(|(c, l)| c * (l - m).exp()).sum()
    };
    reduce(numer) / reduce(denom)
}

fn require_origin(setup: &BarrierSetup, what: &str) -> Result<()> {
    if setup.x0 != 0.0 || setup.t0 != 0.0 {
        return Err(Error::Domain(format!(
            "{what} is derived for a process started at the origin; \
             got x0={} t0={} (need x0=0, t0=0)",
            setup.x0, setup.t0
        )));
    }
    Ok(())
}

fn check_below_barrier(x: f64, a: f64) -> Result<()> {
    if x >= a {
        return Err(Error::Domain(format!("evaluation point x={x} must lie below the barrier a={a}")));
    }
    Ok(())
}

fn check_outside_pole(x: f64, pole: f64, name: &str) -> Result<()> {
    if (pole - x).abs() <= POLE_GUARD {
        return Err(Error::Domain(format!(
            "evaluation inside the {POLE_GUARD:e} guard band of the removable pole at {name}={pole} (x={x})"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Conditioned drift: dispatch and closed-form branches
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Branch {
    Bridge { a: f64, t_star: f64 },
    ForeverTabooA { a: f64 },
    ForeverNegBm { a: f64, mu: f64 },
    ForeverWilliams { a: f64, alpha: f64 },
    TanhOnBmPos { mu: f64 },
    TanhOnBmNegTypeII { a: f64, alpha: f64, mu: f64 },
    TanhOnTanhReduced { alpha: f64, delta: f64 },
    TanhOnTanhGeneral(TanhOnTanh),
    BmOnTanhPos { a: f64, alpha: f64, beta: f64 },
    BmOnTanhNeg { a: f64, alpha: f64, beta: f64, mu: f64 },
    BmOnTanhNegRational { a: f64, mu: f64 },
    BmOnTabooPos { b_target: f64 },
    BmOnTabooNeg { a: f64, b_target: f64, mu: f64 },
    TabooOnBmPos { mu: f64 },
    TabooOnBmNeg { a: f64, mu: f64 },
    FiniteHorizonNumeric(FiniteHorizonScheme),
}

/// Precomputed constants for the tanh-on-tanh branch, the busiest drift in
/// simulation loops: a direct fast path plus a log-space fallback for
/// parameter/state combinations whose intermediate exponentials overflow.
#[derive(Clone, Debug)]
struct TanhOnTanh {
    a: f64,
    alpha: f64,
    gamma: f64,
    ct: f64, // (alpha^2 - gamma^2)/2
    // fast path: N = gamma k1 e1 - alpha k4 e2 (e3 + 1); D = k1 e1 + k4 e2 (e3 - 1)
    k1: f64, // e^{2(a gamma + delta)} + 1
    k4: f64, // (e^{2 a gamma} - 1)/(e^{2 a alpha} - 1)
    // log path
    l_t1: f64, // log k1
    l_b: f64,  // log (e^{2 a gamma} - 1) - log (e^{2 a alpha} - 1)
}

impl TanhOnTanh {
    fn new(a: f64, alpha: f64, gamma: f64, delta: f64) -> Self {
        let l_t1 = log_add_exp(2.0 * (a * gamma + delta), 0.0);
        let l_b = log_expm1(2.0 * a * gamma) - log_expm1(2.0 * a * alpha);
        TanhOnTanh {
            a,
            alpha,
            gamma,
            ct: 0.5 * (alpha * alpha - gamma * gamma),
            k1: l_t1.exp(),
            k4: l_b.exp(),
            l_t1,
            l_b,
        }
    }

    #[inline]
    fn eval(&self, x: f64, t: f64) -> f64 {
        let (a, alpha, gamma) = (self.a, self.alpha, self.gamma);
        let e1 = (self.ct * t + gamma * x).exp();
        let e2 = (alpha * x).exp();
        let e3 = (2.0 * alpha * (a - x)).exp();
        let t1 = self.k1 * e1;
        let t2 = self.k4 * e2;
        let value = (gamma * t1 - alpha * t2 * (e3 + 1.0)) / (t1 + t2 * (e3 - 1.0));
        if value.is_finite() {
            return value;
        }
        // overflow in an intermediate: redo in log space
        let lt1 = self.l_t1 + self.ct * t + gamma * x;
        let lb = self.l_b + alpha * x;
        let l2p = lb + log_add_exp(2.0 * alpha * (a - x), 0.0);
        let l2m = lb + log_expm1(2.0 * alpha * (a - x));
        ratio_of_exp_sums(&[(gamma, lt1), (-alpha, l2p)], &[(1.0, lt1), (1.0, l2m)])
    }
}

/// A resolved (source, scheme) conditioning: evaluates the closed-form
/// conditioned drift mu*(x, t) for the branch selected by the dispatch table.
#[derive(Clone, Debug)]
pub struct ConditionedDrift {
    source: DriftModel,
    setup: BarrierSetup,
    scheme: ConditioningScheme,
    branch: Branch,
}

impl ConditionedDrift {
    pub fn new(source: &DriftModel, setup: BarrierSetup, scheme: ConditioningScheme) -> Result<Self> {
        source.validate_with(&setup)?;
        scheme.validate()?;
        if matches!(source, DriftModel::Conditioned { .. }) {
            return Err(Error::Dispatch(format!(
                "conditioning an already-conditioned process is not supported; {SUPPORTED_PAIRS}"
            )));
        }
        let a = setup.a;
        let branch = match (&source, &scheme) {
            (_, ConditioningScheme::DiracTime { t_star }) => {
                if *t_star <= setup.t0 {
                    return Err(Error::InvalidParameter(format!(
                        "DiracTime t_star={t_star} must exceed the start time t0={}",
                        setup.t0
                    )));
                }
                Branch::Bridge { a, t_star: *t_star }
            }
            (_, ConditioningScheme::FiniteHorizon(fh)) => {
                if fh.barrier() != a {
                    return Err(Error::InvalidParameter(format!(
                        "finite-horizon scheme was validated for barrier {}, used with barrier {a}",
                        fh.barrier()
                    )));
                }
                match fh.pure_dirac_time() {
                    Some(t_star) => Branch::Bridge { a, t_star },
                    None => Branch::FiniteHorizonNumeric(fh.clone()),
                }
            }
            (DriftModel::Bm { mu }, ConditioningScheme::ForeverSurvival) => {
                if *mu < 0.0 {
                    Branch::ForeverNegBm { a, mu: *mu }
                } else {
                    Branch::ForeverTabooA { a }
                }
            }
            (DriftModel::TanhDrift { alpha, .. }, ConditioningScheme::ForeverSurvival) => {
                Branch::ForeverWilliams { a, alpha: *alpha }
            }
            (DriftModel::Taboo { .. }, ConditioningScheme::ForeverSurvival) => Branch::ForeverTabooA { a },
            (DriftModel::TanhDrift { alpha, .. }, ConditioningScheme::FptOfBm { mu }) => {
                if *mu >= 0.0 {
                    Branch::TanhOnBmPos { mu: *mu }
                } else {
                    Branch::TanhOnBmNegTypeII { a, alpha: *alpha, mu: *mu }
                }
            }
            (DriftModel::TanhDrift { alpha, .. }, ConditioningScheme::FptOfTanh { gamma, delta }) => {
                if *gamma == *alpha {
                    Branch::TanhOnTanhReduced { alpha: *alpha, delta: *delta }
                } else {
                    Branch::TanhOnTanhGeneral(TanhOnTanh::new(a, *alpha, *gamma, *delta))
                }
            }
            (DriftModel::Bm { mu }, ConditioningScheme::FptOfTanh { gamma, delta }) => {
                if *mu >= 0.0 {
                    Branch::BmOnTanhPos { a, alpha: *gamma, beta: *delta }
                } else if *gamma == -*mu && *delta == 0.0 {
                    Branch::BmOnTanhNegRational { a, mu: *mu }
                } else {
                    Branch::BmOnTanhNeg { a, alpha: *gamma, beta: *delta, mu: *mu }
                }
            }
            (DriftModel::Bm { mu }, ConditioningScheme::FptOfTaboo { b_target }) => {
                if !(*b_target > a) {
                    return Err(Error::InvalidParameter(format!(
                        "FptOfTaboo target needs b_target > a, got b_target={b_target} a={a}"
                    )));
                }
                if *mu >= 0.0 {
                    Branch::BmOnTabooPos { b_target: *b_target }
                } else {
                    Branch::BmOnTabooNeg { a, b_target: *b_target, mu: *mu }
                }
            }
            (DriftModel::Taboo { .. }, ConditioningScheme::FptOfBm { mu }) => {
                if *mu >= 0.0 {
                    Branch::TabooOnBmPos { mu: *mu }
                } else {
                    Branch::TabooOnBmNeg { a, mu: *mu }
                }
            }
            _ => {
                return Err(Error::Dispatch(format!(
                    "no closed-form conditioning for source {source:?} under scheme {scheme:?}; {SUPPORTED_PAIRS}"
                )))
            }
        };
        Ok(ConditionedDrift { source: source.clone(), setup, scheme, branch })
    }

    pub fn source(&self) -> &DriftModel {
        &self.source
    }

    pub fn setup(&self) -> &BarrierSetup {
        &self.setup
    }

    pub fn scheme(&self) -> &ConditioningScheme {
        &self.scheme
    }

    /// Identifier of the closed-form branch selected by dispatch.
    pub fn label(&self) -> &'static str {
        match &self.branch {
            Branch::Bridge { .. } => "bridge",
            Branch::ForeverTabooA { .. } => "forever-survival-taboo-a",
            Branch::ForeverNegBm { .. } => "forever-survival-bm-neg",
            Branch::ForeverWilliams { .. } => "forever-survival-williams",
            Branch::TanhOnBmPos { .. } => "tanh-on-bm-fpt-pos",
            Branch::TanhOnBmNegTypeII { .. } => "tanh-on-bm-fpt-neg-type-ii",
            Branch::TanhOnTanhReduced { .. } => "tanh-on-tanh-fpt-reduced",
            Branch::TanhOnTanhGeneral(_) => "tanh-on-tanh-fpt-general",
            Branch::BmOnTanhPos { .. } => "bm-on-tanh-fpt-pos",
            Branch::BmOnTanhNeg { .. } => "bm-on-tanh-fpt-neg",
            Branch::BmOnTanhNegRational { .. } => "bm-on-tanh-fpt-neg-rational",
            Branch::BmOnTabooPos { .. } => "bm-on-taboo-fpt-pos",
            Branch::BmOnTabooNeg { .. } => "bm-on-taboo-fpt-neg",
            Branch::TabooOnBmPos { .. } => "taboo-on-bm-fpt-pos",
            Branch::TabooOnBmNeg { .. } => "taboo-on-bm-fpt-neg",
            Branch::FiniteHorizonNumeric(_) => "finite-horizon-numeric",
        }
    }

    /// The boundary the simulator must clamp against (infinitely repelling),
    /// if this branch has one. The bridge barrier is included: the exact
    /// Dirac-time process cannot touch `a` before its deadline (the `-1/(a-x)`
    /// pole always wins in continuous time), so discrete near-approaches must
    /// be clamped rather than absorbed early.
    pub fn singular_boundary(&self) -> Option<f64> {
        match &self.branch {
            Branch::Bridge { a, .. }
            | Branch::ForeverTabooA { a }
            | Branch::ForeverNegBm { a, .. }
            | Branch::ForeverWilliams { a, .. } => Some(*a),
            Branch::BmOnTabooPos { b_target } => Some(*b_target),
            _ => None,
        }
    }

    /// Whether paths of the conditioned process are absorbed at the barrier
    /// (false for forever-survival conditionings, whose barrier repels, and
    /// for the bridge, whose absorption happens at the deadline instead).
    pub fn absorbs_at_barrier(&self) -> bool {
        !matches!(
            self.branch,
            Branch::Bridge { .. }
                | Branch::ForeverTabooA { .. }
                | Branch::ForeverNegBm { .. }
                | Branch::ForeverWilliams { .. }
        )
    }

    /// The prescribed absorption time, for bridge-type branches.
    pub fn absorb_deadline(&self) -> Option<f64> {
        match &self.branch {
            Branch::Bridge { t_star, .. } => Some(*t_star),
            _ => None,
        }
    }

    /// Closed-form conditioned drift with domain checks.
    pub fn drift(&self, x: f64, t: f64) -> Result<f64> {
        let a = self.setup.a;
        match &self.branch {
            Branch::Bridge { t_star, .. } => {
                check_outside_pole(x, a, "a")?;
                check_below_barrier(x, a)?;
                if t >= *t_star {
                    return Err(Error::Domain(format!(
                        "bridge drift is defined for t < t_star={t_star}, got t={t}"
                    )));
                }
            }
            Branch::ForeverTabooA { .. } | Branch::ForeverNegBm { .. } | Branch::ForeverWilliams { .. } => {
                check_outside_pole(x, a, "a")?;
                check_below_barrier(x, a)?;
            }
            Branch::BmOnTabooPos { b_target } | Branch::BmOnTabooNeg { b_target, .. } => {
                check_outside_pole(x, *b_target, "b")?;
                if matches!(self.branch, Branch::BmOnTabooNeg { .. }) {
                    check_below_barrier(x, a)?;
                } else if x >= *b_target {
                    return Err(Error::Domain(format!(
                        "taboo(b) drift is defined below b={b_target}, got x={x}"
                    )));
                }
            }
            Branch::BmOnTanhNeg { .. } | Branch::BmOnTanhNegRational { .. } => {
                check_outside_pole(x, a, "a")?;
                check_below_barrier(x, a)?;
            }
            Branch::FiniteHorizonNumeric(fh) => {
                check_below_barrier(x, a)?;
                if t >= fh.horizon() {
                    return Err(Error::Domain(format!(
                        "finite-horizon drift is defined for t < T={}, got t={t}",
                        fh.horizon()
                    )));
                }
            }
            _ => check_below_barrier(x, a)?,
        }
        if let Branch::FiniteHorizonNumeric(fh) = &self.branch {
            return drift_finite_horizon(&self.source, &self.setup, fh, SpaceTimePoint::new(x, t));
        }
        Ok(self.drift_unchecked(x, t))
    }

    /// Branch evaluation without domain checks; the simulator guarantees its
    /// states stay inside the domain (and maps non-finite values to
    /// diagnostics). Not meaningful for finite-horizon numeric branches.
    #[inline]
    pub(crate) fn drift_unchecked(&self, x: f64, t: f64) -> f64 {
        match &self.branch {
            Branch::Bridge { a, t_star } => -1.0 / (a - x) + (a - x) / (t_star - t),
            Branch::ForeverTabooA { a } => -1.0 / (a - x),
            Branch::ForeverNegBm { a, mu } => -mu / (mu * (a - x)).tanh(),
            Branch::ForeverWilliams { a, alpha } => -alpha / (alpha * (a - x)).tanh(),
            Branch::TanhOnBmPos { mu } | Branch::TabooOnBmPos { mu } => *mu,
            Branch::TanhOnBmNegTypeII { a, alpha, mu } => {
                type_ii_drift(*a, *alpha, *mu, x, t)
            }
            Branch::TanhOnTanhReduced { alpha, delta } => alpha * (alpha * x + delta).tanh(),
            Branch::TanhOnTanhGeneral(c) => c.eval(x, t),
            Branch::BmOnTanhPos { a, alpha, beta } => bm_on_tanh_pos_drift(*a, *alpha, *beta, x, t),
            Branch::BmOnTanhNeg { a, alpha, beta, mu } => {
                bm_on_tanh_neg_general_drift(*a, *alpha, *beta, *mu, x, t)
            }
            Branch::BmOnTanhNegRational { a, mu } => bm_on_tanh_neg_rational_drift(*a, *mu, x),
            Branch::BmOnTabooPos { b_target } => -1.0 / (b_target - x),
            Branch::BmOnTabooNeg { a, b_target, mu } => {
                bm_on_taboo_neg_drift(*a, *b_target, *mu, x, t)
            }
            Branch::TabooOnBmNeg { a, mu } => taboo_on_bm_neg_drift(*a, *mu, x, t),
            Branch::FiniteHorizonNumeric(_) => f64::NAN,
        }
    }
}

// --- closed-form branch bodies (shared between dispatch and direct ops) ---

/// Time-inhomogeneous drift of the tanh(alpha, beta) process conditioned on
/// the BM(mu < 0) first-passage density (the "type II" process); independent
/// of beta.
fn type_ii_drift(a: f64, alpha: f64, mu: f64, x: f64, t: f64) -> f64 {
    let big_l = a - x;
    let e1 = 2.0 * a * mu - (mu + alpha) * x + 0.5 * (alpha * alpha - mu * mu) * t;
    // log(1 - e^{2 a mu}) and log(e^{2 a alpha} - 1), both arguments positive
    let lc2 = log1m_exp(2.0 * a * mu);
    let lden = log_expm1(2.0 * a * alpha);
    let numer = [
        (-(mu + alpha), e1),
        (-2.0 * alpha, 2.0 * alpha * big_l + lc2 - lden),
    ];
    let denom = [(1.0, e1), (1.0, lc2 + log_expm1(2.0 * alpha * big_l) - lden)];
    alpha + ratio_of_exp_sums(&numer, &denom)
}

/// Drift of BM(mu >= 0) conditioned on the tanh(alpha, beta) first-passage
/// density; independent of mu.
fn bm_on_tanh_pos_drift(a: f64, alpha: f64, beta: f64, x: f64, t: f64) -> f64 {
    let l1 = alpha * x + beta + log_cosh(a * alpha + beta);
    let l2 = log_sinh(a * alpha) + 0.5 * alpha * alpha * t;
    ratio_of_exp_sums(
        &[(a * alpha, l1), (-1.0, l2)],
        &[(a, l1), (a - x, l2)],
    )
}

/// Three-parameter drift of BM(mu < 0) conditioned on the tanh(alpha, beta)
/// first-passage density, as displayed in the summary table.
pub(crate) fn bm_on_tanh_neg_general_drift(a: f64, alpha: f64, beta: f64, mu: f64, x: f64, t: f64) -> f64 {
    let big_l = a - x;
    let lw = (2.0 * a / big_l).ln()
        + a * alpha
        + beta
        + log_cosh(a * alpha + beta)
        + 0.5 * (mu * mu - alpha * alpha) * t
        + alpha * x;
    // e^{a alpha} sinh(a alpha)/sinh(a mu) with mu < 0: magnitude lk, sign -1
    let lk = a * alpha + log_sinh(a * alpha) - log_sinh(a * mu.abs());
    let numer = [
        (alpha + 1.0 / big_l, lw),
        (2.0 * mu, lk + log_cosh(mu * big_l)),
    ];
    let denom = [(1.0, lw), (2.0, lk + log_sinh(mu.abs() * big_l))];
    ratio_of_exp_sums(&numer, &denom)
}

/// Time-independent rational-exponential simplification of the branch above
/// at alpha = -mu, beta = 0.
pub(crate) fn bm_on_tanh_neg_rational_drift(a: f64, mu: f64, x: f64) -> f64 {
    let big_l = a - x;
    let numer = [
        (a + a * mu * (x - a), 0.0),
        (mu * big_l * big_l, 2.0 * mu * x),
        (a + mu * x * x - a * mu * x, 2.0 * a * mu),
    ];
    let denom = [(a, 0.0), (big_l, 2.0 * mu * x), (x, 2.0 * a * mu)];
    ratio_of_exp_sums(&numer, &denom) / big_l
}

/// Drift of BM(mu < 0) conditioned on the taboo(b) first-passage density.
fn bm_on_taboo_neg_drift(a: f64, b: f64, mu: f64, x: f64, t: f64) -> f64 {
    let big_l = a - x;
    let le = 0.5 * mu * mu * t - mu * x;
    let lc2 = log1m_exp(2.0 * a * mu);
    let numer = [
        (-mu * (b - a), le),
        (2.0 * a * mu, 2.0 * mu * big_l - lc2),
    ];
    let denom = [
        (b - a, le),
        (a, log1m_exp(2.0 * mu * big_l) - lc2),
    ];
    mu + ratio_of_exp_sums(&numer, &denom)
}

/// Drift of the taboo(b) process conditioned on the BM(mu < 0) first-passage
/// density; independent of b.
fn taboo_on_bm_neg_drift(a: f64, mu: f64, x: f64, t: f64) -> f64 {
    let le = log_sinh(a * mu.abs()) + 0.5 * mu * mu * t + mu * (x - a);
    let numer = [(-2.0, le), (-a * mu, 0.0)];
    let denom = [(a, 0.0), (2.0 * (a - x), le)];
    ratio_of_exp_sums(&numer, &denom)
}

// ---------------------------------------------------------------------------
// Named drift operations
// ---------------------------------------------------------------------------

/// Drift under Dirac-time conditioning (absorption exactly at t_star): the
/// generalized-bridge drift, identical for every source family.
pub fn drift_dirac_time(setup: &BarrierSetup, t_star: f64, p: SpaceTimePoint) -> Result<f64> {
    let source = DriftModel::Bm { mu: 0.0 }; // any source: the branch is universal
    ConditionedDrift::new(&source, *setup, ConditioningScheme::DiracTime { t_star })?.drift(p.x, p.t)
}

/// Drift under forever-survival conditioning.
pub fn drift_forever_survival(source: &DriftModel, setup: &BarrierSetup, p: SpaceTimePoint) -> Result<f64> {
    ConditionedDrift::new(source, *setup, ConditioningScheme::ForeverSurvival)?.drift(p.x, p.t)
}

/// Drift of tanh(alpha, beta) conditioned on the BM(mu) first-passage
/// density: constant mu when mu >= 0, the type-II expression when mu < 0.
pub fn drift_tanh_on_bm_fpt(
    alpha: f64,
    beta: f64,
    setup: &BarrierSetup,
    mu: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    let source = DriftModel::TanhDrift { alpha, beta };
    ConditionedDrift::new(&source, *setup, ConditioningScheme::FptOfBm { mu })?.drift(p.x, p.t)
}

/// Drift of tanh(alpha, beta) conditioned on the tanh(gamma, delta)
/// first-passage density; reduces to the tanh(gamma, delta) drift itself when
/// gamma = alpha.
pub fn drift_tanh_on_tanh_fpt(
    alpha: f64,
    beta: f64,
    setup: &BarrierSetup,
    gamma: f64,
    delta: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    let source = DriftModel::TanhDrift { alpha, beta };
    ConditionedDrift::new(&source, *setup, ConditioningScheme::FptOfTanh { gamma, delta })?
        .drift(p.x, p.t)
}

/// Drift of BM(mu) conditioned on the tanh(alpha, beta) first-passage
/// density.
pub fn drift_bm_on_tanh_fpt(
    mu: f64,
    setup: &BarrierSetup,
    alpha: f64,
    beta: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    let source = DriftModel::Bm { mu };
    ConditionedDrift::new(&source, *setup, ConditioningScheme::FptOfTanh { gamma: alpha, delta: beta })?
        .drift(p.x, p.t)
}

/// Drift of BM(mu) conditioned on the taboo(b_target) first-passage density.
pub fn drift_bm_on_taboo_fpt(
    mu: f64,
    setup: &BarrierSetup,
    b_target: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    let source = DriftModel::Bm { mu };
    ConditionedDrift::new(&source, *setup, ConditioningScheme::FptOfTaboo { b_target })?.drift(p.x, p.t)
}

/// Drift of the taboo(b) process conditioned on the BM(mu) first-passage
/// density: constant mu when mu >= 0, a b-independent expression when mu < 0.
pub fn drift_taboo_on_bm_fpt(
    b: f64,
    setup: &BarrierSetup,
    mu: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    let source = DriftModel::Taboo { b };
    ConditionedDrift::new(&source, *setup, ConditioningScheme::FptOfBm { mu })?.drift(p.x, p.t)
}

// ---------------------------------------------------------------------------
// Q-functions
// ---------------------------------------------------------------------------

/// Q for Dirac-time conditioning: the ratio gamma(t*|x,t) / gamma(t*|x0,t0).
fn q_dirac_time(source: &DriftModel, setup: &BarrierSetup, t_star: f64, p: SpaceTimePoint) -> Result<f64> {
    check_below_barrier(p.x, setup.a)?;
    if !(p.t < t_star) {
        return Err(Error::Domain(format!(
            "Dirac-time Q is defined for t < t_star={t_star}, got t={}",
            p.t
        )));
    }
    let num = log_fpt_density_from(source, setup.a, p.x, p.t, t_star)?;
    let den = log_fpt_density_from(source, setup.a, setup.x0, setup.t0, t_star)?;
    Ok((num - den).exp())
}

/// Q for forever-survival conditioning: the ratio of space-time harmonic
/// survival functions, normalized at the start point.
fn q_forever_survival(source: &DriftModel, setup: &BarrierSetup, p: SpaceTimePoint) -> Result<f64> {
    check_below_barrier(p.x, setup.a)?;
    match source {
        DriftModel::Bm { mu } if *mu >= 0.0 => {
            // S(inf|.) vanishes identically for mu >= 0; the conditioning is
            // the h-transform with the space-time harmonic (a - x) e^{-mu x + mu^2 t/2}
            let big_l = setup.a - p.x;
            let l0 = setup.a - setup.x0;
            Ok((big_l / l0)
                * (-mu * (p.x - setup.x0) + 0.5 * mu * mu * (p.t - setup.t0)).exp())
        }
        _ => {
            let s_x = analytics::survival_forever_from(source, setup.a, p.x)?;
            let s_0 = analytics::survival_forever_from(source, setup.a, setup.x0)?;
            Ok(s_x / s_0)
        }
    }
}

fn q_tanh_on_bm(
    alpha: f64,
    beta: f64,
    setup: &BarrierSetup,
    mu: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    require_origin(setup, "Q for conditioning on a first-passage density")?;
    check_below_barrier(p.x, setup.a)?;
    let a = setup.a;
    let pref = log_cosh(beta) - log_cosh(alpha * p.x + beta);
    if mu >= 0.0 {
        Ok((pref + 0.5 * (alpha * alpha - mu * mu) * p.t + mu * p.x).exp())
    } else {
        let t1 = 2.0 * a * mu + 0.5 * (alpha * alpha - mu * mu) * p.t - mu * p.x;
        let t2 = log1m_exp(2.0 * mu * a) + log_sinh(alpha * (a - p.x)) - log_sinh(a * alpha);
        Ok((pref + log_add_exp(t1, t2)).exp())
    }
}

fn q_tanh_on_tanh(
    alpha: f64,
    beta: f64,
    setup: &BarrierSetup,
    gamma: f64,
    delta: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    require_origin(setup, "Q for conditioning on a first-passage density")?;
    check_below_barrier(p.x, setup.a)?;
    let a = setup.a;
    if gamma == alpha {
        // cosh(beta) cosh(alpha x + delta) / (cosh(alpha x + beta) cosh(delta))
        return Ok((log_cosh(beta) + log_cosh(alpha * p.x + delta)
            - log_cosh(alpha * p.x + beta)
            - log_cosh(delta))
        .exp());
    }
    let pref = log_cosh(beta) - log_cosh(alpha * p.x + beta) - a * gamma - delta - log_cosh(delta);
    let t1 = log_cosh(a * gamma + delta) + delta + 0.5 * (alpha * alpha - gamma * gamma) * p.t + gamma * p.x;
    let t2 = log_sinh(a * gamma) - log_sinh(a * alpha) + log_sinh(alpha * (a - p.x));
    Ok((pref + log_add_exp(t1, t2)).exp())
}

fn q_bm_on_tanh(
    mu: f64,
    setup: &BarrierSetup,
    alpha: f64,
    beta: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    require_origin(setup, "Q for conditioning on a first-passage density")?;
    check_below_barrier(p.x, setup.a)?;
    let a = setup.a;
    let big_l = a - p.x;
    let log_r = log_cosh(alpha * a + beta) - log_cosh(beta);
    // S*(inf) = 1 - R e^{-a alpha} = e^{-a alpha - beta} sinh(a alpha)/cosh(beta)
    let log_s = -a * alpha - beta + log_sinh(a * alpha) - log_cosh(beta);
    if mu >= 0.0 {
        let t1 = log_r - 0.5 * alpha * alpha * p.t - alpha * big_l;
        let t2 = (big_l / a).ln() + log_s;
        Ok((-mu * p.x + 0.5 * mu * mu * p.t + log_add_exp(t1, t2)).exp())
    } else {
        let t1 = (a / big_l).ln() + log_r - mu * p.x + 0.5 * (mu * mu - alpha * alpha) * p.t
            - alpha * big_l;
        let t2 = log_s + log1m_exp(2.0 * mu * big_l) - log1m_exp(2.0 * mu * a);
        Ok(log_add_exp(t1, t2).exp())
    }
}

fn q_bm_on_taboo(
    mu: f64,
    setup: &BarrierSetup,
    b_target: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    require_origin(setup, "Q for conditioning on a first-passage density")?;
    let a = setup.a;
    if !(b_target > a) {
        return Err(Error::InvalidParameter(format!(
            "FptOfTaboo target needs b_target > a, got b_target={b_target} a={a}"
        )));
    }
    if p.x >= b_target {
        return Err(Error::Domain(format!(
            "Q is defined below the taboo state b={b_target}, got x={}",
            p.x
        )));
    }
    let e = (-mu * p.x + 0.5 * mu * mu * p.t).exp();
    if mu >= 0.0 {
        check_below_barrier(p.x, b_target)?;
        Ok((b_target - p.x) / b_target * e)
    } else {
        check_below_barrier(p.x, a)?;
        let big_l = a - p.x;
        let ratio = (2.0 * mu * big_l).exp_m1() / (2.0 * mu * a).exp_m1();
        Ok((b_target - a) / b_target * e + a / b_target * ratio)
    }
}

fn q_taboo_on_bm(
    b: f64,
    setup: &BarrierSetup,
    mu: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    require_origin(setup, "Q for conditioning on a first-passage density")?;
    let a = setup.a;
    if p.x >= b {
        return Err(Error::Domain(format!(
            "Q is defined below the taboo state b={b}, got x={}",
            p.x
        )));
    }
    if mu >= 0.0 {
        Ok(b / (b - p.x) * (mu * p.x - 0.5 * mu * mu * p.t).exp())
    } else {
        check_below_barrier(p.x, a)?;
        let t1 = (2.0 * a * mu - 0.5 * mu * mu * p.t - mu * p.x).exp();
        let t2 = (-(2.0 * a * mu).exp_m1()) * (a - p.x) / a;
        Ok(b / (b - p.x) * (t1 + t2))
    }
}

/// The closed-form Q for each supported (source, scheme) pair: forever
/// survival, Dirac time, and the foreign-first-passage-density targets.
///
/// Strictly positive on its domain; normalized to 1 at the start point.
/// First-passage-density targets require an origin start (x0=0, t0=0).
pub fn q_forever_and_partial(
    source: &DriftModel,
    setup: &BarrierSetup,
    scheme: &ConditioningScheme,
    p: SpaceTimePoint,
) -> Result<f64> {
    source.validate_with(setup)?;
    scheme.validate()?;
    match (source, scheme) {
        (_, ConditioningScheme::DiracTime { t_star }) => q_dirac_time(source, setup, *t_star, p),
        (_, ConditioningScheme::ForeverSurvival) => {
            if let DriftModel::Conditioned { .. } = source {
                Err(Error::Dispatch(format!(
                    "no Q-function for source {source:?}; {SUPPORTED_PAIRS}"
                )))
            } else {
                q_forever_survival(source, setup, p)
            }
        }
        (DriftModel::TanhDrift { alpha, beta }, ConditioningScheme::FptOfBm { mu }) => {
            q_tanh_on_bm(*alpha, *beta, setup, *mu, p)
        }
        (DriftModel::TanhDrift { alpha, beta }, ConditioningScheme::FptOfTanh { gamma, delta }) => {
            q_tanh_on_tanh(*alpha, *beta, setup, *gamma, *delta, p)
        }
        (DriftModel::Bm { mu }, ConditioningScheme::FptOfTanh { gamma, delta }) => {
            q_bm_on_tanh(*mu, setup, *gamma, *delta, p)
        }
        (DriftModel::Bm { mu }, ConditioningScheme::FptOfTaboo { b_target }) => {
            q_bm_on_taboo(*mu, setup, *b_target, p)
        }
        (DriftModel::Taboo { b }, ConditioningScheme::FptOfBm { mu }) => {
            q_taboo_on_bm(*b, setup, *mu, p)
        }
        (_, ConditioningScheme::FiniteHorizon(fh)) => q_finite_horizon(source, setup, fh, p),
        _ => Err(Error::Dispatch(format!(
            "no closed-form Q for source {source:?} under scheme {scheme:?}; {SUPPORTED_PAIRS}"
        ))),
    }
}

/// Finite-horizon Q_T: the first-passage-ratio integral over (t, T] plus the
/// endpoint-ratio integral over (-inf, a], both against the prescribed
/// target densities.
pub fn q_finite_horizon(
    source: &DriftModel,
    setup: &BarrierSetup,
    scheme: &FiniteHorizonScheme,
    p: SpaceTimePoint,
) -> Result<f64> {
    source.validate_with(setup)?;
    if matches!(source, DriftModel::Conditioned { .. }) {
        return Err(Error::Dispatch(format!(
            "finite-horizon Q needs a base-family source; {SUPPORTED_PAIRS}"
        )));
    }
    if scheme.barrier() != setup.a {
        return Err(Error::InvalidParameter(format!(
            "finite-horizon scheme was validated for barrier {}, used with barrier {}",
            scheme.barrier(),
            setup.a
        )));
    }
    let a = setup.a;
    check_below_barrier(p.x, a)?;
    let big_t = scheme.horizon();
    if !(p.t >= setup.t0 && p.t < big_t) {
        return Err(Error::Domain(format!(
            "finite-horizon Q is defined for t0 <= t < T={big_t}, got t={}",
            p.t
        )));
    }

    let fpt_part = match &scheme.gamma_star {
        GammaTarget::Dirac { t_star } => {
            if p.t < *t_star {
                let num = log_fpt_density_from(source, a, p.x, p.t, *t_star)?;
                let den = log_fpt_density_from(source, a, setup.x0, setup.t0, *t_star)?;
                (num - den).exp()
            } else {
                0.0
            }
        }
        GammaTarget::Density(f) => {
            let model = source.clone();
            let (x, t, x0, t0) = (p.x, p.t, setup.x0, setup.t0);
            let integrand = move |ta: f64| {
                let target = f(ta);
                if target == 0.0 {
                    return 0.0;
                }
                let num = log_fpt_density_from(&model, a, x, t, ta).unwrap_or(f64::NEG_INFINITY);
                let den = log_fpt_density_from(&model, a, x0, t0, ta).unwrap_or(f64::NEG_INFINITY);
                target * (num - den).exp()
            };
            let r = quad::fpt_window(integrand, p.t, big_t, a - p.x, QUAD_REL_TOL, 1e-14);
            if !r.converged {
                return Err(Error::QuadratureNonConvergence { estimate: r.error_estimate });
            }
            r.value
        }
    };

    let endpoint_part = match &scheme.p_star {
        None => 0.0,
        Some(f) => {
            let model = source.clone();
            let (x, t, x0, t0) = (p.x, p.t, setup.x0, setup.t0);
            let setup_copy = *setup;
            let integrand = move |y: f64| {
                let target = f(y);
                if target == 0.0 {
                    return 0.0;
                }
                let num = propagator_absorbed(
                    &model,
                    &setup_copy,
                    SpaceTimePoint::new(x, t),
                    SpaceTimePoint::new(y, big_t),
                )
                .unwrap_or(0.0);
                if num == 0.0 {
                    return 0.0;
                }
                let den = propagator_absorbed(
                    &model,
                    &setup_copy,
                    SpaceTimePoint::new(x0, t0),
                    SpaceTimePoint::new(y, big_t),
                )
                .unwrap_or(0.0);
                if den == 0.0 {
                    return 0.0;
                }
                target * num / den
            };
            let r = quad::left_tail(integrand, a, QUAD_REL_TOL, 1e-14);
            if !r.converged {
                return Err(Error::QuadratureNonConvergence { estimate: r.error_estimate });
            }
            r.value
        }
    };

    let q = fpt_part + endpoint_part;
    if !(q > 0.0) {
        return Err(Error::Domain(format!(
            "finite-horizon Q vanished at (x={}, t={}): the target puts no mass after t",
            p.x, p.t
        )));
    }
    Ok(q)
}

/// Finite-difference step for d/dx log Q.
fn fd_step(x: f64) -> f64 {
    (1e-7f64).max(1e-7 * x.abs())
}

/// Finite-horizon conditioned drift: closed form for the pure-Dirac target,
/// otherwise mu(x) plus a central finite difference of log Q_T.
///
/// The result is independent of the source family (the ratio structure of
/// Q_T cancels the source's own drift); this is asserted by the test suite
/// rather than exploited by the implementation.
pub fn drift_finite_horizon(
    source: &DriftModel,
    setup: &BarrierSetup,
    scheme: &FiniteHorizonScheme,
    p: SpaceTimePoint,
) -> Result<f64> {
    if let Some(t_star) = scheme.pure_dirac_time() {
        return drift_dirac_time(setup, t_star, p);
    }
    let h = fd_step(p.x);
    if p.x + h >= setup.a {
        return Err(Error::Domain(format!(
            "finite-difference stencil would cross the barrier: x={} h={h} a={}",
            p.x, setup.a
        )));
    }
    let q_hi = q_finite_horizon(source, setup, scheme, SpaceTimePoint::new(p.x + h, p.t))?;
    let q_lo = q_finite_horizon(source, setup, scheme, SpaceTimePoint::new(p.x - h, p.t))?;
    let slope = (q_hi.ln() - q_lo.ln()) / (2.0 * h);
    Ok(drift_value(source, p)? + slope)
}

// ---------------------------------------------------------------------------
// Conditioned propagator and survival (tanh source, tanh target)
// ---------------------------------------------------------------------------

/// Transition density of the tanh(alpha, beta) process conditioned on the
/// tanh(gamma, delta) first-passage density, from the origin: the product of
/// the absorbed propagator and Q. Requires x0 = 0, t0 = 0.
pub fn conditioned_propagator_tanh_on_tanh(
    alpha: f64,
    beta: f64,
    setup: &BarrierSetup,
    gamma: f64,
    delta: f64,
    p: SpaceTimePoint,
) -> Result<f64> {
    require_origin(setup, "the conditioned propagator")?;
    if p.x > setup.a {
        return Err(Error::Domain(format!(
            "conditioned propagator is supported on x <= a, got x={} a={}",
            p.x, setup.a
        )));
    }
    let source = DriftModel::TanhDrift { alpha, beta };
    let kernel = propagator_absorbed(
        &source,
        setup,
        SpaceTimePoint::new(setup.x0, setup.t0),
        p,
    )?;
    if kernel == 0.0 {
        return Ok(0.0);
    }
    let q = q_tanh_on_tanh(alpha, beta, setup, gamma, delta, p)?;
    Ok(q * kernel)
}

/// Survival probability of the conditioned process above: independent of the
/// source parameters (alpha, beta) and equal to the survival of the target
/// tanh(gamma, delta) process from the origin.
pub fn conditioned_survival_tanh_on_tanh(
    gamma: f64,
    delta: f64,
    setup: &BarrierSetup,
    t: f64,
) -> Result<f64> {
    require_origin(setup, "the conditioned survival probability")?;
    let target = DriftModel::TanhDrift { alpha: gamma, beta: delta };
    analytics::survival_to_t(&target, setup, t)
}

// ---------------------------------------------------------------------------
// QFunction and the reciprocity checker
// ---------------------------------------------------------------------------

/// A Q-function packaged as an evaluator, for grid sweeps and reciprocity
/// checks.
#[derive(Clone)]
pub struct QFunction {
    evaluator: Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync>,
    pub closed_form: bool,
    pub description: String,
}

impl fmt::Debug for QFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QFunction")
            .field("closed_form", &self.closed_form)
            .field("description", &self.description)
            .finish()
    }
}

impl QFunction {
    pub fn new<F>(description: impl Into<String>, closed_form: bool, evaluator: F) -> Self
    where
        F: Fn(f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        QFunction {
            evaluator: Arc::new(evaluator),
            closed_form,
            description: description.into(),
        }
    }

    /// The Q of a (source, scheme) pair under the standard dispatch.
    pub fn for_scheme(
        source: &DriftModel,
        setup: &BarrierSetup,
        scheme: &ConditioningScheme,
    ) -> Result<QFunction> {
        // resolve eagerly so unsupported pairs fail at construction
        let probe = SpaceTimePoint::new(setup.x0, setup.t0);
        match q_forever_and_partial(source, setup, scheme, probe) {
            Ok(_) => {}
            Err(Error::Domain(_)) | Err(Error::QuadratureNonConvergence { .. }) => {}
            Err(e) => return Err(e),
        }
        let closed_form = !matches!(scheme, ConditioningScheme::FiniteHorizon(_));
        let description = format!("Q[{source:?} | {scheme:?}, a={}]", setup.a);
        let (source, setup, scheme) = (source.clone(), *setup, scheme.clone());
        Ok(QFunction::new(description, closed_form, move |x, t| {
            q_forever_and_partial(&source, &setup, &scheme, SpaceTimePoint::new(x, t))
        }))
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        (self.evaluator)(x, t)
    }
}

/// Max over the grid of |q_forward * q_backward - 1|: zero (to rounding) for
/// mutually inverse conditionings.
pub fn reciprocity_check(
    q_forward: &QFunction,
    q_backward: &QFunction,
    grid: &[SpaceTimePoint],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in grid {
        let f = q_forward.eval(p.x, p.t)?;
        let b = q_backward.eval(p.x, p.t)?;
        worst = worst.max((f * b - 1.0).abs());
    }
    Ok(worst)
}

#[cfg(test)]
// Reference values are frozen at 17 significant digits (lossless f64
// round-trip) even where fewer digits would parse to the same value.
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::analytics::{BarrierSetup, DriftModel, SpaceTimePoint};

    fn origin_setup(a: f64) -> BarrierSetup {
        BarrierSetup::new(a, 0.0, 0.0).unwrap()
    }

    fn bm(mu: f64) -> DriftModel {
        DriftModel::Bm { mu }
    }
    fn tanh_drift(alpha: f64, beta: f64) -> DriftModel {
        DriftModel::TanhDrift { alpha, beta }
    }
    fn taboo(b: f64) -> DriftModel {
        DriftModel::Taboo { b }
    }

    fn label_of(source: &DriftModel, scheme: ConditioningScheme) -> &'static str {
        ConditionedDrift::new(source, origin_setup(1.0), scheme)
            .unwrap()
            .label()
    }

    #[test]
    fn dispatch_labels_match_the_branch_table() {
        use ConditioningScheme as S;
        assert_eq!(label_of(&bm(0.3), S::DiracTime { t_star: 1.0 }), "bridge");
        assert_eq!(label_of(&tanh_drift(1.0, 0.0), S::DiracTime { t_star: 1.0 }), "bridge");
        assert_eq!(label_of(&taboo(2.0), S::DiracTime { t_star: 1.0 }), "bridge");
        assert_eq!(label_of(&bm(0.3), S::ForeverSurvival), "forever-survival-taboo-a");
        assert_eq!(label_of(&bm(-0.3), S::ForeverSurvival), "forever-survival-bm-neg");
        assert_eq!(label_of(&tanh_drift(1.0, 0.4), S::ForeverSurvival), "forever-survival-williams");
        assert_eq!(label_of(&taboo(2.0), S::ForeverSurvival), "forever-survival-taboo-a");
        assert_eq!(label_of(&tanh_drift(1.0, 0.4), S::FptOfBm { mu: 0.6 }), "tanh-on-bm-fpt-pos");
        assert_eq!(
            label_of(&tanh_drift(1.0, 0.4), S::FptOfBm { mu: -0.6 }),
            "tanh-on-bm-fpt-neg-type-ii"
        );
        assert_eq!(
            label_of(&tanh_drift(1.0, 0.4), S::FptOfTanh { gamma: 0.5, delta: 0.3 }),
            "tanh-on-tanh-fpt-general"
        );
        assert_eq!(
            label_of(&tanh_drift(1.0, 0.4), S::FptOfTanh { gamma: 1.0, delta: 0.3 }),
            "tanh-on-tanh-fpt-reduced"
        );
        assert_eq!(label_of(&bm(0.6), S::FptOfTanh { gamma: 1.0, delta: 0.4 }), "bm-on-tanh-fpt-pos");
        assert_eq!(label_of(&bm(-0.7), S::FptOfTanh { gamma: 1.1, delta: 0.4 }), "bm-on-tanh-fpt-neg");
        assert_eq!(
            label_of(&bm(-1.0), S::FptOfTanh { gamma: 1.0, delta: 0.0 }),
            "bm-on-tanh-fpt-neg-rational"
        );
        assert_eq!(label_of(&bm(0.6), S::FptOfTaboo { b_target: 2.0 }), "bm-on-taboo-fpt-pos");
        assert_eq!(label_of(&bm(-0.5), S::FptOfTaboo { b_target: 2.0 }), "bm-on-taboo-fpt-neg");
        assert_eq!(label_of(&taboo(2.0), S::FptOfBm { mu: 0.4 }), "taboo-on-bm-fpt-pos");
        assert_eq!(label_of(&taboo(2.0), S::FptOfBm { mu: -0.5 }), "taboo-on-bm-fpt-neg");

        for (source, scheme) in [
            (tanh_drift(1.0, 0.0), S::FptOfTaboo { b_target: 2.0 }),
            (taboo(2.0), S::FptOfTanh { gamma: 1.0, delta: 0.0 }),
            (taboo(2.0), S::FptOfTaboo { b_target: 3.0 }),
            (bm(0.3), S::FptOfBm { mu: 0.5 }),
        ] {
            let err = ConditionedDrift::new(&source, origin_setup(1.0), scheme).unwrap_err();
            assert!(err.to_string().contains("supported"), "{err}");
        }
    }

    #[test]
    fn bridge_and_forever_survival_drifts() {
        let setup = origin_setup(1.0);
        let p = SpaceTimePoint::new(0.5, 0.5);
        assert!((drift_dirac_time(&setup, 1.0, p).unwrap() - (-1.0)).abs() < 1e-15);
        // Williams drift of the surviving tanh process at the origin
        let w = drift_forever_survival(&tanh_drift(1.0, 0.7), &setup, SpaceTimePoint::new(0.0, 0.0)).unwrap();
        assert!((w - (-1.313_035_285_499_331_3)).abs() < 1e-15);
        // beta plays no role
        let w2 = drift_forever_survival(&tanh_drift(1.0, -2.0), &setup, SpaceTimePoint::new(0.0, 0.0)).unwrap();
        assert_eq!(w, w2);
        let f = drift_forever_survival(&bm(-0.5), &setup, SpaceTimePoint::new(0.0, 0.0)).unwrap();
        assert!((f - (-1.081_976_706_869_326_4)).abs() < 1e-15);
        // taboo and nonnegative-drift BM both give the taboo(a) drift
        for source in [taboo(2.0), bm(0.0), bm(0.8)] {
            let v = drift_forever_survival(&source, &setup, SpaceTimePoint::new(0.5, 3.0)).unwrap();
            assert!((v - (-2.0)).abs() < 1e-15, "{source:?}");
        }
        // bridge needs t < t_star, evaluation needs x outside the pole band
        assert!(drift_dirac_time(&setup, 1.0, SpaceTimePoint::new(0.0, 1.0)).is_err());
        assert!(drift_forever_survival(&taboo(2.0), &setup, SpaceTimePoint::new(1.0 - 1e-13, 0.0)).is_err());
    }

    #[test]
    fn fpt_conditioned_drifts_match_frozen_oracle_values() {
        let setup = origin_setup(1.0);
        let p = SpaceTimePoint::new(0.3, 0.7);

        let v = drift_tanh_on_bm_fpt(1.0, 0.4, &setup, -0.6, p).unwrap();
        assert!((v - (-0.527_240_973_153_250_72)).abs() < 1e-14, "{v}");
        // independent of beta, exactly (beta does not enter the branch)
        let v2 = drift_tanh_on_bm_fpt(1.0, -2.0, &setup, -0.6, p).unwrap();
        assert_eq!(v, v2);
        // mu >= 0 collapses to constant mu
        assert_eq!(drift_tanh_on_bm_fpt(1.0, 0.4, &setup, 0.7, p).unwrap(), 0.7);

        let v = drift_tanh_on_tanh_fpt(1.0, 0.4, &setup, 0.5, 0.3, p).unwrap();
        assert!((v - 0.263_429_231_911_490_83).abs() < 1e-14, "{v}");
        let v = drift_tanh_on_tanh_fpt(2.0, -1.0, &setup, 0.5, 0.3, SpaceTimePoint::new(-0.4, 1.5)).unwrap();
        assert!((v - 0.385_226_654_026_780_54).abs() < 1e-14, "{v}");
        // gamma = alpha reduces to the target tanh drift exactly
        let v = drift_tanh_on_tanh_fpt(1.0, 0.4, &setup, 1.0, 0.3, p).unwrap();
        assert_eq!(v, 1.0 * (1.0 * p.x + 0.3f64).tanh());

        let v = drift_bm_on_tanh_fpt(0.6, &setup, 1.0, 0.4, p).unwrap();
        assert!((v - 0.484_416_028_035_178_2).abs() < 1e-14, "{v}");
        // the mu >= 0 branch does not depend on mu
        let v2 = drift_bm_on_tanh_fpt(2.5, &setup, 1.0, 0.4, p).unwrap();
        assert_eq!(v, v2);

        let setup13 = BarrierSetup::new(1.3, 0.0, 0.0).unwrap();
        let v = drift_bm_on_tanh_fpt(-0.7, &setup13, 1.1, 0.4, SpaceTimePoint::new(0.5, 1.0)).unwrap();
        assert!((v - 1.953_342_384_092_167_4).abs() < 1e-13, "{v}");

        let v = drift_bm_on_taboo_fpt(-0.5, &setup, 2.0, p).unwrap();
        assert!((v - (-0.573_408_297_878_207_29)).abs() < 1e-14, "{v}");
        // mu >= 0 gives the taboo(b) drift
        assert!((drift_bm_on_taboo_fpt(0.3, &setup, 2.0, SpaceTimePoint::new(1.0, 0.0)).unwrap() - (-1.0)).abs() < 1e-15);

        let v = drift_taboo_on_bm_fpt(2.0, &setup, -0.5, p).unwrap();
        assert!((v - (-0.523_106_302_855_997_69)).abs() < 1e-14, "{v}");
        // b-independence of the mu < 0 branch
        let v2 = drift_taboo_on_bm_fpt(10.0, &setup, -0.5, p).unwrap();
        assert_eq!(v, v2);
        assert_eq!(drift_taboo_on_bm_fpt(2.0, &setup, 0.4, p).unwrap(), 0.4);
    }

    #[test]
    fn rational_branch_agrees_with_the_general_three_parameter_form() {
        // alpha = -mu, beta = 0 simplification vs the general branch
        let (a, mu) = (5.0, -1.0);
        for i in 0..60 {
            let x = -5.0 + 9.9 * (i as f64) / 59.0;
            for t in [0.0, 0.4, 2.0] {
                let general = bm_on_tanh_neg_general_drift(a, -mu, 0.0, mu, x, t);
                let rational = bm_on_tanh_neg_rational_drift(a, mu, x);
                assert!(
                    (general - rational).abs() < 1e-10,
                    "x={x} t={t}: {general} vs {rational}"
                );
            }
        }
        let v = bm_on_tanh_neg_rational_drift(5.0, -1.0, 4.0);
        assert!((v - 1.999_807_822_282_783_3).abs() < 1e-13);
        let v = bm_on_tanh_neg_rational_drift(5.0, -1.0, 0.0);
        assert!((v - 0.100_004_539_992_976_25).abs() < 1e-14);
    }

    #[test]
    fn q_functions_match_frozen_oracle_values_and_normalize_at_the_start() {
        let setup = origin_setup(1.0);
        let p = SpaceTimePoint::new(0.3, 0.7);
        let origin = SpaceTimePoint::new(0.0, 0.0);
        use ConditioningScheme as S;

        let cases: Vec<(DriftModel, ConditioningScheme, f64)> = vec![
            (tanh_drift(1.0, 0.4), S::FptOfBm { mu: 0.6 }, 1.290_052_939_662_164_8),
            (tanh_drift(1.0, 0.4), S::FptOfBm { mu: -0.6 }, 0.777_064_812_401_828_99),
            (tanh_drift(1.0, 0.4), S::FptOfTanh { gamma: 0.5, delta: 0.3 }, 1.134_170_653_639_797),
            (bm(0.6), S::FptOfTanh { gamma: 1.0, delta: 0.4 }, 0.837_418_965_000_473_77),
            (bm(-0.5), S::FptOfTaboo { b_target: 2.0 }, 1.032_232_660_044_203_8),
            (taboo(2.0), S::FptOfBm { mu: -0.5 }, 0.981_282_373_949_163_96),
            (tanh_drift(1.0, 0.4), S::DiracTime { t_star: 2.0 }, 1.736_238_771_154_253_7),
        ];
        for (source, scheme, expected) in cases {
            let q = q_forever_and_partial(&source, &setup, &scheme, p).unwrap();
            assert!((q - expected).abs() < 1e-13, "{source:?} {scheme:?}: {q} vs {expected}");
            let q0 = q_forever_and_partial(&source, &setup, &scheme, origin).unwrap();
            assert!((q0 - 1.0).abs() < 1e-12, "{source:?} {scheme:?}: Q(0,0)={q0}");
        }

        let setup13 = BarrierSetup::new(1.3, 0.0, 0.0).unwrap();
        let q = q_forever_and_partial(
            &bm(-0.7),
            &setup13,
            &S::FptOfTanh { gamma: 1.1, delta: 0.4 },
            SpaceTimePoint::new(0.5, 1.0),
        )
        .unwrap();
        assert!((q - 2.208_492_736_608_048_8).abs() < 1e-13, "{q}");

        // forever-survival Qs normalize at the start point for all families
        for source in [bm(0.6), bm(-0.5), tanh_drift(1.0, 0.4), taboo(2.0)] {
            let q0 = q_forever_and_partial(&source, &setup, &S::ForeverSurvival, origin).unwrap();
            assert_eq!(q0, 1.0, "{source:?}");
            let q = q_forever_and_partial(&source, &setup, &S::ForeverSurvival, p).unwrap();
            assert!(q > 0.0);
        }

        // first-passage targets insist on an origin start
        let shifted = BarrierSetup::new(1.0, -0.2, 0.0).unwrap();
        assert!(q_forever_and_partial(&bm(0.6), &shifted, &S::FptOfTaboo { b_target: 2.0 }, p).is_err());
    }

    #[test]
    fn drift_equals_mu_plus_dlog_q_for_every_closed_form_pair() {
        // the defining h-transform relation, checked by central differences
        let setup = origin_setup(1.0);
        use ConditioningScheme as S;
        let pairs: Vec<(DriftModel, ConditioningScheme)> = vec![
            (bm(0.3), S::DiracTime { t_star: 2.0 }),
            (tanh_drift(1.0, 0.4), S::DiracTime { t_star: 2.0 }),
            (taboo(2.0), S::DiracTime { t_star: 2.0 }),
            (bm(0.6), S::ForeverSurvival),
            (bm(-0.5), S::ForeverSurvival),
            (tanh_drift(1.0, 0.4), S::ForeverSurvival),
            (taboo(2.0), S::ForeverSurvival),
            (tanh_drift(1.0, 0.4), S::FptOfBm { mu: 0.6 }),
            (tanh_drift(1.0, 0.4), S::FptOfBm { mu: -0.6 }),
            (tanh_drift(1.0, 0.4), S::FptOfTanh { gamma: 0.5, delta: 0.3 }),
            (tanh_drift(1.0, 0.4), S::FptOfTanh { gamma: 1.0, delta: 0.3 }),
            (bm(0.6), S::FptOfTanh { gamma: 1.0, delta: 0.4 }),
            (bm(-0.7), S::FptOfTanh { gamma: 1.1, delta: 0.4 }),
            (bm(0.6), S::FptOfTaboo { b_target: 2.0 }),
            (bm(-0.5), S::FptOfTaboo { b_target: 2.0 }),
            (taboo(2.0), S::FptOfBm { mu: 0.4 }),
            (taboo(2.0), S::FptOfBm { mu: -0.5 }),
        ];
        for (source, scheme) in pairs {
            let cd = ConditionedDrift::new(&source, setup, scheme.clone()).unwrap();
            for &x in &[-0.8, -0.1, 0.45, 0.9] {
                for &t in &[0.1, 0.9, 1.7] {
                    let h = fd_step(x);
                    let q_hi =
                        q_forever_and_partial(&source, &setup, &scheme, SpaceTimePoint::new(x + h, t))
                            .unwrap();
                    let q_lo =
                        q_forever_and_partial(&source, &setup, &scheme, SpaceTimePoint::new(x - h, t))
                            .unwrap();
                    let fd = (q_hi.ln() - q_lo.ln()) / (2.0 * h);
                    let mu_src = drift_value(&source, SpaceTimePoint::new(x, t)).unwrap();
                    let closed = cd.drift(x, t).unwrap();
                    assert!(
                        (mu_src + fd - closed).abs() < 1e-6,
                        "{} at x={x} t={t}: fd {} vs closed {closed}",
                        cd.label(),
                        mu_src + fd
                    );
                }
            }
        }
    }

    #[test]
    fn finite_horizon_q_reproduces_special_cases() {
        let setup = origin_setup(1.0);
        let source = tanh_drift(1.0, 0.4);
        let horizon = 2.0;

        // conditioning the process on its own law gives Q identically 1
        let own_gamma = {
            let source = source.clone();
            move |ta: f64| crate::analytics::fpt_density(&source, &origin_setup(1.0), ta).unwrap_or(0.0)
        };
        let own_p = {
            let source = source.clone();
            move |y: f64| {
                propagator_absorbed(
                    &source,
                    &origin_setup(1.0),
                    SpaceTimePoint::new(0.0, 0.0),
                    SpaceTimePoint::new(y, horizon),
                )
                .unwrap_or(0.0)
            }
        };
        let scheme = FiniteHorizonScheme::new(
            horizon,
            1.0,
            GammaTarget::Density(Arc::new(own_gamma)),
            Some(Arc::new(own_p)),
        )
        .unwrap();
        for &x in &[-0.6, 0.0, 0.5] {
            for &t in &[0.2, 1.1] {
                let q = q_finite_horizon(&source, &setup, &scheme, SpaceTimePoint::new(x, t)).unwrap();
                assert!((q - 1.0).abs() < 1e-7, "own-law Q at ({x},{t}) = {q}");
            }
        }

        // an embedded Dirac matches the DiracTime Q and the bridge drift
        let dirac = FiniteHorizonScheme::new(horizon, 1.0, GammaTarget::Dirac { t_star: 1.5 }, None).unwrap();
        let p = SpaceTimePoint::new(0.3, 0.7);
        let q1 = q_finite_horizon(&source, &setup, &dirac, p).unwrap();
        let q2 = q_forever_and_partial(&source, &setup, &ConditioningScheme::DiracTime { t_star: 1.5 }, p)
            .unwrap();
        assert!((q1 - q2).abs() < 1e-13);
        let d = drift_finite_horizon(&source, &setup, &dirac, p).unwrap();
        let bridge = drift_dirac_time(&setup, 1.5, p).unwrap();
        assert_eq!(d, bridge);

        // mass inconsistency is rejected at construction
        let half = FiniteHorizonScheme::new(
            horizon,
            1.0,
            GammaTarget::Density(Arc::new(|_t: f64| 0.2)),
            None,
        );
        assert!(matches!(half, Err(Error::InconsistentTarget { .. })), "{half:?}");
    }

    #[test]
    fn finite_horizon_drift_is_source_independent() {
        // uniform absorption-time target on (0, T], no surviving mass
        let horizon = 1.0;
        let scheme = FiniteHorizonScheme::new(
            horizon,
            1.0,
            GammaTarget::Density(Arc::new(move |_t: f64| 1.0 / horizon)),
            None,
        )
        .unwrap();
        let setup = origin_setup(1.0);
        let sources = [bm(0.7), tanh_drift(1.0, 0.4), taboo(2.0)];
        for &x in &[-0.5, 0.2, 0.8] {
            for &t in &[0.1, 0.5] {
                let values: Vec<f64> = sources
                    .iter()
                    .map(|s| drift_finite_horizon(s, &setup, &scheme, SpaceTimePoint::new(x, t)).unwrap())
                    .collect();
                for v in &values[1..] {
                    assert!(
                        (v - values[0]).abs() < 1e-6,
                        "at ({x},{t}): {values:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn conditioned_propagator_and_survival() {
        let setup = origin_setup(1.0);
        let p = SpaceTimePoint::new(0.3, 0.7);
        let v = conditioned_propagator_tanh_on_tanh(1.0, 0.4, &setup, 0.5, 0.3, p).unwrap();
        assert!((v - 0.358_767_114_466_098_68).abs() < 1e-14, "{v}");
        // vanishes at the barrier, rejects off-origin starts
        assert_eq!(
            conditioned_propagator_tanh_on_tanh(1.0, 0.4, &setup, 0.5, 0.3, SpaceTimePoint::new(1.0, 0.7))
                .unwrap(),
            0.0
        );
        let shifted = BarrierSetup::new(1.0, 0.2, 0.0).unwrap();
        assert!(conditioned_propagator_tanh_on_tanh(1.0, 0.4, &shifted, 0.5, 0.3, p).is_err());

        // spatial integral equals the conditioned survival, which is the
        // target tanh(gamma, delta) survival
        let mass = crate::quad::left_tail(
            |y| conditioned_propagator_tanh_on_tanh(1.0, 0.4, &setup, 0.5, 0.3, SpaceTimePoint::new(y, 0.7)).unwrap(),
            1.0,
            1e-10,
            1e-13,
        );
        assert!(mass.converged);
        let s = conditioned_survival_tanh_on_tanh(0.5, 0.3, &setup, 0.7).unwrap();
        assert!((mass.value - s).abs() < 1e-8, "{} vs {s}", mass.value);
        let direct = crate::analytics::survival_to_t(&tanh_drift(0.5, 0.3), &setup, 0.7).unwrap();
        assert_eq!(s, direct);
        // the integral is alpha-independent even though the density is not
        let mass2 = crate::quad::left_tail(
            |y| conditioned_propagator_tanh_on_tanh(2.0, 0.4, &setup, 0.5, 0.3, SpaceTimePoint::new(y, 0.7)).unwrap(),
            1.0,
            1e-10,
            1e-13,
        );
        assert!((mass2.value - s).abs() < 1e-8, "{} vs {s}", mass2.value);
    }

    #[test]
    fn reciprocity_of_mutually_inverse_conditionings() {
        let setup = origin_setup(1.0);
        let forward = QFunction::for_scheme(
            &bm(0.3),
            &setup,
            &ConditioningScheme::FptOfTaboo { b_target: 2.0 },
        )
        .unwrap();
        let backward =
            QFunction::for_scheme(&taboo(2.0), &setup, &ConditioningScheme::FptOfBm { mu: 0.3 }).unwrap();
        let mut grid = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                grid.push(SpaceTimePoint::new(
                    -1.5 + 2.4 * (i as f64) / 19.0,
                    0.05 + 3.0 * (j as f64) / 19.0,
                ));
            }
        }
        let dev = reciprocity_check(&forward, &backward, &grid).unwrap();
        assert!(dev <= 1e-12, "max |Qf*Qb - 1| = {dev:e}");

        // Q = 1 against itself
        let one = QFunction::new("unit", true, |_x, _t| Ok(1.0));
        assert_eq!(reciprocity_check(&one, &one, &grid).unwrap(), 0.0);

        // the tanh cycle beta -> delta -> beta
        let f = QFunction::for_scheme(
            &tanh_drift(1.0, 0.4),
            &setup,
            &ConditioningScheme::FptOfTanh { gamma: 1.0, delta: -0.2 },
        )
        .unwrap();
        let b = QFunction::for_scheme(
            &tanh_drift(1.0, -0.2),
            &setup,
            &ConditioningScheme::FptOfTanh { gamma: 1.0, delta: 0.4 },
        )
        .unwrap();
        let dev = reciprocity_check(&f, &b, &grid).unwrap();
        assert!(dev <= 1e-12, "tanh cycle deviation {dev:e}");
    }

    #[test]
    fn q_positive_on_a_domain_sweep() {
        use ConditioningScheme as S;
        let setup = origin_setup(1.0);
        let pairs: Vec<(DriftModel, ConditioningScheme)> = vec![
            (bm(0.6), S::ForeverSurvival),
            (bm(-0.5), S::ForeverSurvival),
            (tanh_drift(1.0, 0.4), S::ForeverSurvival),
            (taboo(2.0), S::ForeverSurvival),
            (tanh_drift(1.0, 0.4), S::FptOfBm { mu: 0.6 }),
            (tanh_drift(1.0, 0.4), S::FptOfBm { mu: -0.6 }),
            (tanh_drift(1.0, 0.4), S::FptOfTanh { gamma: 0.5, delta: 0.3 }),
            (bm(0.6), S::FptOfTanh { gamma: 1.0, delta: 0.4 }),
            (bm(-0.7), S::FptOfTanh { gamma: 1.1, delta: 0.4 }),
            (bm(0.6), S::FptOfTaboo { b_target: 2.0 }),
            (bm(-0.5), S::FptOfTaboo { b_target: 2.0 }),
            (taboo(2.0), S::FptOfBm { mu: 0.4 }),
            (taboo(2.0), S::FptOfBm { mu: -0.5 }),
            (bm(0.3), S::DiracTime { t_star: 4.0 }),
        ];
        for (source, scheme) in pairs {
            for i in 0..25 {
                let x = -3.0 + 3.95 * (i as f64) / 24.0;
                for j in 0..8 {
                    let t = 0.01 + 3.5 * (j as f64) / 7.0;
                    let q = q_forever_and_partial(&source, &setup, &scheme, SpaceTimePoint::new(x, t))
                        .unwrap();
                    assert!(q > 0.0, "{source:?} {scheme:?} at ({x},{t}): {q}");
                }
            }
        }
    }
}
