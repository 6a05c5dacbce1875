//! Closed-form first-passage analytics for the three unconditioned families:
//! Brownian motion with constant drift, the tanh-drift (Benes) process, and
//! the taboo process, each with an absorbing barrier at `a` approached from
//! below.
//!
//! Conventions used throughout: the process starts at `x0 < a` at time `t0`;
//! `L = a - x` denotes the gap to the barrier from an evaluation point; the
//! taboo state `b` satisfies `x0 < a < b`. All exponential/hyperbolic ratios
//! are assembled in log space (see [`crate::special`]) before a single final
//! `exp`, so parameter regimes like `alpha * x ~ 400` stay finite.

use crate::conditioning::{ConditionedDrift, ConditioningScheme};
use crate::error::{Error, Result};
use crate::special::{self, exp_erfc, log_cosh, log_sub_exp, SQRT_2PI};

/// Probability excess beyond [0, 1] that is attributed to rounding; larger
/// excursions are reported on the warning channel before clamping.
const CLAMP_WARN_EXCESS: f64 = 1e-12;

/// Width of the guard band around removable poles (x -> b for taboo drifts);
/// evaluation inside it is a domain error rather than a smoothed value.
pub(crate) const POLE_GUARD: f64 = 1e-12;

/// A process family with its parameters.
///
/// `Conditioned` wraps a base family together with the barrier setup and the
/// conditioning scheme that define a Doob-transformed process; only
/// [`drift_value`] is closed-form for it (everything else about a conditioned
/// process lives in [`crate::conditioning`]).
#[derive(Debug, Clone)]
pub enum DriftModel {
    /// Brownian motion with constant drift `mu`.
    Bm { mu: f64 },
    /// dX = alpha * tanh(alpha X + beta) dt + dW, the Benes process.
    TanhDrift { alpha: f64, beta: f64 },
    /// Drift -1/(b - x): Brownian motion conditioned never to reach `b`.
    Taboo { b: f64 },
    /// A Doob-conditioned process built from `source` under `scheme`.
    Conditioned {
        source: Box<DriftModel>,
        setup: BarrierSetup,
        scheme: ConditioningScheme,
    },
}

impl DriftModel {
    /// Parameter sanity: finite values, `alpha > 0`.
    pub fn validate(&self) -> Result<()> {
        match self {
            DriftModel::Bm { mu } => {
                if !mu.is_finite() {
                    return Err(Error::InvalidParameter(format!("BM drift mu={mu} not finite")));
                }
            }
            DriftModel::TanhDrift { alpha, beta } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "tanh-drift requires alpha > 0, got alpha={alpha}"
                    )));
                }
                if !beta.is_finite() {
                    return Err(Error::InvalidParameter(format!("tanh-drift beta={beta} not finite")));
                }
            }
            DriftModel::Taboo { b } => {
                if !b.is_finite() {
                    return Err(Error::InvalidParameter(format!("taboo state b={b} not finite")));
                }
            }
            DriftModel::Conditioned { source, setup, scheme: _ } => {
                source.validate()?;
                setup.validate()?;
            }
        }
        Ok(())
    }

    /// Model-specific checks against a barrier setup (`x0 < a < b` for taboo).
    pub fn validate_with(&self, setup: &BarrierSetup) -> Result<()> {
        self.validate()?;
        setup.validate()?;
        if let DriftModel::Taboo { b } = self {
            if !(setup.a < *b) {
                return Err(Error::InvalidParameter(format!(
                    "taboo state must satisfy a < b, got a={} b={}",
                    setup.a, b
                )));
            }
        }
        Ok(())
    }
}

/// Absorbing barrier `a` plus the start point (`x0`, `t0`) of the process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSetup {
    pub a: f64,
    pub x0: f64,
    pub t0: f64,
}

impl BarrierSetup {
    pub fn new(a: f64, x0: f64, t0: f64) -> Result<Self> {
        let setup = BarrierSetup { a, x0, t0 };
        setup.validate()?;
        Ok(setup)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x0 < self.a) {
            return Err(Error::InvalidParameter(format!(
                "start point must lie below the barrier, got x0={} a={}",
                self.x0, self.a
            )));
        }
        if !(self.t0.is_finite() && self.t0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "start time must be finite and nonnegative, got t0={}",
                self.t0
            )));
        }
        Ok(())
    }
}

/// A generic space-time evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimePoint {
    pub x: f64,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: f64, t: f64) -> Self {
        SpaceTimePoint { x, t }
    }
}

fn unsupported_conditioned(op: &str) -> Error {
    Error::Unsupported(format!(
        "{op} is only defined for the base families (BM, tanh-drift, taboo); \
         conditioned processes are handled by the conditioning module"
    ))
}

/// Clamp a probability to [0, 1], warning if the excursion is beyond rounding.
pub(crate) fn clamp_probability(raw: f64, what: &str) -> f64 {
    if !(-CLAMP_WARN_EXCESS..=1.0 + CLAMP_WARN_EXCESS).contains(&raw) {
        log::warn!("{what} = {raw:e} exceeds [0,1] beyond rounding tolerance; clamping");
    }
    raw.clamp(0.0, 1.0)
}

/// Instantaneous drift mu(x, t) of the model.
///
/// Time-independent for the three base families; for a conditioned model this
/// evaluates the closed-form conditioned drift.
pub fn drift_value(model: &DriftModel, p: SpaceTimePoint) -> Result<f64> {
    model.validate()?;
    match model {
        DriftModel::Bm { mu } => Ok(*mu),
        DriftModel::TanhDrift { alpha, beta } => Ok(alpha * (alpha * p.x + beta).tanh()),
        DriftModel::Taboo { b } => {
            if p.x >= b - POLE_GUARD {
                return Err(Error::Domain(format!(
                    "taboo drift has a pole at x=b; got x={} with b={}",
                    p.x, b
                )));
            }
            Ok(-1.0 / (b - p.x))
        }
        DriftModel::Conditioned { source, setup, scheme } => {
            ConditionedDrift::new(source, *setup, scheme.clone())?.drift(p.x, p.t)
        }
    }
}

/// Girsanov weight Z relating the model's law to driftless Brownian motion
/// over [t_start, t_end], expressed through the path endpoints only.
///
/// BM: exp(mu dW - mu^2 dt / 2); tanh-drift: cosh-ratio times
/// exp(-alpha^2 dt / 2); taboo: (b - w_end)/(b - w_start).
pub fn girsanov_weight(
    model: &DriftModel,
    w_start: f64,
    w_end: f64,
    t_start: f64,
    t_end: f64,
) -> Result<f64> {
    model.validate()?;
    if !(t_end > t_start) {
        return Err(Error::Domain(format!(
            "need t_end > t_start, got t_start={t_start} t_end={t_end}"
        )));
    }
    let dt = t_end - t_start;
    match model {
        DriftModel::Bm { mu } => Ok((mu * (w_end - w_start) - 0.5 * mu * mu * dt).exp()),
        DriftModel::TanhDrift { alpha, beta } => Ok((log_cosh(alpha * w_end + beta)
            - log_cosh(alpha * w_start + beta)
            - 0.5 * alpha * alpha * dt)
            .exp()),
        DriftModel::Taboo { b } => {
            if w_end >= *b || w_start >= *b {
                return Err(Error::Domain(format!(
                    "taboo weight requires endpoints below b={b}, got w_start={w_start} w_end={w_end}"
                )));
            }
            Ok((b - w_end) / (b - w_start))
        }
        DriftModel::Conditioned { .. } => Err(unsupported_conditioned("girsanov_weight")),
    }
}

/// Barrier-free transition density p(to.x, to.t | from.x, from.t).
///
/// Defined for BM and tanh-drift; the taboo process is only defined relative
/// to its taboo state and has no barrier-free law here.
pub fn propagator_free(model: &DriftModel, from: SpaceTimePoint, to: SpaceTimePoint) -> Result<f64> {
    model.validate()?;
    if !(to.t > from.t) {
        return Err(Error::Domain(format!(
            "need to.t > from.t, got from.t={} to.t={}",
            from.t, to.t
        )));
    }
    let s = to.t - from.t;
    let d = to.x - from.x;
    match model {
        DriftModel::Bm { mu } => {
            let e = -(d - mu * s) * (d - mu * s) / (2.0 * s);
            Ok(e.exp() / (SQRT_2PI * s.sqrt()))
        }
        DriftModel::TanhDrift { alpha, beta } => {
            let e = log_cosh(alpha * to.x + beta) - log_cosh(alpha * from.x + beta)
                - 0.5 * alpha * alpha * s
                - d * d / (2.0 * s);
            Ok(e.exp() / (SQRT_2PI * s.sqrt()))
        }
        DriftModel::Taboo { .. } => Err(Error::Unsupported(
            "the taboo process has no barrier-free propagator; use propagator_absorbed".into(),
        )),
        DriftModel::Conditioned { .. } => Err(unsupported_conditioned("propagator_free")),
    }
}

/// Transition density with absorption at `setup.a`, i.e. over paths that stay
/// below `a` throughout (from.x < a, to.x <= a; zero exactly at the barrier).
pub fn propagator_absorbed(
    model: &DriftModel,
    setup: &BarrierSetup,
    from: SpaceTimePoint,
    to: SpaceTimePoint,
) -> Result<f64> {
    model.validate_with(setup)?;
    if !(to.t > from.t) {
        return Err(Error::Domain(format!(
            "need to.t > from.t, got from.t={} to.t={}",
            from.t, to.t
        )));
    }
    if from.x >= setup.a {
        return Err(Error::Domain(format!(
            "absorbed propagator requires from.x < a, got from.x={} a={}",
            from.x, setup.a
        )));
    }
    if to.x > setup.a {
        return Err(Error::Domain(format!(
            "absorbed propagator is supported on x <= a, got to.x={} a={}",
            to.x, setup.a
        )));
    }
    let a = setup.a;
    let s = to.t - from.t;
    let (x1, x2) = (from.x, to.x);
    // direct and image exponents of the driftless two-image kernel
    let e_direct = -(x2 - x1) * (x2 - x1) / (2.0 * s);
    let e_image = -(x2 + x1 - 2.0 * a) * (x2 + x1 - 2.0 * a) / (2.0 * s);
    match model {
        DriftModel::Bm { mu } => {
            let e1 = -(x2 - x1 - mu * s) * (x2 - x1 - mu * s) / (2.0 * s);
            let e2 = 2.0 * mu * (a - x1) - (x2 + x1 - 2.0 * a - mu * s) * (x2 + x1 - 2.0 * a - mu * s) / (2.0 * s);
            if e2 >= e1 {
                // only possible at the barrier itself (up to rounding)
                return Ok(0.0);
            }
            Ok(log_sub_exp(e1, e2).exp() / (SQRT_2PI * s.sqrt()))
        }
        DriftModel::TanhDrift { alpha, beta } => {
            if e_image >= e_direct {
                return Ok(0.0);
            }
            let e = log_cosh(alpha * x2 + beta) - log_cosh(alpha * x1 + beta)
                - 0.5 * alpha * alpha * s
                + log_sub_exp(e_direct, e_image);
            Ok(e.exp() / (SQRT_2PI * s.sqrt()))
        }
        DriftModel::Taboo { b } => {
            if e_image >= e_direct {
                return Ok(0.0);
            }
            Ok((b - x2) / (b - x1) * log_sub_exp(e_direct, e_image).exp() / (SQRT_2PI * s.sqrt()))
        }
        DriftModel::Conditioned { .. } => Err(unsupported_conditioned("propagator_absorbed")),
    }
}

/// Log of the first-passage-time density to `a` at `t2`, for a path started
/// at (`x1`, `t1`). Returns -inf at `t2 == t1` (the limit value).
pub(crate) fn log_fpt_density_from(
    model: &DriftModel,
    a: f64,
    x1: f64,
    t1: f64,
    t2: f64,
) -> Result<f64> {
    if t2 < t1 {
        return Err(Error::Domain(format!(
            "first-passage density needs t2 >= t1, got t1={t1} t2={t2}"
        )));
    }
    if x1 >= a {
        return Err(Error::Domain(format!(
            "first-passage density requires x1 < a, got x1={x1} a={a}"
        )));
    }
    let s = t2 - t1;
    if s == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let big_l = a - x1;
    let base = big_l.ln() - 1.5 * s.ln() - SQRT_2PI.ln();
    match model {
        DriftModel::Bm { mu } => Ok(base - (big_l - mu * s) * (big_l - mu * s) / (2.0 * s)),
        DriftModel::TanhDrift { alpha, beta } => Ok(base + log_cosh(alpha * a + beta)
            - log_cosh(alpha * x1 + beta)
            - (big_l * big_l + alpha * alpha * s * s) / (2.0 * s)),
        DriftModel::Taboo { b } => {
            if !(a < *b) {
                return Err(Error::InvalidParameter(format!(
                    "taboo state must satisfy a < b, got a={a} b={b}"
                )));
            }
            Ok(base + ((b - a) / (b - x1)).ln() - big_l * big_l / (2.0 * s))
        }
        DriftModel::Conditioned { .. } => Err(unsupported_conditioned("fpt_density")),
    }
}

pub(crate) fn fpt_density_from(model: &DriftModel, a: f64, x1: f64, t1: f64, t2: f64) -> Result<f64> {
    Ok(log_fpt_density_from(model, a, x1, t1, t2)?.exp())
}

/// First-passage-time density gamma(t_hit | x0, t0) to the barrier `setup.a`.
///
/// The value at exactly `t_hit == t0` is defined as 0, its limit.
pub fn fpt_density(model: &DriftModel, setup: &BarrierSetup, t_hit: f64) -> Result<f64> {
    model.validate_with(setup)?;
    fpt_density_from(model, setup.a, setup.x0, setup.t0, t_hit)
}

pub(crate) fn absorption_probability_from(model: &DriftModel, a: f64, x1: f64) -> Result<f64> {
    if x1 >= a {
        return Err(Error::Domain(format!(
            "absorption probability requires x1 < a, got x1={x1} a={a}"
        )));
    }
    let big_l = a - x1;
    let raw = match model {
        DriftModel::Bm { mu } => {
            if *mu >= 0.0 {
                1.0
            } else {
                (2.0 * mu * big_l).exp()
            }
        }
        DriftModel::TanhDrift { alpha, beta } => (log_cosh(alpha * a + beta)
            - log_cosh(alpha * x1 + beta)
            - big_l * alpha)
            .exp(),
        DriftModel::Taboo { b } => (b - a) / (b - x1),
        DriftModel::Conditioned { .. } => return Err(unsupported_conditioned("absorption_probability")),
    };
    Ok(clamp_probability(raw, "absorption probability"))
}

/// Probability that the process started at (x0, t0) is ever absorbed at `a`.
pub fn absorption_probability(model: &DriftModel, setup: &BarrierSetup) -> Result<f64> {
    model.validate_with(setup)?;
    absorption_probability_from(model, setup.a, setup.x0)
}

pub(crate) fn survival_to_t_from(model: &DriftModel, a: f64, x1: f64, t1: f64, big_t: f64) -> Result<f64> {
    if !(big_t > t1) {
        return Err(Error::Domain(format!(
            "survival probability needs T > t1, got t1={t1} T={big_t}"
        )));
    }
    if x1 >= a {
        return Err(Error::Domain(format!(
            "survival probability requires x1 < a, got x1={x1} a={a}"
        )));
    }
    let tau = big_t - t1;
    let big_l = a - x1;
    let sq = (2.0 * tau).sqrt();
    let raw = match model {
        DriftModel::Bm { mu } => {
            1.0 - 0.5
                * (special::erfc((big_l - mu * tau) / sq)
                    + exp_erfc(2.0 * mu * big_l, (big_l + mu * tau) / sq))
        }
        DriftModel::TanhDrift { alpha, beta } => {
            let log_r = log_cosh(alpha * a + beta) - log_cosh(alpha * x1 + beta);
            1.0 - 0.5
                * (exp_erfc(log_r + big_l * alpha, (big_l + alpha * tau) / sq)
                    + exp_erfc(log_r - big_l * alpha, (big_l - alpha * tau) / sq))
        }
        DriftModel::Taboo { b } => (big_l + (b - a) * special::erf(big_l / sq)) / (b - x1),
        DriftModel::Conditioned { .. } => return Err(unsupported_conditioned("survival_to_T")),
    };
    Ok(clamp_probability(raw, "survival probability"))
}

/// Probability of surviving (no absorption at `a`) up to time `T`.
pub fn survival_to_t(model: &DriftModel, setup: &BarrierSetup, big_t: f64) -> Result<f64> {
    model.validate_with(setup)?;
    survival_to_t_from(model, setup.a, setup.x0, setup.t0, big_t)
}

/// Probability of never being absorbed; exactly 1 - absorption_probability.
pub fn survival_forever(model: &DriftModel, setup: &BarrierSetup) -> Result<f64> {
    Ok(1.0 - absorption_probability(model, setup)?)
}

pub(crate) fn survival_forever_from(model: &DriftModel, a: f64, x1: f64) -> Result<f64> {
    Ok(1.0 - absorption_probability_from(model, a, x1)?)
}

#[cfg(test)]
// Reference values are frozen at 17 significant digits (lossless f64
// round-trip) even where fewer digits would parse to the same value.
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn bm(mu: f64) -> DriftModel {
        DriftModel::Bm { mu }
    }
    fn tanh_drift(alpha: f64, beta: f64) -> DriftModel {
        DriftModel::TanhDrift { alpha, beta }
    }
    fn taboo(b: f64) -> DriftModel {
        DriftModel::Taboo { b }
    }
    fn setup(a: f64) -> BarrierSetup {
        BarrierSetup::new(a, 0.0, 0.0).unwrap()
    }

    #[test]
    fn drift_values_match_reference_points() {
        let p0 = SpaceTimePoint::new(0.0, 0.0);
        assert_eq!(drift_value(&tanh_drift(1.0, 0.0), p0).unwrap(), 0.0);
        assert_eq!(
            drift_value(&taboo(2.0), SpaceTimePoint::new(1.0, 0.0)).unwrap(),
            -1.0
        );
        let v = drift_value(&tanh_drift(1.0, 0.0), SpaceTimePoint::new(5.0, 0.0)).unwrap();
        assert!((v - 0.999_909_204_262_595_13).abs() < 1e-15);
        assert!(drift_value(&taboo(2.0), SpaceTimePoint::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn girsanov_weights_match_reference_points() {
        assert_eq!(girsanov_weight(&bm(0.0), 0.3, -1.2, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(girsanov_weight(&taboo(2.0), 0.0, 1.0, 0.0, 1.0).unwrap(), 0.5);
        let z = girsanov_weight(&tanh_drift(1.0, 0.0), 0.0, 1.0, 0.0, 1.0).unwrap();
        assert!((z - 0.935_925_715_424_278_99).abs() < 1e-15);
        assert!(girsanov_weight(&taboo(2.0), 0.0, 2.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn free_propagator_matches_reference_points() {
        let from = SpaceTimePoint::new(0.0, 0.0);
        let peak = propagator_free(&bm(0.0), from, SpaceTimePoint::new(0.0, 1.0)).unwrap();
        assert!((peak - 0.398_942_280_401_432_68).abs() < 1e-15);

        let v = propagator_free(&tanh_drift(1.0, 0.0), from, SpaceTimePoint::new(1.0, 1.0)).unwrap();
        assert!((v - 0.226_466_623_457_310_36).abs() < 1e-15);

        // alpha -> 0 reduces to driftless BM
        let near = propagator_free(&tanh_drift(1e-8, 0.3), from, SpaceTimePoint::new(0.7, 2.0)).unwrap();
        let limit = propagator_free(&bm(0.0), from, SpaceTimePoint::new(0.7, 2.0)).unwrap();
        assert!((near - limit).abs() < 1e-8);

        assert!(propagator_free(&taboo(2.0), from, SpaceTimePoint::new(0.5, 1.0)).is_err());
    }

    #[test]
    fn absorbed_propagator_matches_reference_points() {
        let s = setup(1.0);
        let from = SpaceTimePoint::new(0.0, 0.0);
        // vanishes at the barrier for every family
        for model in [bm(0.4), tanh_drift(1.0, 0.2), taboo(2.0)] {
            let at_barrier = propagator_absorbed(&model, &s, from, SpaceTimePoint::new(1.0, 1.0)).unwrap();
            assert_eq!(at_barrier, 0.0, "{model:?}");
        }
        let v = propagator_absorbed(&bm(0.0), &s, from, SpaceTimePoint::new(0.0, 1.0)).unwrap();
        assert!((v - 0.344_951_313_888_244_63).abs() < 1e-15);
        // taboo kernel at x2=0 has prefactor (b-0)/(b-0) = 1: equals the BM(0) kernel
        let w = propagator_absorbed(&taboo(2.0), &s, from, SpaceTimePoint::new(0.0, 1.0)).unwrap();
        assert!((w - v).abs() < 1e-16);
        assert!(propagator_absorbed(&bm(0.0), &s, SpaceTimePoint::new(1.2, 0.0), from).is_err());
    }

    #[test]
    fn fpt_density_matches_reference_points() {
        let s = setup(1.0);
        let g = fpt_density(&bm(0.0), &s, 1.0).unwrap();
        assert!((g - 0.241_970_724_519_143_35).abs() < 1e-15);
        let g = fpt_density(&tanh_drift(1.0, 0.0), &s, 1.0).unwrap();
        assert!((g - 0.226_466_623_457_310_36).abs() < 1e-15);
        let g = fpt_density(&taboo(2.0), &s, 1.0).unwrap();
        assert!((g - 0.120_985_362_259_571_67).abs() < 1e-15);
        // removable singularity: the density is defined as 0 at t_hit = t0
        assert_eq!(fpt_density(&bm(0.3), &s, 0.0).unwrap(), 0.0);
        assert!(fpt_density(&bm(0.3), &s, -0.5).is_err());
        // taboo(b -> huge) reduces to BM(0)
        let g_taboo = fpt_density(&taboo(1e9), &s, 0.7).unwrap();
        let g_bm = fpt_density(&bm(0.0), &s, 0.7).unwrap();
        assert!((g_taboo - g_bm).abs() < 1e-8);
    }

    #[test]
    fn absorption_probability_matches_reference_points() {
        assert_eq!(absorption_probability(&bm(1.0), &setup(1.0)).unwrap(), 1.0);
        assert_eq!(absorption_probability(&taboo(2.0), &setup(1.0)).unwrap(), 0.5);
        let p = absorption_probability(&tanh_drift(1.0, 0.0), &setup(5.0)).unwrap();
        assert!((p - 0.500_022_699_964_881_24).abs() < 1e-15);
        let p = absorption_probability(&bm(-1.0), &setup(1.0)).unwrap();
        assert!((p - (-2.0f64).exp()).abs() < 1e-16);
        let sf = survival_forever(&bm(-1.0), &setup(1.0)).unwrap();
        assert!((sf - 0.864_664_716_763_387_31).abs() < 1e-15);
        assert_eq!(survival_forever(&bm(0.2), &setup(1.0)).unwrap(), 0.0);
    }

    #[test]
    fn survival_matches_reference_points() {
        let s = setup(1.0);
        let v = survival_to_t(&tanh_drift(1.0, 0.4), &s, 2.0).unwrap();
        assert!((v - 0.351_892_313_374_526_05).abs() < 1e-14);
        let v = survival_to_t(&bm(-0.5), &s, 3.0).unwrap();
        assert!((v - 0.699_817_355_153_817_03).abs() < 1e-14);
        let v = survival_to_t(&taboo(2.0), &s, 1.5).unwrap();
        assert!((v - 0.792_891_910_878_737_44).abs() < 1e-14);
        // T -> t0+ gives 1; large T approaches survival_forever
        for model in [bm(-0.5), tanh_drift(1.0, 0.4), taboo(2.0)] {
            assert!((survival_to_t(&model, &s, 1e-12).unwrap() - 1.0).abs() < 1e-9);
            let late = survival_to_t(&model, &s, 5e4).unwrap();
            let forever = survival_forever(&model, &s).unwrap();
            assert!((late - forever).abs() < 1e-2, "{model:?}: {late} vs {forever}");
        }
    }

    #[test]
    fn extreme_parameters_stay_finite() {
        let s = setup(2.0);
        // alpha*x products near 800 overflow naive cosh ratios
        let model = tanh_drift(400.0, 0.0);
        let p = absorption_probability(&model, &s).unwrap();
        assert!(p.is_finite() && (0.0..=1.0).contains(&p));
        let v = survival_to_t(&model, &s, 3.0).unwrap();
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
        let v = survival_to_t(&bm(40.0), &s, 3.0).unwrap();
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
        let g = fpt_density(&model, &s, 1.0).unwrap();
        assert!(g.is_finite() && g >= 0.0);
    }

    #[test]
    fn parameter_validation_rejects_bad_models() {
        assert!(DriftModel::TanhDrift { alpha: -1.0, beta: 0.0 }.validate().is_err());
        assert!(DriftModel::TanhDrift { alpha: 0.0, beta: 0.0 }.validate().is_err());
        assert!(BarrierSetup::new(1.0, 1.0, 0.0).is_err());
        assert!(BarrierSetup::new(1.0, 0.0, -1.0).is_err());
        // taboo state below the barrier is rejected when paired with a setup
        assert!(taboo(0.5).validate_with(&setup(1.0)).is_err());
    }
}
