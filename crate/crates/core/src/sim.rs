//! Euler-Maruyama path ensembles with absorbing-barrier bookkeeping, plus
//! Girsanov-reweighted expectations for the base families.
//!
//! Discretization conventions:
//!
//! * absorption is declared when a step ends at or above the barrier, with
//!   the absorption time recorded at the step midpoint `t + dt/2`;
//! * with `bridge_correction` on, steps that stay below the barrier are
//!   additionally absorbed with the Brownian-bridge crossing probability
//!   `exp(-2 (a - x)(a - x') / dt)` (skipped when the exponent is below -40,
//!   where the probability is under 4e-18);
//! * forever-survival conditionings repel from the barrier with a `-1/(a-x)`
//!   pole, and their discretized paths are clamped a distance
//!   `max(boundary_guard, sqrt(dt)/2)` below it so the next drift evaluation
//!   stays on the diffusive scale of the step;
//! * Dirac-time conditionings treat the barrier as a clamped repelling
//!   boundary while they run (the exact conditioned process cannot touch it
//!   before the deadline), integrate to `t_star`, and declare every path
//!   absorbed at exactly `t_star`; crossing early would be a pure
//!   discretization artifact of the prescribed-time law.
//!
//! Each path gets its own ChaCha8 stream (`seed` selects the key, the path
//! index the stream), so ensembles are reproducible regardless of how rayon
//! schedules them, and enlarging an ensemble leaves existing paths unchanged.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analytics::{girsanov_weight, BarrierSetup, DriftModel};
use crate::conditioning::ConditionedDrift;
use crate::error::{Error, Result};

/// Bridge-crossing exponents below this are treated as never-crossing.
const BRIDGE_EXPONENT_CUTOFF: f64 = -40.0;
/// Fraction of paths allowed to hit a non-finite drift before the ensemble
/// is abandoned with [`Error::TooManyDiagnostics`].
const DIAGNOSTIC_PATH_FRACTION: f64 = 1e-3;

/// Step size, horizon, ensemble size and RNG seed of a simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Apply the Brownian-bridge crossing test inside each step.
    pub bridge_correction: bool,
    /// Hard floor of the clamp distance below repelling boundaries.
    pub boundary_guard: f64,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("need dt > 0, got {dt}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("need horizon > 0, got {horizon}")));
        }
        if n_paths == 0 {
            return Err(Error::InvalidParameter("need at least one path".into()));
        }
        Ok(SimConfig {
            dt,
            horizon,
            n_paths,
            seed,
            bridge_correction: true,
            boundary_guard: 1e-9,
        })
    }

    pub fn with_bridge_correction(mut self, on: bool) -> Self {
        self.bridge_correction = on;
        self
    }
}

/// Terminal state of one simulated path, with the number of Euler steps taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathOutcome {
    Absorbed { tau: f64, n_steps: u64 },
    Survived { x_end: f64, n_steps: u64 },
}

/// Outcome of a full ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub outcomes: Vec<PathOutcome>,
    /// The configuration the ensemble was produced with.
    pub config: SimConfig,
    /// Family (and, for conditioned models, dispatch branch) that was stepped.
    pub model_label: String,
    pub n_absorbed: usize,
    pub absorbed_fraction: f64,
    /// Mean absorption time among absorbed paths.
    pub mean_tau: Option<f64>,
    /// Sample standard deviation of the absorption time (n_absorbed >= 2).
    pub std_tau: Option<f64>,
    /// Paths that hit at least one non-finite drift evaluation.
    pub drift_diagnostics: u64,
}

impl EnsembleResult {
    pub fn absorption_times(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter_map(|o| match o {
                PathOutcome::Absorbed { tau, .. } => Some(*tau),
                PathOutcome::Survived { .. } => None,
            })
            .collect()
    }

    pub fn surviving_endpoints(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter_map(|o| match o {
                PathOutcome::Survived { x_end, .. } => Some(*x_end),
                PathOutcome::Absorbed { .. } => None,
            })
            .collect()
    }
}

/// Per-step drift evaluation, resolved once per ensemble. The conditioned
/// variant is large but stays inline: eval() runs once per Euler step and a
/// boxed variant would put the scheme state behind a pointer chase.
#[allow(clippy::large_enum_variant)]
enum StepDrift {
    Const(f64),
    Tanh { alpha: f64, beta: f64 },
    Taboo { b: f64 },
    Conditioned(ConditionedDrift),
}

impl StepDrift {
    #[inline]
    fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            StepDrift::Const(mu) => *mu,
            StepDrift::Tanh { alpha, beta } => alpha * (alpha * x + beta).tanh(),
            StepDrift::Taboo { b } => -1.0 / (b - x),
            StepDrift::Conditioned(cd) => cd.drift_unchecked(x, t),
        }
    }
}

struct ResolvedModel {
    drift: StepDrift,
    label: String,
    /// Paths ending a step at or above the barrier are absorbed.
    absorbing: bool,
    /// Clamp states to `boundary - clamp_distance` when they exceed it.
    repelling_boundary: Option<f64>,
    /// Absolute time at which alive paths are declared absorbed.
    deadline: Option<f64>,
}

fn family_label(model: &DriftModel) -> String {
    match model {
        DriftModel::Bm { mu } => format!("bm(mu={mu})"),
        DriftModel::TanhDrift { alpha, beta } => format!("tanh(alpha={alpha},beta={beta})"),
        DriftModel::Taboo { b } => format!("taboo(b={b})"),
        DriftModel::Conditioned { source, .. } => format!("conditioned {}", family_label(source)),
    }
}

fn resolve(model: &DriftModel, setup: &BarrierSetup, config: &SimConfig) -> Result<ResolvedModel> {
    model.validate_with(setup)?;
    match model {
        DriftModel::Bm { mu } => Ok(ResolvedModel {
            drift: StepDrift::Const(*mu),
            label: family_label(model),
            absorbing: true,
            repelling_boundary: None,
            deadline: None,
        }),
        DriftModel::TanhDrift { alpha, beta } => Ok(ResolvedModel {
            drift: StepDrift::Tanh { alpha: *alpha, beta: *beta },
            label: family_label(model),
            absorbing: true,
            repelling_boundary: None,
            deadline: None,
        }),
        DriftModel::Taboo { b } => Ok(ResolvedModel {
            drift: StepDrift::Taboo { b: *b },
            label: family_label(model),
            absorbing: true,
            repelling_boundary: None,
            deadline: None,
        }),
        DriftModel::Conditioned { source, setup: cond_setup, scheme } => {
            if cond_setup.a != setup.a {
                return Err(Error::InvalidParameter(format!(
                    "conditioned model was built for barrier a={}, simulated with a={}",
                    cond_setup.a, setup.a
                )));
            }
            let cd = ConditionedDrift::new(source, *cond_setup, scheme.clone())?;
            if cd.label() == "finite-horizon-numeric" {
                return Err(Error::Unsupported(
                    "simulating a numeric finite-horizon conditioning would re-run \
                     quadrature at every step; use the Dirac/forever/FPT closed forms"
                        .into(),
                ));
            }
            if let Some(t_star) = cd.absorb_deadline() {
                if !(t_star > setup.t0 && t_star < config.horizon) {
                    return Err(Error::InvalidParameter(format!(
                        "Dirac absorption time must satisfy t0 < t_star < horizon, \
                         got t_star={t_star} t0={} horizon={}",
                        setup.t0, config.horizon
                    )));
                }
            }
            Ok(ResolvedModel {
                label: format!("{}|{}", family_label(source), cd.label()),
                absorbing: cd.absorbs_at_barrier(),
                repelling_boundary: cd.singular_boundary(),
                deadline: cd.absorb_deadline(),
                drift: StepDrift::Conditioned(cd),
            })
        }
    }
}

/// Euler-Maruyama ensemble of `config.n_paths` paths of `model` from
/// (`setup.x0`, `setup.t0`), absorbed at `setup.a` where the model absorbs.
pub fn simulate_ensemble(
    model: &DriftModel,
    setup: &BarrierSetup,
    config: &SimConfig,
) -> Result<EnsembleResult> {
    let resolved = resolve(model, setup, config)?;
    let a = setup.a;
    let t0 = setup.t0;
    let x0 = setup.x0;
    let end = resolved.deadline.unwrap_or(config.horizon);
    let clamp_at = resolved
        .repelling_boundary
        .map(|b| b - config.boundary_guard.max(0.5 * config.dt.sqrt()));
    let sub_step_eps = 1e-9 * config.dt;

    let run_path = |idx: usize| -> (PathOutcome, u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(idx as u64);
        let mut x = x0;
        let mut diagnostics = 0u64;
        let mut k: u64 = 0;
        loop {
            let t = t0 + (k as f64) * config.dt;
            let remaining = end - t;
            if remaining <= sub_step_eps {
                break;
            }
            let dt = config.dt.min(remaining);
            let mut mu = resolved.drift.eval(x, t);
            if !mu.is_finite() {
                diagnostics += 1;
                mu = 0.0;
            }
            let z: f64 = rng.sample(StandardNormal);
            let mut x_new = x + mu * dt + dt.sqrt() * z;
            if resolved.absorbing {
                if x_new >= a {
                    return (PathOutcome::Absorbed { tau: t + 0.5 * dt, n_steps: k + 1 }, diagnostics);
                }
                if config.bridge_correction {
                    let exponent = -2.0 * (a - x) * (a - x_new) / dt;
                    if exponent >= BRIDGE_EXPONENT_CUTOFF && rng.gen::<f64>() < exponent.exp() {
                        return (
                            PathOutcome::Absorbed { tau: t + 0.5 * dt, n_steps: k + 1 },
                            diagnostics,
                        );
                    }
                }
            }
            if let Some(c) = clamp_at {
                if x_new > c {
                    x_new = c;
                }
            }
            x = x_new;
            k += 1;
        }
        let outcome = match resolved.deadline {
            Some(t_star) => PathOutcome::Absorbed { tau: t_star, n_steps: k },
            None => PathOutcome::Survived { x_end: x, n_steps: k },
        };
        (outcome, diagnostics)
    };

    let per_path: Vec<(PathOutcome, u64)> =
        (0..config.n_paths).into_par_iter().map(run_path).collect();

    let paths_with_diagnostics = per_path.iter().filter(|(_, d)| *d > 0).count() as u64;
    let limit = ((config.n_paths as f64) * DIAGNOSTIC_PATH_FRACTION).ceil() as u64;
    if paths_with_diagnostics > limit {
        return Err(Error::TooManyDiagnostics {
            diagnostics: paths_with_diagnostics,
            n_paths: config.n_paths as u64,
            limit,
        });
    }

    let outcomes: Vec<PathOutcome> = per_path.into_iter().map(|(o, _)| o).collect();
    let taus: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o {
            PathOutcome::Absorbed { tau, .. } => Some(*tau),
            _ => None,
        })
        .collect();
    let n_absorbed = taus.len();
    let mean_tau = if n_absorbed > 0 {
        Some(taus.iter().sum::<f64>() / n_absorbed as f64)
    } else {
        None
    };
    let std_tau = match (n_absorbed, mean_tau) {
        (n, Some(m)) if n >= 2 => {
            let ss: f64 = taus.iter().map(|t| (t - m) * (t - m)).sum();
            Some((ss / (n as f64 - 1.0)).sqrt())
        }
        _ => None,
    };
    Ok(EnsembleResult {
        config: config.clone(),
        model_label: resolved.label,
        n_absorbed,
        absorbed_fraction: n_absorbed as f64 / config.n_paths as f64,
        mean_tau,
        std_tau,
        drift_diagnostics: paths_with_diagnostics,
        outcomes,
    })
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct WeightedEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Sample mean of the Girsanov weights; should be ~1 (the weight is a
    /// martingale), so large deviations flag a mis-specified change of
    /// measure.
    pub mean_weight: f64,
    pub n_paths: usize,
}

/// E[h(X(t_eval))] for the *unconditioned* model, computed by reweighting
/// driftless Brownian paths with the Girsanov factor.
///
/// For BM and tanh-drift models the weight depends only on the endpoint, so
/// the endpoint is sampled exactly (one Gaussian per path, no time
/// discretization error). The taboo weight vanishes on paths that touch `b`
/// before `t_eval`; those paths are stepped at `config.dt` with the same
/// bridge-crossing test as the absorbing simulator, applied at `b`.
pub fn simulate_reweighted_expectation<H>(
    model: &DriftModel,
    setup: &BarrierSetup,
    config: &SimConfig,
    t_eval: f64,
    h: H,
) -> Result<WeightedEstimate>
where
    H: Fn(f64) -> f64 + Sync,
{
    model.validate_with(setup)?;
    if matches!(model, DriftModel::Conditioned { .. }) {
        return Err(Error::Unsupported(
            "Girsanov reweighting against driftless paths covers the base families only; \
             conditioned drifts are not absolutely continuous with respect to \
             driftless Brownian motion on path space"
                .into(),
        ));
    }
    if !(t_eval.is_finite() && t_eval > setup.t0) {
        return Err(Error::InvalidParameter(format!(
            "need t_eval > t0, got t_eval={t_eval} t0={}",
            setup.t0
        )));
    }
    let x0 = setup.x0;
    let t0 = setup.t0;
    let tau = t_eval - t0;
    let path_dependent = matches!(model, DriftModel::Taboo { .. });
    let sub_step_eps = 1e-9 * config.dt;

    let run_path = |idx: usize| -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(idx as u64);
        if !path_dependent {
            let z: f64 = rng.sample(StandardNormal);
            let w_end = x0 + tau.sqrt() * z;
            let weight = girsanov_weight(model, x0, w_end, t0, t_eval)
                .expect("endpoint weight of a validated base-family model");
            return (weight * h(w_end), weight);
        }
        let b = match model {
            DriftModel::Taboo { b } => *b,
            _ => unreachable!("path-dependent weights only arise for taboo models"),
        };
        let mut w = x0;
        let mut k: u64 = 0;
        loop {
            let t = t0 + (k as f64) * config.dt;
            let remaining = t_eval - t;
            if remaining <= sub_step_eps {
                break;
            }
            let dt = config.dt.min(remaining);
            let z: f64 = rng.sample(StandardNormal);
            let w_new = w + dt.sqrt() * z;
            if w_new >= b {
                return (0.0, 0.0);
            }
            if config.bridge_correction {
                let exponent = -2.0 * (b - w) * (b - w_new) / dt;
                if exponent >= BRIDGE_EXPONENT_CUTOFF && rng.gen::<f64>() < exponent.exp() {
                    return (0.0, 0.0);
                }
            }
            w = w_new;
            k += 1;
        }
        let weight = (b - w) / (b - x0);
        (weight * h(w), weight)
    };

    let samples: Vec<(f64, f64)> = (0..config.n_paths).into_par_iter().map(run_path).collect();
    let n = samples.len() as f64;
    let value = samples.iter().map(|(v, _)| v).sum::<f64>() / n;
    let mean_weight = samples.iter().map(|(_, w)| w).sum::<f64>() / n;
    let variance = samples.iter().map(|(v, _)| (v - value) * (v - value)).sum::<f64>()
        / (n - 1.0).max(1.0);
    Ok(WeightedEstimate {
        value,
        std_error: (variance / n).sqrt(),
        mean_weight,
        n_paths: samples.len(),
    })
}

/// Sizes the global rayon pool from the `FPTLAB_THREADS` environment
/// variable. No effect if the variable is unset/invalid or a pool already
/// exists.
pub fn configure_threads_from_env() {
    if let Ok(raw) = std::env::var("FPTLAB_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
