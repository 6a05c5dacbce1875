//! Statistical verification of simulated ensembles against closed forms:
//! Kolmogorov-Smirnov distance of absorption times, absorption-probability
//! and survival-curve comparisons, and the drift-table identity sweep.

use serde::Serialize;

use crate::analytics::{survival_to_t, BarrierSetup, DriftModel};
use crate::conditioning::{ConditionedDrift, ConditioningScheme};
use crate::error::{Error, Result};
use crate::sim::EnsembleResult;

/// Minimum number of absorbed paths for a distribution test.
pub const KS_MIN_ABSORBED: usize = 100;
/// Tolerance of the drift-table identity sweep.
pub const TABLE_TOLERANCE: f64 = 1e-10;

/// The base-family process whose first-passage law the model's absorption
/// times must follow.
///
/// Unconditioned models follow their own law; processes conditioned on a
/// foreign first-passage density follow the *target* family's law (including
/// its never-absorbed mass). Dirac-time, forever-survival and finite-horizon
/// conditionings have no absolutely continuous reference law.
pub fn fpt_reference_model(model: &DriftModel) -> Result<DriftModel> {
    match model {
        DriftModel::Bm { .. } | DriftModel::TanhDrift { .. } | DriftModel::Taboo { .. } => {
            Ok(model.clone())
        }
        DriftModel::Conditioned { scheme, .. } => match scheme {
            ConditioningScheme::FptOfBm { mu } => Ok(DriftModel::Bm { mu: *mu }),
            ConditioningScheme::FptOfTanh { gamma, delta } => {
                Ok(DriftModel::TanhDrift { alpha: *gamma, beta: *delta })
            }
            ConditioningScheme::FptOfTaboo { b_target } => Ok(DriftModel::Taboo { b: *b_target }),
            ConditioningScheme::DiracTime { .. }
            | ConditioningScheme::ForeverSurvival
            | ConditioningScheme::FiniteHorizon(_) => Err(Error::Unsupported(format!(
                "no absolutely continuous first-passage reference law for scheme {scheme:?}"
            ))),
        },
    }
}

/// Kolmogorov-Smirnov comparison of absorption times against the closed-form
/// law, conditioned on absorption before `horizon`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub distance: f64,
    /// `1.63/sqrt(n) + 0.005`: the 1% critical value plus a discretization
    /// allowance.
    pub threshold: f64,
    pub n: usize,
}

/// KS distance between the sample `taus` and the reference model's
/// first-passage law conditioned on absorption by `horizon`:
/// `F(t) = (1 - S(t)) / (1 - S(horizon))`.
pub fn ks_against_fpt(
    taus: &[f64],
    reference: &DriftModel,
    setup: &BarrierSetup,
    horizon: f64,
) -> Result<KsResult> {
    let n = taus.len();
    if n < KS_MIN_ABSORBED {
        return Err(Error::TooFewAbsorbed { got: n, required: KS_MIN_ABSORBED });
    }
    let absorbed_mass = 1.0 - survival_to_t(reference, setup, horizon)?;
    if absorbed_mass <= 0.0 {
        return Err(Error::Domain(format!(
            "the reference law puts no absorption mass before horizon {horizon}"
        )));
    }
    let mut sorted = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n_f = n as f64;
    let mut distance: f64 = 0.0;
    for (i, &tau) in sorted.iter().enumerate() {
        let cdf = if tau <= setup.t0 {
            0.0
        } else {
            ((1.0 - survival_to_t(reference, setup, tau)?) / absorbed_mass).clamp(0.0, 1.0)
        };
        let hi = (i as f64 + 1.0) / n_f - cdf;
        let lo = cdf - i as f64 / n_f;
        distance = distance.max(hi.max(lo));
    }
    Ok(KsResult {
        distance,
        threshold: 1.63 / n_f.sqrt() + 0.005,
        n,
    })
}

/// Largest deviation between the empirical survival curve of an ensemble and
/// the reference model's survival probability, over the checkpoints.
pub fn survival_curve_max_deviation(
    taus: &[f64],
    n_paths: usize,
    reference: &DriftModel,
    setup: &BarrierSetup,
    checkpoints: &[f64],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &t in checkpoints {
        let absorbed_by_t = taus.iter().filter(|&&tau| tau <= t).count();
        let empirical = 1.0 - absorbed_by_t as f64 / n_paths as f64;
        let analytic = survival_to_t(reference, setup, t)?;
        worst = worst.max((empirical - analytic).abs());
    }
    Ok(worst)
}

/// Pass/fail tolerances of a [`GoodnessReport`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GoodnessTolerances {
    /// |absorbed fraction - analytic absorption probability|.
    pub absorption: f64,
    /// KS distance of absorption times.
    pub ks_distance: f64,
    /// Max |empirical - analytic| survival over the checkpoints.
    pub survival: f64,
}

impl Default for GoodnessTolerances {
    fn default() -> Self {
        GoodnessTolerances { absorption: 0.005, ks_distance: 0.01, survival: 0.01 }
    }
}

/// Verdict of an ensemble against its closed-form reference law.
#[derive(Debug, Clone, Serialize)]
pub struct GoodnessReport {
    pub n_paths: usize,
    pub n_absorbed: usize,
    pub absorbed_fraction: f64,
    pub analytic_absorption: f64,
    pub absorption_abs_error: f64,
    pub ks_distance: f64,
    pub ks_threshold: f64,
    pub survival_checkpoints: Vec<f64>,
    pub survival_max_abs_dev: f64,
    pub tolerances: GoodnessTolerances,
    pub pass: bool,
}

/// Compares an ensemble of `model` against the closed-form law of its
/// first-passage reference, at the ensemble's own horizon.
pub fn goodness_report(
    ensemble: &EnsembleResult,
    model: &DriftModel,
    setup: &BarrierSetup,
    horizon: f64,
    checkpoints: &[f64],
    tolerances: GoodnessTolerances,
) -> Result<GoodnessReport> {
    let reference = fpt_reference_model(model)?;
    let taus = ensemble.absorption_times();
    let analytic_absorption = 1.0 - survival_to_t(&reference, setup, horizon)?;
    let absorption_abs_error = (ensemble.absorbed_fraction - analytic_absorption).abs();
    let ks = ks_against_fpt(&taus, &reference, setup, horizon)?;
    let survival_max_abs_dev =
        survival_curve_max_deviation(&taus, ensemble.outcomes.len(), &reference, setup, checkpoints)?;
    let pass = absorption_abs_error <= tolerances.absorption
        && ks.distance <= tolerances.ks_distance
        && survival_max_abs_dev <= tolerances.survival;
    Ok(GoodnessReport {
        n_paths: ensemble.outcomes.len(),
        n_absorbed: ensemble.n_absorbed,
        absorbed_fraction: ensemble.absorbed_fraction,
        analytic_absorption,
        absorption_abs_error,
        ks_distance: ks.distance,
        ks_threshold: ks.threshold,
        survival_checkpoints: checkpoints.to_vec(),
        survival_max_abs_dev,
        tolerances,
        pass,
    })
}

/// Pass thresholds for a Dirac-time ensemble check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiracTolerances {
    /// Allowed deviation of the sample mean from `t_star`.
    pub mean_abs_error: f64,
    pub std_max: f64,
}

impl Default for DiracTolerances {
    fn default() -> Self {
        DiracTolerances { mean_abs_error: 0.01, std_max: 0.01 }
    }
}

/// Verification report for a Dirac-time (bridge) conditioning.
///
/// The target law is a point mass at `t_star`, so there is no continuous CDF
/// for a KS comparison; the ensemble is checked through total absorption and
/// the first two moments of the absorption time instead.
#[derive(Debug, Clone, Serialize)]
pub struct DiracReport {
    pub n_paths: usize,
    pub n_absorbed: usize,
    pub absorbed_fraction: f64,
    pub t_star: f64,
    pub mean_tau: f64,
    pub std_tau: f64,
    pub tolerances: DiracTolerances,
    pub pass: bool,
}

/// Mean/stddev check of a bridge ensemble against its deadline `t_star`.
pub fn dirac_report(
    ensemble: &EnsembleResult,
    t_star: f64,
    tolerances: DiracTolerances,
) -> Result<DiracReport> {
    if ensemble.n_absorbed < 2 {
        return Err(Error::TooFewAbsorbed { got: ensemble.n_absorbed, required: 2 });
    }
    let mean_tau = ensemble.mean_tau.expect("mean of a nonempty absorption sample");
    let std_tau = ensemble.std_tau.expect("stddev of at least two absorption times");
    let pass = ensemble.n_absorbed == ensemble.outcomes.len()
        && (mean_tau - t_star).abs() <= tolerances.mean_abs_error
        && std_tau <= tolerances.std_max;
    Ok(DiracReport {
        n_paths: ensemble.outcomes.len(),
        n_absorbed: ensemble.n_absorbed,
        absorbed_fraction: ensemble.absorbed_fraction,
        t_star,
        mean_tau,
        std_tau,
        tolerances,
        pass,
    })
}

/// One row of the drift-table identity sweep.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub index: usize,
    /// Dispatch label of the production branch.
    pub branch: &'static str,
    pub description: &'static str,
    pub max_abs_dev: f64,
    pub pass: bool,
}

/// Sweeps all seventeen closed-form conditioned drifts against independent
/// direct-exponential transcriptions of the same formulas, on a grid of
/// (x, t) points at fixed reference parameters.
///
/// The production branches evaluate in log space for overflow safety; the
/// references here are deliberately naive, so the sweep catches dispatch
/// mix-ups and algebra drift between the two representations.
pub fn table_identity_sweep() -> Result<Vec<TableRow>> {
    let a = 1.0;
    let setup = BarrierSetup::new(a, 0.0, 0.0)?;
    let (mu_pos, mu_neg) = (0.3, -0.5);
    let (alpha, beta) = (1.0, 0.4);
    let (gamma, delta) = (0.5, 0.3);
    let b = 2.0;
    let t_star = 1.0;

    let bm_pos = DriftModel::Bm { mu: mu_pos };
    let bm_neg = DriftModel::Bm { mu: mu_neg };
    let tanh_ab = DriftModel::TanhDrift { alpha, beta };
    let taboo_b = DriftModel::Taboo { b };

    let bridge = move |x: f64, t: f64| -1.0 / (a - x) + (a - x) / (t_star - t);
    type Reference = Box<dyn Fn(f64, f64) -> f64>;

    let rows: Vec<(DriftModel, ConditioningScheme, &'static str, Reference)> = vec![
        (
            bm_pos.clone(),
            ConditioningScheme::DiracTime { t_star },
            "BM(mu>=0) | absorption at exactly t*",
            Box::new(bridge),
        ),
        (
            bm_pos.clone(),
            ConditioningScheme::ForeverSurvival,
            "BM(mu>=0) | never absorbed",
            Box::new(move |x, _t| -1.0 / (a - x)),
        ),
        (
            bm_neg.clone(),
            ConditioningScheme::ForeverSurvival,
            "BM(mu<0) | never absorbed",
            Box::new(move |x, _t| {
                let l = a - x;
                -mu_neg * (mu_neg * l).cosh() / (mu_neg * l).sinh()
            }),
        ),
        (
            tanh_ab.clone(),
            ConditioningScheme::DiracTime { t_star },
            "tanh(alpha,beta) | absorption at exactly t*",
            Box::new(bridge),
        ),
        (
            tanh_ab.clone(),
            ConditioningScheme::ForeverSurvival,
            "tanh(alpha,beta) | never absorbed",
            Box::new(move |x, _t| {
                let l = a - x;
                -alpha * (alpha * l).cosh() / (alpha * l).sinh()
            }),
        ),
        (
            taboo_b.clone(),
            ConditioningScheme::DiracTime { t_star },
            "taboo(b) | absorption at exactly t*",
            Box::new(bridge),
        ),
        (
            taboo_b.clone(),
            ConditioningScheme::ForeverSurvival,
            "taboo(b) | never absorbed",
            Box::new(move |x, _t| -1.0 / (a - x)),
        ),
        (
            tanh_ab.clone(),
            ConditioningScheme::FptOfBm { mu: mu_pos },
            "tanh(alpha,beta) | FPT law of BM(mu>=0)",
            Box::new(move |_x, _t| mu_pos),
        ),
        (
            tanh_ab.clone(),
            ConditioningScheme::FptOfBm { mu: mu_neg },
            "tanh(alpha,beta) | FPT law of BM(mu<0)",
            Box::new(move |x, t| {
                let (mu, l) = (mu_neg, a - x);
                let e1 = (2.0 * a * mu - mu * x - alpha * x
                    + 0.5 * (alpha * alpha - mu * mu) * t)
                    .exp();
                let c2 = 1.0 - (2.0 * a * mu).exp();
                let den = (2.0 * a * alpha).exp() - 1.0;
                let n = -(mu + alpha) * e1 - 2.0 * alpha * c2 * (2.0 * alpha * l).exp() / den;
                let d = e1 + c2 * ((2.0 * alpha * l).exp() - 1.0) / den;
                alpha + n / d
            }),
        ),
        (
            tanh_ab.clone(),
            ConditioningScheme::FptOfTanh { gamma, delta },
            "tanh(alpha,beta) | FPT law of tanh(gamma,delta), gamma != alpha",
            Box::new(move |x, t| {
                let l = a - x;
                let t1 = ((2.0 * (a * gamma + delta)).exp() + 1.0)
                    * (0.5 * (alpha * alpha - gamma * gamma) * t + gamma * x).exp();
                let coeff = ((2.0 * a * gamma).exp() - 1.0) / ((2.0 * a * alpha).exp() - 1.0)
                    * (alpha * x).exp();
                let t2p = coeff * ((2.0 * alpha * l).exp() + 1.0);
                let t2m = coeff * ((2.0 * alpha * l).exp() - 1.0);
                (gamma * t1 - alpha * t2p) / (t1 + t2m)
            }),
        ),
        (
            tanh_ab.clone(),
            ConditioningScheme::FptOfTanh { gamma: alpha, delta },
            "tanh(alpha,beta) | FPT law of tanh(alpha,delta)",
            Box::new(move |x, _t| alpha * (alpha * x + delta).tanh()),
        ),
        (
            bm_pos.clone(),
            ConditioningScheme::FptOfTanh { gamma: alpha, delta: beta },
            "BM(mu>=0) | FPT law of tanh(alpha,beta)",
            Box::new(move |x, t| {
                let front = (alpha * x + beta).exp() * (a * alpha + beta).cosh();
                let back = (a * alpha).sinh() * (0.5 * alpha * alpha * t).exp();
                (a * alpha * front - back) / (a * front + back * (a - x))
            }),
        ),
        (
            bm_pos.clone(),
            ConditioningScheme::FptOfTaboo { b_target: b },
            "BM(mu>=0) | FPT law of taboo(b)",
            Box::new(move |x, _t| -1.0 / (b - x)),
        ),
        (
            bm_neg.clone(),
            ConditioningScheme::FptOfTanh { gamma: alpha, delta: beta },
            "BM(mu<0) | FPT law of tanh(alpha,beta)",
            Box::new(move |x, t| {
                let (mu, l) = (mu_neg, a - x);
                let w = 2.0 * a / l
                    * (a * alpha + beta).exp()
                    * (a * alpha + beta).cosh()
                    * (0.5 * (mu * mu - alpha * alpha) * t).exp()
                    * (alpha * x).exp();
                let k = (a * alpha).exp() * (a * alpha).sinh() / (a * mu.abs()).sinh();
                let n = (alpha + 1.0 / l) * w + 2.0 * mu * k * (mu * l).cosh();
                let d = w + 2.0 * k * (mu.abs() * l).sinh();
                n / d
            }),
        ),
        (
            bm_neg.clone(),
            ConditioningScheme::FptOfTaboo { b_target: b },
            "BM(mu<0) | FPT law of taboo(b)",
            Box::new(move |x, t| {
                let (mu, l) = (mu_neg, a - x);
                let e = (0.5 * mu * mu * t - mu * x).exp();
                let c2 = 1.0 - (2.0 * a * mu).exp();
                let n = -mu * (b - a) * e + 2.0 * a * mu * (2.0 * mu * l).exp() / c2;
                let d = (b - a) * e + a * (1.0 - (2.0 * mu * l).exp()) / c2;
                mu + n / d
            }),
        ),
        (
            taboo_b.clone(),
            ConditioningScheme::FptOfBm { mu: mu_pos },
            "taboo(b) | FPT law of BM(mu>=0)",
            Box::new(move |_x, _t| mu_pos),
        ),
        (
            taboo_b.clone(),
            ConditioningScheme::FptOfBm { mu: mu_neg },
            "taboo(b) | FPT law of BM(mu<0)",
            Box::new(move |x, t| {
                let mu = mu_neg;
                let e = (a * mu).sinh() * (0.5 * mu * mu * t + mu * (x - a)).exp();
                (2.0 * e - a * mu) / (a - 2.0 * (a - x) * e)
            }),
        ),
    ];

    let n_x = 24;
    let times = [0.1, 0.4, 0.7];
    let mut report = Vec::with_capacity(rows.len());
    for (index, (source, scheme, description, reference)) in rows.into_iter().enumerate() {
        let cd = ConditionedDrift::new(&source, setup, scheme)?;
        let mut max_abs_dev: f64 = 0.0;
        for i in 0..n_x {
            // stay a boundary layer of 1e-3 * (a - x0) below the barrier
            let x = -1.5 + (a - 1e-3 + 1.5) * (i as f64) / (n_x as f64 - 1.0);
            for &t in &times {
                let produced = cd.drift(x, t)?;
                let expected = reference(x, t);
                max_abs_dev = max_abs_dev.max((produced - expected).abs());
            }
        }
        report.push(TableRow {
            index: index + 1,
            branch: cd.label(),
            description,
            max_abs_dev,
            pass: max_abs_dev <= TABLE_TOLERANCE,
        });
    }
    Ok(report)
}
