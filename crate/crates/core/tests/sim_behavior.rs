//! Behavioral checks of the simulator and the statistical verification
//! layer: scheduling-independent determinism, step-size convergence of the
//! absorbed fraction, singularity safety of repelling drifts, and KS round
//! trips that must pass on matched references and fail on mismatched ones.

use fptlab::analytics::{survival_to_t, BarrierSetup, DriftModel};
use fptlab::conditioning::ConditioningScheme;
use fptlab::sim::{simulate_ensemble, PathOutcome, SimConfig};
use fptlab::stats::{
    dirac_report, goodness_report, ks_against_fpt, DiracTolerances, GoodnessTolerances,
};
use fptlab::Error;

fn setup01() -> BarrierSetup {
    BarrierSetup::new(1.0, 0.0, 0.0).unwrap()
}

fn conditioned(source: DriftModel, scheme: ConditioningScheme) -> DriftModel {
    DriftModel::Conditioned {
        source: Box::new(source),
        setup: setup01(),
        scheme,
    }
}

#[test]
fn ensembles_do_not_depend_on_the_rayon_pool_size() {
    let model = DriftModel::TanhDrift { alpha: 1.0, beta: 0.2 };
    let config = SimConfig::new(1e-3, 2.0, 4000, 21).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| simulate_ensemble(&model, &setup01(), &config).unwrap())
    };
    let serial = run(1);
    let wide = run(4);
    assert_eq!(serial.outcomes, wide.outcomes);
    assert_eq!(serial.model_label, "tanh(alpha=1,beta=0.2)");
    assert_eq!(serial.config.seed, 21);
}

#[test]
fn absorption_times_are_step_midpoints_and_step_counts_match() {
    let model = DriftModel::Bm { mu: 0.5 };
    let config = SimConfig::new(0.25, 1.0, 200, 81).unwrap();
    let r = simulate_ensemble(&model, &setup01(), &config).unwrap();
    assert!(r.n_absorbed > 0);
    for outcome in &r.outcomes {
        match *outcome {
            PathOutcome::Absorbed { tau, n_steps } => {
                let expected = (n_steps as f64 - 1.0) * 0.25 + 0.125;
                assert!((tau - expected).abs() < 1e-12, "tau {tau} steps {n_steps}");
            }
            PathOutcome::Survived { x_end, n_steps } => {
                assert_eq!(n_steps, 4);
                assert!(x_end < 1.0);
            }
        }
    }
}

/// Without the within-step crossing test the discrete maximum misses
/// crossings, an O(sqrt(dt)) bias of the absorbed fraction that dwarfs the
/// Monte Carlo noise at coarse steps; the bridge test removes it so
/// thoroughly that even dt = 1e-2 sits inside the noise band.
#[test]
fn absorbed_fraction_bias_shrinks_with_dt_and_the_bridge_test_removes_it() {
    let model = DriftModel::Bm { mu: 0.0 };
    let setup = setup01();
    let horizon = 5.0;
    let n = 100_000;
    let analytic = 1.0 - survival_to_t(&model, &setup, horizon).unwrap();
    let mc_sigma = (analytic * (1.0 - analytic) / n as f64).sqrt();

    let mut uncorrected = Vec::new();
    for (dt, seed) in [(1e-2, 31), (1e-3, 32), (1e-4, 33)] {
        let config = SimConfig::new(dt, horizon, n, seed)
            .unwrap()
            .with_bridge_correction(false);
        let r = simulate_ensemble(&model, &setup, &config).unwrap();
        uncorrected.push((r.absorbed_fraction - analytic).abs());
    }
    assert!(
        uncorrected[0] > uncorrected[1] && uncorrected[1] > uncorrected[2],
        "uncorrected errors should fall with dt: {uncorrected:?}"
    );
    assert!(
        uncorrected[0] > 6.0 * mc_sigma,
        "coarse-step bias {} should dwarf the noise scale {mc_sigma}",
        uncorrected[0]
    );

    for (dt, seed) in [(1e-2, 34), (1e-3, 35)] {
        let config = SimConfig::new(dt, horizon, n, seed).unwrap();
        let r = simulate_ensemble(&model, &setup, &config).unwrap();
        let err = (r.absorbed_fraction - analytic).abs();
        assert!(
            err <= 3.0 * mc_sigma,
            "corrected dt={dt} error {err} exceeds 3 sigma {}",
            3.0 * mc_sigma
        );
    }
}

#[test]
fn repelling_drifts_keep_paths_strictly_below_their_boundaries() {
    // Williams drift: the forever-survival conditioning never absorbs, and
    // the clamp holds states at least half a step-deviation below the pole
    let model = conditioned(
        DriftModel::TanhDrift { alpha: 1.0, beta: 0.0 },
        ConditioningScheme::ForeverSurvival,
    );
    let dt = 1e-3;
    let config = SimConfig::new(dt, 5.0, 20_000, 41).unwrap();
    let r = simulate_ensemble(&model, &setup01(), &config).unwrap();
    assert_eq!(r.n_absorbed, 0);
    assert_eq!(r.drift_diagnostics, 0);
    let clamp = 1.0 - 0.5 * dt.sqrt();
    assert!(r.surviving_endpoints().iter().all(|&x| x <= clamp + 1e-12));

    // taboo drift -1/(b - x): paths absorb at a < b, so the pole at b is
    // never reached and no drift evaluation can blow up
    let taboo = DriftModel::Taboo { b: 2.0 };
    let config = SimConfig::new(1e-3, 5.0, 20_000, 42).unwrap();
    let r = simulate_ensemble(&taboo, &setup01(), &config).unwrap();
    assert_eq!(r.drift_diagnostics, 0);
    assert!(r.surviving_endpoints().iter().all(|&x| x < 1.0));
    assert!(r.absorption_times().iter().all(|&tau| tau > 0.0));
}

#[test]
fn matched_references_pass_the_ks_round_trip_for_every_family() {
    let families = [
        DriftModel::Bm { mu: 0.3 },
        DriftModel::TanhDrift { alpha: 1.0, beta: 0.4 },
        DriftModel::Taboo { b: 2.0 },
    ];
    let setup = setup01();
    let horizon = 5.0;
    let n = 20_000;
    for model in &families {
        let analytic = 1.0 - survival_to_t(model, &setup, horizon).unwrap();
        for seed in [101, 202, 303] {
            let config = SimConfig::new(1e-3, horizon, n, seed).unwrap();
            let r = simulate_ensemble(model, &setup, &config).unwrap();
            let ks = ks_against_fpt(&r.absorption_times(), model, &setup, horizon).unwrap();
            assert!(
                ks.distance <= ks.threshold,
                "{model:?} seed {seed}: KS {} over threshold {}",
                ks.distance,
                ks.threshold
            );
            // binomial 3 sigma at 2e4 paths is at most 0.0106
            assert!(
                (r.absorbed_fraction - analytic).abs() <= 0.012,
                "{model:?} seed {seed}: absorbed {} vs analytic {analytic}",
                r.absorbed_fraction
            );
        }
    }

    // the full report aggregates the same three checks
    let config = SimConfig::new(1e-3, horizon, n, 404).unwrap();
    let model = DriftModel::Bm { mu: 0.3 };
    let r = simulate_ensemble(&model, &setup, &config).unwrap();
    let tolerances = GoodnessTolerances {
        absorption: 0.012,
        ks_distance: 0.02,
        survival: 0.012,
    };
    let report =
        goodness_report(&r, &model, &setup, horizon, &[0.5, 1.0, 2.0, 5.0], tolerances).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn a_mismatched_reference_is_rejected_by_the_ks_test() {
    let setup = setup01();
    let horizon = 5.0;
    let config = SimConfig::new(1e-3, horizon, 20_000, 51).unwrap();
    let tanh = DriftModel::TanhDrift { alpha: 1.0, beta: 0.0 };
    let r = simulate_ensemble(&tanh, &setup, &config).unwrap();
    let wrong = DriftModel::Bm { mu: 0.0 };
    let ks = ks_against_fpt(&r.absorption_times(), &wrong, &setup, horizon).unwrap();
    assert!(
        ks.distance > ks.threshold,
        "mismatched laws must fail: KS {} threshold {}",
        ks.distance,
        ks.threshold
    );
    assert!(ks.distance > 0.04, "laws this far apart should be obvious: {}", ks.distance);
}

#[test]
fn bridge_ensembles_pass_the_dirac_moment_check() {
    let model = conditioned(
        DriftModel::Bm { mu: 0.0 },
        ConditioningScheme::DiracTime { t_star: 1.0 },
    );
    let config = SimConfig::new(1e-4, 2.0, 2000, 61).unwrap();
    let r = simulate_ensemble(&model, &setup01(), &config).unwrap();
    let report = dirac_report(&r, 1.0, DiracTolerances::default()).unwrap();
    assert!(report.pass, "{report:?}");
    assert_eq!(report.n_absorbed, 2000);
    assert!(report.mean_tau > 0.99 && report.mean_tau <= 1.0, "{}", report.mean_tau);
    assert!(report.std_tau <= 0.01, "{}", report.std_tau);
}

#[test]
fn statistical_tests_refuse_underpowered_ensembles() {
    let model = DriftModel::Bm { mu: 0.0 };
    let setup = setup01();
    // a horizon of 0.01 leaves the absorption probability around e^-50
    let config = SimConfig::new(1e-3, 0.01, 500, 71).unwrap();
    let r = simulate_ensemble(&model, &setup, &config).unwrap();
    let err = ks_against_fpt(&r.absorption_times(), &model, &setup, 0.01).unwrap_err();
    assert!(matches!(err, Error::TooFewAbsorbed { .. }));
}
