//! The six subcommands: closed-form evaluation, simulation, statistical
//! verification, the drift-table identity sweep, the two-curve drift figure,
//! and the Q-function reciprocity check.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use fptlab::analytics::{
    absorption_probability, drift_value, fpt_density, propagator_absorbed, propagator_free,
    survival_forever, survival_to_t, BarrierSetup, DriftModel, SpaceTimePoint,
};
use fptlab::conditioning::{q_forever_and_partial, reciprocity_check, ConditioningScheme, QFunction};
use fptlab::sim::{simulate_ensemble, EnsembleResult, PathOutcome};
use fptlab::stats::{dirac_report, goodness_report, table_identity_sweep, DiracTolerances, GoodnessTolerances};

use crate::config::{
    build_format, build_model, build_out, build_scheme, build_setup, build_sim, config_err,
    load_run_file, parse_grid, CliResult, CommonArgs, Format, ModelSpec, RunFile, RunSpec,
    SchemeSpec, SetupSpec,
};
use crate::output::{csv_document, emit, fmt_float, json_document};

/// Exit disposition of a command that ran to completion: `Fail` means a
/// verification executed and its criterion was not met (exit code 1),
/// as opposed to an error (exit code 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

/// Human-readable status goes to stdout normally, but moves to stderr when
/// the artifact itself occupies stdout (no --out given).
fn status(out: Option<&PathBuf>, line: &str) {
    if out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn setup_spec(setup: &BarrierSetup) -> SetupSpec {
    SetupSpec { a: setup.a, x0: setup.x0, t0: setup.t0 }
}

/// Quotes a string for a CSV field (descriptions may contain commas).
fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Evaluate a closed-form quantity on an (x, t) grid.
#[derive(Args, Debug)]
pub struct EvalArgs {
    /// drift | q | fpt-density | survival | survival-forever | absorption |
    /// propagator-free | propagator-absorbed
    pub quantity: Option<String>,

    /// x grid: a number, a comma list, or lo:hi:n (default: x0)
    #[arg(long, allow_hyphen_values = true)]
    pub xs: Option<String>,

    /// t grid: a number, a comma list, or lo:hi:n (default: T)
    #[arg(long, allow_hyphen_values = true)]
    pub ts: Option<String>,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Serialize)]
struct EvalRow {
    x: f64,
    t: f64,
    value: f64,
}

fn eval_quantity(
    quantity: &str,
    base: &DriftModel,
    eval_model: &DriftModel,
    scheme: Option<&ConditioningScheme>,
    setup: &BarrierSetup,
    x: f64,
    t: f64,
) -> CliResult<f64> {
    let p = SpaceTimePoint::new(x, t);
    let start = SpaceTimePoint::new(setup.x0, setup.t0);
    // The time-law quantities are laws of the first passage from the current
    // point, so the grid x replaces the start position for them.
    let from_x = || BarrierSetup::new(setup.a, x, setup.t0);
    let v = match quantity {
        "drift" => drift_value(eval_model, p)?,
        "q" => {
            let s = scheme.ok_or_else(|| config_err("quantity 'q' needs --scheme"))?;
            q_forever_and_partial(base, setup, s, p)?
        }
        "fpt-density" => fpt_density(eval_model, &from_x()?, t)?,
        "survival" => survival_to_t(eval_model, &from_x()?, t)?,
        "survival-forever" => survival_forever(eval_model, &from_x()?)?,
        "absorption" => absorption_probability(eval_model, &from_x()?)?,
        "propagator-free" => propagator_free(eval_model, start, p)?,
        "propagator-absorbed" => propagator_absorbed(eval_model, setup, start, p)?,
        other => {
            return Err(config_err(format!(
                "unknown quantity '{other}' (expected drift, q, fpt-density, survival, \
                 survival-forever, absorption, propagator-free or propagator-absorbed)"
            )))
        }
    };
    Ok(v)
}

pub fn run_eval(args: &EvalArgs) -> CliResult<Outcome> {
    let file = load_run_file(args.common.run.as_ref())?;
    let quantity = args
        .quantity
        .clone()
        .or_else(|| file.quantity.clone())
        .ok_or_else(|| config_err("missing quantity (try: fptlab eval drift --model bm --mu 0.3)"))?;
    let setup = build_setup(&args.common, &file)?;
    let (model, model_spec) = build_model(&args.common, &file)?;
    let scheme = build_scheme(&args.common, &file, setup.a)?;
    let big_t = args.common.big_t.or(file.big_t).unwrap_or(1.0);
    let xs_spec = args
        .xs
        .clone()
        .or_else(|| file.xs.clone())
        .unwrap_or_else(|| format!("{}", setup.x0));
    let ts_spec = args
        .ts
        .clone()
        .or_else(|| file.ts.clone())
        .unwrap_or_else(|| format!("{big_t}"));
    let xs = parse_grid(&xs_spec)?;
    let ts = parse_grid(&ts_spec)?;
    let format = build_format(&args.common.format, &file.format, Format::Csv)?;
    let out = build_out(&args.common, &file);

    let mut runspec = RunSpec::new("eval", format, out.as_ref());
    runspec.model = Some(model_spec);
    runspec.scheme = scheme.as_ref().map(|(_, s)| s.clone());
    runspec.setup = Some(setup_spec(&setup));
    runspec.quantity = Some(quantity.clone());
    runspec.xs = Some(xs_spec);
    runspec.ts = Some(ts_spec);

    let eval_model = match &scheme {
        Some((s, _)) => DriftModel::Conditioned {
            source: Box::new(model.clone()),
            setup,
            scheme: s.clone(),
        },
        None => model.clone(),
    };

    let mut csv_rows = Vec::with_capacity(xs.len() * ts.len());
    let mut json_rows = Vec::with_capacity(xs.len() * ts.len());
    for &x in &xs {
        for &t in &ts {
            let scheme_ref = scheme.as_ref().map(|(s, _)| s);
            let value = eval_quantity(&quantity, &model, &eval_model, scheme_ref, &setup, x, t)?;
            csv_rows.push(vec![fmt_float(x), fmt_float(t), fmt_float(value)]);
            json_rows.push(EvalRow { x, t, value });
        }
    }

    let content = match format {
        Format::Csv => csv_document(&runspec, &["x", "t", "value"], &csv_rows),
        Format::Json => json_document(&runspec, "rows", &json_rows),
    };
    emit(out.as_deref(), &content)?;
    if let Some(path) = &out {
        status(
            Some(path),
            &format!("eval {quantity}: wrote {} values to {}", csv_rows.len(), path.display()),
        );
    }
    Ok(Outcome::Pass)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Run an Euler-Maruyama ensemble; writes `<out>.summary.json` and
/// `<out>.fpt.csv` (absorbed paths with their absorption times).
#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Serialize)]
struct SimulationSummary {
    model_label: String,
    n_paths: usize,
    n_absorbed: usize,
    n_survived: usize,
    absorbed_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    std_tau: Option<f64>,
    drift_diagnostics: u64,
}

impl SimulationSummary {
    fn of(ensemble: &EnsembleResult) -> SimulationSummary {
        SimulationSummary {
            model_label: ensemble.model_label.clone(),
            n_paths: ensemble.outcomes.len(),
            n_absorbed: ensemble.n_absorbed,
            n_survived: ensemble.outcomes.len() - ensemble.n_absorbed,
            absorbed_fraction: ensemble.absorbed_fraction,
            mean_tau: ensemble.mean_tau,
            std_tau: ensemble.std_tau,
            drift_diagnostics: ensemble.drift_diagnostics,
        }
    }
}

/// A stepping model plus its run-record entries: the (possibly conditioned)
/// drift, the base-family record, and the scheme with its record if present.
type SimTarget = (DriftModel, ModelSpec, Option<(ConditioningScheme, SchemeSpec)>);

/// Builds the (possibly conditioned) model a simulation-facing command steps.
fn build_sim_model(args: &CommonArgs, file: &RunFile, setup: &BarrierSetup) -> CliResult<SimTarget> {
    let (base, model_spec) = build_model(args, file)?;
    let scheme = build_scheme(args, file, setup.a)?;
    let model = match &scheme {
        Some((s, _)) => DriftModel::Conditioned {
            source: Box::new(base),
            setup: *setup,
            scheme: s.clone(),
        },
        None => base,
    };
    Ok((model, model_spec, scheme))
}

pub fn run_simulate(args: &SimulateArgs) -> CliResult<Outcome> {
    let file = load_run_file(args.common.run.as_ref())?;
    let setup = build_setup(&args.common, &file)?;
    let (model, model_spec, scheme) = build_sim_model(&args.common, &file, &setup)?;
    let (config, sim_spec) = build_sim(&args.common, &file)?;
    let out = build_out(&args.common, &file)
        .ok_or_else(|| config_err("simulate writes files and needs --out <stem>"))?;
    let summary_path = PathBuf::from(format!("{}.summary.json", out.display()));
    let fpt_path = PathBuf::from(format!("{}.fpt.csv", out.display()));

    let ensemble = simulate_ensemble(&model, &setup, &config)?;
    let summary = SimulationSummary::of(&ensemble);

    let mut runspec = RunSpec::new("simulate", Format::Json, Some(&summary_path));
    runspec.model = Some(model_spec);
    runspec.scheme = scheme.as_ref().map(|(_, s)| s.clone());
    runspec.setup = Some(setup_spec(&setup));
    runspec.sim = Some(sim_spec);
    emit(Some(&summary_path), &json_document(&runspec, "summary", &summary))?;

    let mut sample_spec = runspec.clone();
    sample_spec.format = Format::Csv.name().to_string();
    sample_spec.output_path = Some(fpt_path.display().to_string());
    let rows: Vec<Vec<String>> = ensemble
        .outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| match o {
            PathOutcome::Absorbed { tau, n_steps } => {
                Some(vec![i.to_string(), fmt_float(*tau), n_steps.to_string()])
            }
            PathOutcome::Survived { .. } => None,
        })
        .collect();
    emit(Some(&fpt_path), &csv_document(&sample_spec, &["path", "tau", "n_steps"], &rows))?;

    println!(
        "simulate {}: {} paths, {} absorbed (fraction {:.6}), wrote {} and {}",
        ensemble.model_label,
        summary.n_paths,
        summary.n_absorbed,
        summary.absorbed_fraction,
        summary_path.display(),
        fpt_path.display(),
    );
    Ok(Outcome::Pass)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

/// Simulate an ensemble and test it against its closed-form law; exits 1
/// when the ensemble fails the test.
#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Survival checkpoints, comma-separated (default: horizon x 0.25,0.5,0.75,1)
    #[arg(long, allow_hyphen_values = true)]
    pub checkpoints: Option<String>,

    /// Absorbed-fraction tolerance (default 0.005)
    #[arg(long)]
    pub tol_absorption: Option<f64>,

    /// KS-distance tolerance (default 0.01)
    #[arg(long)]
    pub tol_ks: Option<f64>,

    /// Survival-curve tolerance (default 0.01)
    #[arg(long)]
    pub tol_survival: Option<f64>,

    /// Dirac schemes: tolerance on |mean tau - Tstar| (default 0.01)
    #[arg(long)]
    pub tol_mean: Option<f64>,

    /// Dirac schemes: tolerance on the stddev of tau (default 0.01)
    #[arg(long)]
    pub tol_std: Option<f64>,

    #[command(flatten)]
    pub common: CommonArgs,
}

/// Renders a serializable report as key,value CSV rows (nested values are
/// inlined as JSON).
fn report_csv_rows<T: Serialize>(report: &T) -> Vec<Vec<String>> {
    let value = serde_json::to_value(report).expect("report serializes");
    let serde_json::Value::Object(map) = value else {
        return vec![vec!["report".into(), csv_quote(&value.to_string())]];
    };
    map.into_iter()
        .map(|(k, v)| {
            let cell = match v {
                serde_json::Value::String(s) => csv_quote(&s),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                other => csv_quote(&other.to_string()),
            };
            vec![k, cell]
        })
        .collect()
}

pub fn run_verify(args: &VerifyArgs) -> CliResult<Outcome> {
    let file = load_run_file(args.common.run.as_ref())?;
    let setup = build_setup(&args.common, &file)?;
    let (model, model_spec, scheme) = build_sim_model(&args.common, &file, &setup)?;
    let (config, sim_spec) = build_sim(&args.common, &file)?;
    let format = build_format(&args.common.format, &file.format, Format::Json)?;
    let out = build_out(&args.common, &file);

    let mut runspec = RunSpec::new("verify", format, out.as_ref());
    runspec.model = Some(model_spec);
    runspec.scheme = scheme.as_ref().map(|(_, s)| s.clone());
    runspec.setup = Some(setup_spec(&setup));
    runspec.sim = Some(sim_spec);

    let ensemble = simulate_ensemble(&model, &setup, &config)?;

    let (pass, content, line) = if let Some((ConditioningScheme::DiracTime { t_star }, _)) = &scheme {
        let tolerances = DiracTolerances {
            mean_abs_error: args.tol_mean.unwrap_or_else(|| DiracTolerances::default().mean_abs_error),
            std_max: args.tol_std.unwrap_or_else(|| DiracTolerances::default().std_max),
        };
        let report = dirac_report(&ensemble, *t_star, tolerances)?;
        let content = match format {
            Format::Json => json_document(&runspec, "report", &report),
            Format::Csv => csv_document(&runspec, &["field", "value"], &report_csv_rows(&report)),
        };
        let line = format!(
            "verify {}: {} ({} of {} absorbed, |mean tau - {}| = {:.3e} <= {}, std tau = {:.3e} <= {})",
            ensemble.model_label,
            if report.pass { "PASS" } else { "FAIL" },
            report.n_absorbed,
            report.n_paths,
            report.t_star,
            (report.mean_tau - report.t_star).abs(),
            tolerances.mean_abs_error,
            report.std_tau,
            tolerances.std_max,
        );
        (report.pass, content, line)
    } else {
        let tolerances = GoodnessTolerances {
            absorption: args.tol_absorption.unwrap_or_else(|| GoodnessTolerances::default().absorption),
            ks_distance: args.tol_ks.unwrap_or_else(|| GoodnessTolerances::default().ks_distance),
            survival: args.tol_survival.unwrap_or_else(|| GoodnessTolerances::default().survival),
        };
        let checkpoints = match args.checkpoints.as_deref().or(file.checkpoints.as_deref()) {
            Some(spec) => parse_grid(spec)?,
            None => [0.25, 0.5, 0.75, 1.0].iter().map(|f| f * config.horizon).collect(),
        };
        runspec.checkpoints = Some(checkpoints.clone());
        let report = goodness_report(&ensemble, &model, &setup, config.horizon, &checkpoints, tolerances)?;
        let content = match format {
            Format::Json => json_document(&runspec, "report", &report),
            Format::Csv => csv_document(&runspec, &["field", "value"], &report_csv_rows(&report)),
        };
        let line = format!(
            "verify {}: {} (absorption err {:.3e} <= {}, KS {:.3e} <= {}, survival dev {:.3e} <= {})",
            ensemble.model_label,
            if report.pass { "PASS" } else { "FAIL" },
            report.absorption_abs_error,
            tolerances.absorption,
            report.ks_distance,
            tolerances.ks_distance,
            report.survival_max_abs_dev,
            tolerances.survival,
        );
        (report.pass, content, line)
    };

    emit(out.as_deref(), &content)?;
    status(out.as_ref(), &line);
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

// ---------------------------------------------------------------------------
// table-check
// ---------------------------------------------------------------------------

/// Sweep every closed-form conditioned-drift branch against an independent
/// transcription of the same formula; exits 1 if any row deviates.
#[derive(Args, Debug)]
pub struct TableCheckArgs {
    /// JSON run file (out/format)
    #[arg(long, value_name = "FILE")]
    pub run: Option<PathBuf>,

    /// Output path; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// csv | json
    #[arg(long)]
    pub format: Option<String>,
}

pub fn run_table_check(args: &TableCheckArgs) -> CliResult<Outcome> {
    let file = load_run_file(args.run.as_ref())?;
    let format = build_format(&args.format, &file.format, Format::Csv)?;
    let out = args.out.clone().or_else(|| file.out.as_ref().map(PathBuf::from));

    let rows = table_identity_sweep()?;
    let all_pass = rows.iter().all(|r| r.pass);

    let runspec = RunSpec::new("table-check", format, out.as_ref());
    let content = match format {
        Format::Csv => {
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.index.to_string(),
                        r.branch.to_string(),
                        csv_quote(r.description),
                        fmt_float(r.max_abs_dev),
                        r.pass.to_string(),
                    ]
                })
                .collect();
            csv_document(
                &runspec,
                &["index", "branch", "description", "max_abs_dev", "pass"],
                &csv_rows,
            )
        }
        Format::Json => json_document(&runspec, "rows", &rows),
    };
    emit(out.as_deref(), &content)?;

    for r in &rows {
        status(
            out.as_ref(),
            &format!(
                "table-check row {:2} {:<34} max dev {:.3e} {}",
                r.index,
                r.branch,
                r.max_abs_dev,
                if r.pass { "PASS" } else { "FAIL" }
            ),
        );
    }
    status(
        out.as_ref(),
        &format!(
            "table-check: {}/{} rows consistent",
            rows.iter().filter(|r| r.pass).count(),
            rows.len()
        ),
    );
    Ok(if all_pass { Outcome::Pass } else { Outcome::Fail })
}

// ---------------------------------------------------------------------------
// fig1
// ---------------------------------------------------------------------------

/// Emit the two-curve drift comparison: the tanh-drift field alpha*tanh(x)
/// against the drift of BM(-1) conditioned to hit a = 5 with the tanh
/// first-passage law, on x in [-5, 5).
#[derive(Args, Debug)]
pub struct Fig1Args {
    /// JSON run file (out/format)
    #[arg(long, value_name = "FILE")]
    pub run: Option<PathBuf>,

    /// Output path; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// csv | json
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Serialize)]
struct Fig1Row {
    x: f64,
    tanh_drift: f64,
    conditioned_drift: f64,
}

pub fn run_fig1(args: &Fig1Args) -> CliResult<Outcome> {
    let file = load_run_file(args.run.as_ref())?;
    let format = build_format(&args.format, &file.format, Format::Csv)?;
    let out = args.out.clone().or_else(|| file.out.as_ref().map(PathBuf::from));

    let setup = BarrierSetup::new(5.0, 0.0, 0.0)?;
    let tanh_model = DriftModel::TanhDrift { alpha: 1.0, beta: 0.0 };
    let scheme = ConditioningScheme::FptOfTanh { gamma: 1.0, delta: 0.0 };
    let conditioned = DriftModel::Conditioned {
        source: Box::new(DriftModel::Bm { mu: -1.0 }),
        setup,
        scheme,
    };

    let mut runspec = RunSpec::new("fig1", format, out.as_ref());
    runspec.model = Some(ModelSpec::Bm { mu: -1.0 });
    runspec.scheme = Some(SchemeSpec::FptTanh { gamma: 1.0, delta: 0.0 });
    runspec.setup = Some(setup_spec(&setup));
    runspec.quantity = Some("drift".into());
    runspec.xs = Some("-5:4.99:1000".into());
    runspec.ts = Some("0".into());

    let mut csv_rows = Vec::with_capacity(1000);
    let mut json_rows = Vec::with_capacity(1000);
    for i in 0..1000 {
        let x = -5.0 + 0.01 * i as f64;
        let p = SpaceTimePoint::new(x, 0.0);
        let tanh_v = drift_value(&tanh_model, p)?;
        let cond_v = drift_value(&conditioned, p)?;
        csv_rows.push(vec![fmt_float(x), fmt_float(tanh_v), fmt_float(cond_v)]);
        json_rows.push(Fig1Row { x, tanh_drift: tanh_v, conditioned_drift: cond_v });
    }

    let content = match format {
        Format::Csv => csv_document(&runspec, &["x", "tanh_drift", "conditioned_drift"], &csv_rows),
        Format::Json => json_document(&runspec, "rows", &json_rows),
    };
    emit(out.as_deref(), &content)?;
    if let Some(path) = &out {
        status(out.as_ref(), &format!("fig1: wrote {} rows to {}", csv_rows.len(), path.display()));
    }
    Ok(Outcome::Pass)
}

// ---------------------------------------------------------------------------
// reciprocity
// ---------------------------------------------------------------------------

/// Check that mutually inverse conditionings carry reciprocal Q functions:
/// max |Q_forward * Q_backward - 1| over a 20x20 space-time grid.
#[derive(Args, Debug)]
pub struct ReciprocityArgs {
    /// JSON run file
    #[arg(long, value_name = "FILE")]
    pub run: Option<PathBuf>,

    /// BM drift of the bm<->taboo pair (default 0.3)
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,

    /// Taboo state of the bm<->taboo pair (default 2)
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,

    /// Barrier position (default 1)
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,

    /// Steepness of the tanh<->tanh pair (default 1)
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,

    /// Source offset of the tanh<->tanh pair (default 0.4)
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,

    /// Target offset of the tanh<->tanh pair (default -0.2)
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,

    /// Output path; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// csv | json
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Serialize)]
struct PairResult {
    pair: String,
    max_abs_dev: f64,
    /// Absent for pairs that are measured and reported without a pass bar.
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pass: Option<bool>,
}

const RECIPROCITY_THRESHOLD: f64 = 1e-12;

pub fn run_reciprocity(args: &ReciprocityArgs) -> CliResult<Outcome> {
    let file = load_run_file(args.run.as_ref())?;
    let format = build_format(&args.format, &file.format, Format::Json)?;
    let out = args.out.clone().or_else(|| file.out.as_ref().map(PathBuf::from));

    let a = args.a.or(file.a).unwrap_or(1.0);
    let mu = args.mu.or(file.mu).unwrap_or(0.3);
    let b = args.b.or(file.b).unwrap_or(2.0);
    let alpha = args.alpha.or(file.alpha).unwrap_or(1.0);
    let beta = args.beta.or(file.beta).unwrap_or(0.4);
    let delta = args.delta.or(file.delta).unwrap_or(-0.2);
    let setup = BarrierSetup::new(a, 0.0, 0.0)?;

    // Strictly below the barrier in space, strictly past the start in time.
    let mut grid = Vec::with_capacity(400);
    let (x_lo, x_hi) = (setup.x0 - 1.5, a - 0.1);
    for i in 0..20 {
        let x = x_lo + (x_hi - x_lo) * i as f64 / 19.0;
        for j in 0..20 {
            let t = setup.t0 + 0.05 + 3.0 * j as f64 / 19.0;
            grid.push(SpaceTimePoint::new(x, t));
        }
    }

    let bm = DriftModel::Bm { mu };
    let taboo = DriftModel::Taboo { b };
    let fwd = QFunction::for_scheme(&bm, &setup, &ConditioningScheme::FptOfTaboo { b_target: b })?;
    let bwd = QFunction::for_scheme(&taboo, &setup, &ConditioningScheme::FptOfBm { mu })?;
    let pair_dev = reciprocity_check(&fwd, &bwd, &grid)?;

    let tanh_src = DriftModel::TanhDrift { alpha, beta };
    let tanh_tgt = DriftModel::TanhDrift { alpha, beta: delta };
    let cyc_f = QFunction::for_scheme(
        &tanh_src,
        &setup,
        &ConditioningScheme::FptOfTanh { gamma: alpha, delta },
    )?;
    let cyc_b = QFunction::for_scheme(
        &tanh_tgt,
        &setup,
        &ConditioningScheme::FptOfTanh { gamma: alpha, delta: beta },
    )?;
    let cycle_dev = reciprocity_check(&cyc_f, &cyc_b, &grid)?;

    // The bm<->taboo pair carries the hard bar; the tanh<->tanh cycle is
    // measured and reported only.
    let pairs = vec![
        PairResult {
            pair: format!("bm(mu={mu}) <-> taboo(b={b})"),
            max_abs_dev: pair_dev,
            threshold: Some(RECIPROCITY_THRESHOLD),
            pass: Some(pair_dev <= RECIPROCITY_THRESHOLD),
        },
        PairResult {
            pair: format!("tanh(alpha={alpha},beta={beta}) <-> tanh(alpha={alpha},beta={delta})"),
            max_abs_dev: cycle_dev,
            threshold: None,
            pass: None,
        },
    ];
    let all_pass = pairs.iter().all(|p| p.pass.unwrap_or(true));

    let mut runspec = RunSpec::new("reciprocity", format, out.as_ref());
    runspec.setup = Some(setup_spec(&setup));
    let content = match format {
        Format::Json => json_document(&runspec, "pairs", &pairs),
        Format::Csv => {
            let rows: Vec<Vec<String>> = pairs
                .iter()
                .map(|p| {
                    vec![
                        csv_quote(&p.pair),
                        fmt_float(p.max_abs_dev),
                        p.threshold.map(fmt_float).unwrap_or_default(),
                        p.pass.map(|b| b.to_string()).unwrap_or_default(),
                    ]
                })
                .collect();
            csv_document(&runspec, &["pair", "max_abs_dev", "threshold", "pass"], &rows)
        }
    };
    emit(out.as_deref(), &content)?;

    for p in &pairs {
        let verdict = match p.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "(reported, no pass bar)",
        };
        status(
            out.as_ref(),
            &format!("reciprocity {}: max |Qf*Qb - 1| = {:.3e} {verdict}", p.pair, p.max_abs_dev),
        );
    }
    Ok(if all_pass { Outcome::Pass } else { Outcome::Fail })
}
