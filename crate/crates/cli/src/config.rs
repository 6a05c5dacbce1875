//! Configuration plumbing: the shared flag set, the JSON run file, the merge
//! rule (explicit flags override file values, defaults fill the rest), and
//! the serializable run record embedded in every artifact.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use serde::{Deserialize, Serialize};

use fptlab::analytics::{BarrierSetup, DriftModel};
use fptlab::conditioning::{
    ConditioningScheme, DensityFn, FiniteHorizonScheme, GammaTarget,
};
use fptlab::sim::SimConfig;

/// CLI-level failure: bad configuration, library rejection, or I/O trouble.
/// All of these map to exit code 2; exit code 1 is reserved for verifications
/// that ran and failed.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(fptlab::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<fptlab::Error> for CliError {
    fn from(e: fptlab::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Flags shared by the model-driven subcommands. Every flag is optional so a
/// JSON run file (`--run`) can supply any value; an explicit flag wins over
/// the file, and built-in defaults fill whatever remains.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON run file supplying defaults for any flag not given explicitly
    #[arg(long, value_name = "FILE")]
    pub run: Option<PathBuf>,

    /// Process family: bm | tanh | taboo
    #[arg(long)]
    pub model: Option<String>,

    /// tanh-drift steepness alpha > 0
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,

    /// tanh-drift offset beta (default 0)
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,

    /// BM drift mu; with --scheme fpt-bm, the target drift
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,

    /// taboo state b > a; with --scheme fpt-taboo, the target taboo state
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,

    /// Conditioning: dirac | forever | fpt-bm | fpt-tanh | fpt-taboo | finite-horizon
    #[arg(long)]
    pub scheme: Option<String>,

    /// fpt-tanh target steepness gamma > 0
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,

    /// fpt-tanh target offset delta (default 0)
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,

    /// Absorbing barrier position (default 1)
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,

    /// Start position x0 < a (default 0)
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,

    /// Start time (default 0)
    #[arg(long, allow_negative_numbers = true)]
    pub t0: Option<f64>,

    /// Evaluation time for t-dependent quantities (default 1)
    #[arg(long = "T", allow_negative_numbers = true)]
    pub big_t: Option<f64>,

    /// Prescribed absorption time for --scheme dirac
    #[arg(long = "Tstar", allow_negative_numbers = true)]
    pub t_star: Option<f64>,

    /// Euler-Maruyama step size (default 1e-3)
    #[arg(long)]
    pub dt: Option<f64>,

    /// Simulation horizon (default 10)
    #[arg(long)]
    pub horizon: Option<f64>,

    /// Ensemble size (default 10000)
    #[arg(long)]
    pub paths: Option<usize>,

    /// RNG seed (default 0)
    #[arg(long)]
    pub seed: Option<u64>,

    /// Disable the within-step Brownian-bridge crossing test
    #[arg(long)]
    pub no_bridge: bool,

    /// Output path (used as a stem when a command writes several files);
    /// stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Artifact format: csv | json
    #[arg(long)]
    pub format: Option<String>,
}

/// A tabulated density: piecewise-linear between knots, zero outside them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabulatedDensity {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn interpolant(&self) -> CliResult<DensityFn> {
        let n = self.knots.len();
        if n < 2 || self.values.len() != n {
            return Err(config_err(format!(
                "a tabulated density needs matching knots/values with at least two entries, \
                 got {} knots and {} values",
                n,
                self.values.len()
            )));
        }
        if !self.knots.iter().chain(self.values.iter()).all(|v| v.is_finite()) {
            return Err(config_err("tabulated densities must be finite"));
        }
        if !self.knots.windows(2).all(|w| w[0] < w[1]) {
            return Err(config_err("tabulated density knots must be strictly increasing"));
        }
        if self.values.iter().any(|&v| v < 0.0) {
            return Err(config_err("tabulated density values must be nonnegative"));
        }
        let knots = self.knots.clone();
        let values = self.values.clone();
        Ok(Arc::new(move |x: f64| {
            if x < knots[0] || x > knots[n - 1] {
                return 0.0;
            }
            let j = knots.partition_point(|&k| k <= x).min(n - 1).max(1);
            let (k0, k1) = (knots[j - 1], knots[j]);
            let w = (x - k0) / (k1 - k0);
            values[j - 1] * (1.0 - w) + values[j] * w
        }))
    }
}

/// The finite-horizon target as it appears in a run file: the horizon, a
/// gamma* that is either tabulated or a point mass, and an optional
/// tabulated endpoint density P*.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteHorizonFile {
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_star: Option<TabulatedDensity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_star: Option<TabulatedDensity>,
}

/// JSON run file: the same vocabulary as the flags, plus structured fields
/// (the finite-horizon tables) that cannot be expressed on a command line.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub model: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub b: Option<f64>,
    pub scheme: Option<String>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub a: Option<f64>,
    pub x0: Option<f64>,
    pub t0: Option<f64>,
    #[serde(rename = "T")]
    pub big_t: Option<f64>,
    #[serde(rename = "Tstar")]
    pub t_star: Option<f64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub bridge_correction: Option<bool>,
    pub out: Option<String>,
    pub format: Option<String>,
    pub quantity: Option<String>,
    pub xs: Option<String>,
    pub ts: Option<String>,
    pub checkpoints: Option<String>,
    pub finite_horizon: Option<FiniteHorizonFile>,
}

pub fn load_run_file(path: Option<&PathBuf>) -> CliResult<RunFile> {
    let Some(path) = path else {
        return Ok(RunFile::default());
    };
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| config_err(format!("failed to parse run file {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Serializable run record (embedded in every artifact)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    Bm { mu: f64 },
    Tanh { alpha: f64, beta: f64 },
    Taboo { b: f64 },
}

impl ModelSpec {
    pub fn of(model: &DriftModel) -> ModelSpec {
        match model {
            DriftModel::Bm { mu } => ModelSpec::Bm { mu: *mu },
            DriftModel::TanhDrift { alpha, beta } => ModelSpec::Tanh { alpha: *alpha, beta: *beta },
            DriftModel::Taboo { b } => ModelSpec::Taboo { b: *b },
            DriftModel::Conditioned { source, .. } => ModelSpec::of(source),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchemeSpec {
    Dirac {
        t_star: f64,
    },
    Forever,
    FptBm {
        mu: f64,
    },
    FptTanh {
        gamma: f64,
        delta: f64,
    },
    FptTaboo {
        b_target: f64,
    },
    FiniteHorizon {
        horizon: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        dirac: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        gamma_star: Option<TabulatedDensity>,
        #[serde(skip_serializing_if = "Option::is_none")]
        p_star: Option<TabulatedDensity>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct SetupSpec {
    pub a: f64,
    pub x0: f64,
    pub t0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimSpec {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub bridge_correction: bool,
}

/// Everything needed to reproduce an invocation, embedded verbatim in each
/// artifact the command writes.
#[derive(Debug, Clone, Serialize)]
pub struct RunSpec {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setup: Option<SetupSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantity: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xs: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ts: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    pub format: String,
}

impl RunSpec {
    pub fn new(command: &str, format: Format, out: Option<&PathBuf>) -> RunSpec {
        RunSpec {
            command: command.to_string(),
            model: None,
            scheme: None,
            setup: None,
            sim: None,
            quantity: None,
            xs: None,
            ts: None,
            checkpoints: None,
            output_path: out.map(|p| p.display().to_string()),
            format: format.name().to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// Merged builders
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn name(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub fn build_format(
    args: &Option<String>,
    file: &Option<String>,
    default: Format,
) -> CliResult<Format> {
    match args.as_deref().or(file.as_deref()) {
        None => Ok(default),
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        Some(other) => Err(config_err(format!(
            "unknown format '{other}' (expected csv or json)"
        ))),
    }
}

pub fn build_out(args: &CommonArgs, file: &RunFile) -> Option<PathBuf> {
    args.out
        .clone()
        .or_else(|| file.out.as_ref().map(PathBuf::from))
}

pub fn build_setup(args: &CommonArgs, file: &RunFile) -> CliResult<BarrierSetup> {
    let a = args.a.or(file.a).unwrap_or(1.0);
    let x0 = args.x0.or(file.x0).unwrap_or(0.0);
    let t0 = args.t0.or(file.t0).unwrap_or(0.0);
    Ok(BarrierSetup::new(a, x0, t0)?)
}

pub fn build_sim(args: &CommonArgs, file: &RunFile) -> CliResult<(SimConfig, SimSpec)> {
    let dt = args.dt.or(file.dt).unwrap_or(1e-3);
    let horizon = args.horizon.or(file.horizon).unwrap_or(10.0);
    let paths = args.paths.or(file.paths).unwrap_or(10_000);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let bridge = if args.no_bridge {
        false
    } else {
        file.bridge_correction.unwrap_or(true)
    };
    let config = SimConfig::new(dt, horizon, paths, seed)?.with_bridge_correction(bridge);
    let spec = SimSpec {
        dt,
        horizon,
        paths,
        seed,
        bridge_correction: bridge,
    };
    Ok((config, spec))
}

/// The base-family model named by `--model` and its parameter flags.
pub fn build_model(args: &CommonArgs, file: &RunFile) -> CliResult<(DriftModel, ModelSpec)> {
    let family = args
        .model
        .as_deref()
        .or(file.model.as_deref())
        .ok_or_else(|| config_err("missing --model (bm | tanh | taboo)"))?;
    let model = match family {
        "bm" => {
            let mu = args
                .mu
                .or(file.mu)
                .ok_or_else(|| config_err("--model bm needs --mu"))?;
            DriftModel::Bm { mu }
        }
        "tanh" => {
            let alpha = args
                .alpha
                .or(file.alpha)
                .ok_or_else(|| config_err("--model tanh needs --alpha"))?;
            let beta = args.beta.or(file.beta).unwrap_or(0.0);
            DriftModel::TanhDrift { alpha, beta }
        }
        "taboo" => {
            let b = args
                .b
                .or(file.b)
                .ok_or_else(|| config_err("--model taboo needs --b"))?;
            DriftModel::Taboo { b }
        }
        other => {
            return Err(config_err(format!(
                "unknown model '{other}' (expected bm, tanh or taboo)"
            )))
        }
    };
    model.validate()?;
    let spec = ModelSpec::of(&model);
    Ok((model, spec))
}

/// The conditioning scheme named by `--scheme`, if any. The finite-horizon
/// scheme can only come from a run file, which is the only place its target
/// tables can be written down.
pub fn build_scheme(
    args: &CommonArgs,
    file: &RunFile,
    barrier: f64,
) -> CliResult<Option<(ConditioningScheme, SchemeSpec)>> {
    let Some(kind) = args.scheme.as_deref().or(file.scheme.as_deref()) else {
        return Ok(None);
    };
    let built = match kind {
        "dirac" => {
            let t_star = args
                .t_star
                .or(file.t_star)
                .ok_or_else(|| config_err("--scheme dirac needs --Tstar"))?;
            (
                ConditioningScheme::DiracTime { t_star },
                SchemeSpec::Dirac { t_star },
            )
        }
        "forever" => (ConditioningScheme::ForeverSurvival, SchemeSpec::Forever),
        "fpt-bm" => {
            let mu = args
                .mu
                .or(file.mu)
                .ok_or_else(|| config_err("--scheme fpt-bm needs --mu"))?;
            (ConditioningScheme::FptOfBm { mu }, SchemeSpec::FptBm { mu })
        }
        "fpt-tanh" => {
            let gamma = args
                .gamma
                .or(file.gamma)
                .ok_or_else(|| config_err("--scheme fpt-tanh needs --gamma"))?;
            let delta = args.delta.or(file.delta).unwrap_or(0.0);
            (
                ConditioningScheme::FptOfTanh { gamma, delta },
                SchemeSpec::FptTanh { gamma, delta },
            )
        }
        "fpt-taboo" => {
            let b_target = args
                .b
                .or(file.b)
                .ok_or_else(|| config_err("--scheme fpt-taboo needs --b"))?;
            (
                ConditioningScheme::FptOfTaboo { b_target },
                SchemeSpec::FptTaboo { b_target },
            )
        }
        "finite-horizon" => {
            let fh = file.finite_horizon.as_ref().ok_or_else(|| {
                config_err(
                    "--scheme finite-horizon needs a run file with a finite_horizon \
                     section (horizon plus a dirac time or tabulated gamma_star, and \
                     optionally a tabulated p_star)",
                )
            })?;
            let gamma_star = match (&fh.dirac, &fh.gamma_star) {
                (Some(t_star), None) => GammaTarget::Dirac { t_star: *t_star },
                (None, Some(tab)) => GammaTarget::Density(tab.interpolant()?),
                _ => {
                    return Err(config_err(
                        "finite_horizon needs exactly one of 'dirac' or 'gamma_star'",
                    ))
                }
            };
            let p_star = match &fh.p_star {
                None => None,
                Some(tab) => Some(tab.interpolant()?),
            };
            let scheme = FiniteHorizonScheme::new(fh.horizon, barrier, gamma_star, p_star)?;
            (
                ConditioningScheme::FiniteHorizon(scheme),
                SchemeSpec::FiniteHorizon {
                    horizon: fh.horizon,
                    dirac: fh.dirac,
                    gamma_star: fh.gamma_star.clone(),
                    p_star: fh.p_star.clone(),
                },
            )
        }
        other => {
            return Err(config_err(format!(
                "unknown scheme '{other}' (expected dirac, forever, fpt-bm, fpt-tanh, \
                 fpt-taboo or finite-horizon)"
            )))
        }
    };
    built.0.validate()?;
    Ok(Some(built))
}

// ---------------------------------------------------------------------------
// Grid specs
// ---------------------------------------------------------------------------

/// Parses a grid spec: a single number, a comma list `v1,v2,...`, or an
/// inclusive range `lo:hi:n`.
pub fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let bad = |s: &str| config_err(format!("cannot parse '{s}' as a number"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(config_err(format!(
                "range spec must be lo:hi:n, got '{spec}'"
            )));
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad(parts[0]))?;
        let hi: f64 = parts[1].parse().map_err(|_| bad(parts[1]))?;
        let n: usize = parts[2]
            .parse()
            .map_err(|_| config_err(format!("range count must be an integer, got '{}'", parts[2])))?;
        if n == 0 {
            return Err(config_err("range count must be at least 1"));
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        let step = (hi - lo) / (n as f64 - 1.0);
        Ok((0..n).map(|i| lo + step * i as f64).collect())
    } else if spec.contains(',') {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(s)))
            .collect()
    } else {
        Ok(vec![spec.trim().parse::<f64>().map_err(|_| bad(spec))?])
    }
}
