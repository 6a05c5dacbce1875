//! Adaptive Gauss-Kronrod quadrature, plus the variable substitutions used
//! for the semi-infinite integrals that appear in first-passage analytics.
//!
//! The basic rule is the classic 15-point Kronrod extension of 7-point Gauss
//! (QUADPACK's QK15). Adaptivity is worst-interval bisection driven by the
//! usual rescaled |K15 - G7| error estimate.
//!
//! First-passage densities behave like `(T - t)^(-3/2) exp(-L^2 / (2(T-t)))`
//! near the start and may decay only algebraically (`T^(-3/2)`) at infinity.
//! [`fpt_tail`] therefore integrates in the variable `v = 1/sqrt(T - t)`:
//! `dT (T-t)^(-3/2) = -2 dv` absorbs the singular weight exactly, the far
//! tail `T -> inf` is pulled to `v -> 0` where the transformed integrand is
//! bounded, and the start `T -> t` is pushed to large `v` where the Gaussian
//! factor `exp(-L^2 v^2 / 2)` cuts it off.

/// 15-point Kronrod abscissae (positive half, descending), QUADPACK DQK15.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

/// 7-point Gauss weights (for the even-index Kronrod abscissae).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_6,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 4096;

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
}

/// One Kronrod evaluation over [a, b]: returns (integral, error estimate).
fn qk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);

    let mut result_gauss = WG[3] * f_center;
    let mut result_kronrod = WGK[7] * f_center;
    let mut resabs = result_kronrod.abs();

    let mut fv = [0.0f64; 15];
    fv[7] = f_center;
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        let sum = f1 + f2;
        result_kronrod += WGK[j] * sum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            result_gauss += WG[j / 2] * sum;
        }
    }

    let mean = 0.5 * result_kronrod;
    let mut resasc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }

    let result = result_kronrod * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let mut err = ((result_kronrod - result_gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let round_off = 50.0 * f64::EPSILON * resabs;
    if round_off > f64::MIN_POSITIVE && err < round_off {
        err = round_off;
    }
    (result, err)
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Adaptive integration of `f` over the finite interval [a, b].
///
/// Stops once the summed error estimate drops below
/// `max(abs_tol, rel_tol * |integral|)`; `converged` is false if the segment
/// budget runs out first.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> QuadResult {
    if a == b {
        return QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            converged: true,
        };
    }
    let (value, error) = qk15(&f, a, b);
    let mut segments = vec![Segment {
        a,
        b,
        value,
        error,
    }];

    loop {
        let total_value: f64 = segments.iter().map(|s| s.value).sum();
        let total_error: f64 = segments.iter().map(|s| s.error).sum();
        let tolerance = abs_tol.max(rel_tol * total_value.abs());
        if total_error <= tolerance {
            return QuadResult {
                value: total_value,
                error_estimate: total_error,
                converged: true,
            };
        }
        if segments.len() >= MAX_SEGMENTS {
            return QuadResult {
                value: total_value,
                error_estimate: total_error,
                converged: false,
            };
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|(_, s), (_, t)| s.error.total_cmp(&t.error))
            .map(|(i, _)| i)
            .expect("non-empty segment list");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        let (v1, e1) = qk15(&f, seg.a, mid);
        let (v2, e2) = qk15(&f, mid, seg.b);
        segments.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        segments.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }
}

/// Integral of `f` over the left half-line (-inf, b].
///
/// Uses `x = b - (1-u)/u`, `u in (0, 1]`; the integrand must decay at -inf
/// (all uses are Gaussian-tailed densities).
pub fn left_tail<F: Fn(f64) -> f64>(f: F, b: f64, rel_tol: f64, abs_tol: f64) -> QuadResult {
    let transformed = move |u: f64| {
        let x = b - (1.0 - u) / u;
        let w = f(x);
        if w == 0.0 {
            0.0
        } else {
            w / (u * u)
        }
    };
    adaptive(transformed, 0.0, 1.0, rel_tol, abs_tol)
}

/// Integral over (t_lower, inf) of a first-passage-like density `g(T)`.
///
/// `gap` is the spatial distance to the barrier from the density's start
/// point; it sets where the short-time Gaussian cutoff `exp(-gap^2 v^2 / 2)`
/// makes the transformed integrand vanish identically.
pub fn fpt_tail<F: Fn(f64) -> f64>(
    g: F,
    t_lower: f64,
    gap: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> QuadResult {
    // exp(-gap^2 v^2 / 2) underflows past gap * v ~ sqrt(2 * 760)
    let v_max = (1520.0f64.sqrt() / gap.max(1e-8)).max(2.0);
    let transformed = move |v: f64| {
        let s = 1.0 / (v * v);
        let w = g(t_lower + s);
        if w == 0.0 {
            0.0
        } else {
            w * 2.0 / (v * v * v)
        }
    };
    adaptive(transformed, 0.0, v_max, rel_tol, abs_tol)
}

/// Integral over the finite window (t_lower, t_upper] of a first-passage-like
/// density `g(T)`, in the same `v = 1/sqrt(T - t_lower)` variable as
/// [`fpt_tail`] so the `(T - t_lower)^(-3/2)` start behaviour is absorbed.
pub fn fpt_window<F: Fn(f64) -> f64>(
    g: F,
    t_lower: f64,
    t_upper: f64,
    gap: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> QuadResult {
    if !(t_upper > t_lower) {
        return QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            converged: true,
        };
    }
    let v_min = 1.0 / (t_upper - t_lower).sqrt();
    let v_max = (1520.0f64.sqrt() / gap.max(1e-8)).max(2.0 * v_min);
    let transformed = move |v: f64| {
        let s = 1.0 / (v * v);
        let w = g(t_lower + s);
        if w == 0.0 {
            0.0
        } else {
            w * 2.0 / (v * v * v)
        }
    };
    adaptive(transformed, v_min, v_max, rel_tol, abs_tol)
}
