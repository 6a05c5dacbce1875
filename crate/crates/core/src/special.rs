//! Scalar special functions with the overflow/underflow conventions used
//! throughout the crate.
//!
//! All hyperbolic quantities that can overflow are provided in log form
//! (`log_cosh`, `log_sinh`, `log_expm1`), and products of a large exponential
//! with a small complementary error function go through the scaled function
//! `erfcx` so that quantities like `exp(c) * erfc(z)` stay finite whenever the
//! product itself is representable.

/// sqrt(2 * pi)
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Beyond this argument magnitude `erf`/`erfc` are replaced by their
/// asymptotic limits (`erfc(26) ~ 1e-295` is already at the edge of the
/// normal f64 range).
const ERF_ASYMPTOTIC_CUTOFF: f64 = 26.0;

/// Error function, clamped to its asymptotic limits for |x| > 26.
pub fn erf(x: f64) -> f64 {
    if x > ERF_ASYMPTOTIC_CUTOFF {
        1.0
    } else if x < -ERF_ASYMPTOTIC_CUTOFF {
        -1.0
    } else {
        libm::erf(x)
    }
}

/// Complementary error function, clamped to its asymptotic limits (0 and 2)
/// for |x| > 26.
pub fn erfc(x: f64) -> f64 {
    if x > ERF_ASYMPTOTIC_CUTOFF {
        0.0
    } else if x < -ERF_ASYMPTOTIC_CUTOFF {
        2.0
    } else {
        libm::erfc(x)
    }
}

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
///
/// For moderate arguments the direct product is exact enough; for x >= 25 the
/// product would mix a huge and a tiny factor, so the standard asymptotic
/// series `1/(x sqrt(pi)) * sum_k (-1)^k (2k-1)!!/(2x^2)^k` is used instead
/// (truncation error < 1e-16 relative there).
pub fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        libm::erfc(x) * (x * x).exp()
    } else {
        let inv2x2 = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=8u32 {
            term *= -((2 * k - 1) as f64) * inv2x2;
            sum += term;
        }
        sum / (x * std::f64::consts::PI.sqrt())
    }
}

/// `exp(c) * erfc(z)` without intermediate overflow/underflow.
///
/// The rearrangement `erfcx(z) * exp(c - z^2)` keeps the product finite for
/// any `z > 0` as long as the result itself is representable; for `z <= 0`
/// the plain product is already safe because `erfc(z) in [1, 2]`.
pub fn exp_erfc(c: f64, z: f64) -> f64 {
    if z > 0.0 {
        erfcx(z) * (c - z * z).exp()
    } else {
        c.exp() * erfc(z)
    }
}

/// log(cosh(z)), overflow-free: |z| + log((1 + exp(-2|z|)) / 2).
pub fn log_cosh(z: f64) -> f64 {
    let az = z.abs();
    az + (-2.0 * az).exp().ln_1p() - std::f64::consts::LN_2
}

/// log(sinh(z)) for z > 0: z + log((1 - exp(-2z)) / 2).
///
/// Returns NaN for z <= 0 (callers only take logs of positive arguments).
pub fn log_sinh(z: f64) -> f64 {
    if z <= 0.0 {
        return f64::NAN;
    }
    z + (-(-2.0 * z).exp_m1()).ln() - std::f64::consts::LN_2
}

/// log(exp(z) - 1) for z > 0, accurate both for tiny and huge z.
pub fn log_expm1(z: f64) -> f64 {
    if z <= 0.0 {
        return f64::NAN;
    }
    if z > 0.5 {
        // exp(z) - 1 = exp(z) * (1 - exp(-z))
        z + (-(-z).exp_m1()).ln()
    } else {
        z.exp_m1().ln()
    }
}

/// log(1 - exp(z)) for z < 0, accurate both as z -> 0- (where 1 - e^z
/// cancels to -z) and for very negative z (where e^z underflows).
pub fn log1m_exp(z: f64) -> f64 {
    if z >= 0.0 {
        return f64::NAN;
    }
    if z > -std::f64::consts::LN_2 {
        (-z.exp_m1()).ln()
    } else {
        (-z.exp()).ln_1p()
    }
}

/// log(exp(a) + exp(b)) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// log(exp(a) - exp(b)) for a > b.
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    debug_assert!(a > b);
    a + (-(b - a).exp_m1()).ln()
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}
