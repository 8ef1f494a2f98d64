//! Normal-distribution helpers that stay finite far into the tails.
//!
//! Everything that needs a ratio of a Gaussian density to a tail probability
//! goes through the scaled complementary error function
//! `erfcx(x) = exp(x²)·erfc(x)`, so quantities like the truncated-normal mean
//! are accurate for standardized offsets of several tens.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Scaled complementary error function `exp(x²)·erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        // erfcx(-x) = 2 exp(x²) - erfcx(x)
        if x < -26.0 {
            return f64::INFINITY;
        }
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 5.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    if x.is_infinite() {
        return 0.0;
    }
    // Laplace continued fraction, evaluated with the modified Lentz method:
    // erfcx(x) = (1/√π) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    FRAC_1_SQRT_PI / f
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Mills ratio `Q(x)/φ(x)` for the upper tail.
pub fn mills_ratio(x: f64) -> f64 {
    (PI / 2.0).sqrt() * erfcx(x * FRAC_1_SQRT_2)
}

/// Mean and variance of a standard normal truncated to `[a, b)`.
///
/// Either endpoint may be infinite. Requires `a < b`.
pub fn truncated_normal_moments(a: f64, b: f64) -> (f64, f64) {
    debug_assert!(a < b, "empty interval [{a}, {b})");
    if a >= 0.0 {
        upper_tail_moments(a, b)
    } else if b <= 0.0 {
        let (m, v) = upper_tail_moments(-b, -a);
        (-m, v)
    } else {
        // Interval straddles zero, so its probability is not tiny relative to
        // the densities at the endpoints.
        let z = 0.5 * (libm::erf(b * FRAC_1_SQRT_2) - libm::erf(a * FRAC_1_SQRT_2));
        let (pa, apa) = if a.is_finite() {
            let p = norm_pdf(a);
            (p, a * p)
        } else {
            (0.0, 0.0)
        };
        let (pb, bpb) = if b.is_finite() {
            let p = norm_pdf(b);
            (p, b * p)
        } else {
            (0.0, 0.0)
        };
        let mean = (pa - pb) / z;
        let second = 1.0 + (apa - bpb) / z;
        (mean, (second - mean * mean).max(0.0))
    }
}

// 0 <= a < b <= +inf. Every term is scaled by φ(a) so that nothing underflows.
fn upper_tail_moments(a: f64, b: f64) -> (f64, f64) {
    let ra = mills_ratio(a);
    let (d, bd, rb) = if b.is_finite() {
        let d = (0.5 * (a - b) * (a + b)).exp();
        (d, b * d, mills_ratio(b))
    } else {
        (0.0, 0.0, 0.0)
    };
    let denom = ra - d * rb;
    let mean = (1.0 - d) / denom;
    let second = 1.0 + (a - bd) / denom;
    (mean, (second - mean * mean).max(0.0))
}
