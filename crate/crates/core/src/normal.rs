//! Standard normal distribution helpers.
//!
//! Tails are computed through `erfc` so that small probabilities far in the
//! tail keep full relative precision.

use std::f64::consts::SQRT_2;

use libm::erfc;

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Pr(|Z| > h) for h >= 0.
pub fn two_sided_tail(h: f64) -> f64 {
    if h <= 0.0 {
        return 1.0;
    }
    erfc(h / SQRT_2)
}

/// Pr(a <= |Z| <= b) for 0 <= a <= b.
pub fn abs_interval_mass(a: f64, b: f64) -> f64 {
    (two_sided_tail(a) - two_sided_tail(b)).max(0.0)
}

/// Pr(lo <= Z <= hi) for a signed standard normal.
pub fn signed_interval_mass(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    // Work in the upper tail on whichever side keeps precision.
    if lo >= 0.0 {
        0.5 * (erfc(lo / SQRT_2) - erfc(hi / SQRT_2))
    } else if hi <= 0.0 {
        0.5 * (erfc(-hi / SQRT_2) - erfc(-lo / SQRT_2))
    } else {
        (cdf(hi) - cdf(lo)).max(0.0)
    }
}
