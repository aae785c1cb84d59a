//! Small numeric helpers that statrs does not provide directly.

use statrs::function::gamma::ln_gamma;

/// Standard normal cumulative distribution function.
///
/// Built on libm's erfc (statrs's own erf is only ~1e-9 accurate).
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    // Tails flatten to 0/1 well inside f64 resolution; skipping erfc there
    // keeps the hot evaluation loops cheap.
    if z < -8.5 {
        return 0.0;
    }
    if z > 8.5 {
        return 1.0;
    }
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Trigamma function, the derivative of `digamma`.
///
/// Recurrence shifts the argument above 20, where the Bernoulli asymptotic
/// series is accurate to ~1e-15 relative.
pub fn trigamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        // Only positive arguments arise here (shape/dispersion parameters).
        return f64::INFINITY;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/(2x^2) + sum B_{2n} / x^{2n+1}
    let series = inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 - inv2 / 30.0)));
    acc + series
}

/// Natural log of the binomial coefficient C(n, k) for real n > k - 1.
#[inline]
pub fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// ln(1 + exp(x)) without overflow; ln sigmoid(x) = -softplus(-x).
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Largest f64 strictly below `x` (next_down without requiring a recent std).
pub fn next_down(x: f64) -> f64 {
    if x.is_nan() || x == f64::NEG_INFINITY {
        return x;
    }
    if x == 0.0 {
        return -f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits - 1)
    } else {
        f64::from_bits(bits + 1)
    }
}
