//! Per-observation conditional distributions: cdf, density, sampler, mean,
//! characteristic function, and batched evaluation along sorted grids.
//!
//! Discrete families evaluate probability mass by a multiplicative walk over a
//! support window wide enough that the truncated tail mass is below 1e-18 of
//! the peak; this keeps batched cdf evaluation linear in the window instead of
//! one special-function call per (observation, grid point) pair.

use crate::error::{Error, Result};
use crate::special::{ln_choose, norm_cdf, norm_pdf, softplus};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial as BinomialDist, Distribution, Gamma as GammaDist, Normal, Poisson};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use super::{FamilyKind, FittedModel, Link};

/// Conditional law of one response given its covariate row.
#[derive(Debug, Clone, Copy)]
pub(crate) enum CondDist {
    Gaussian { mu: f64, sigma: f64 },
    /// `mu`, `sigma` on the log-response scale.
    LogGaussian { mu: f64, sigma: f64 },
    Gamma { shape: f64, mean: f64 },
    Poisson { lambda: f64 },
    /// Mass C(y+r-1, y) p^r (1-p)^y with mean r(1-p)/p.
    NegBin { r: f64, p: f64 },
    Binomial { trials: u64, p: f64 },
}

/// Tail threshold for discrete support windows, on the log scale relative to
/// the window's peak mass: exp(-43) ≈ 2e-19.
const LN_TAIL: f64 = -43.0;

impl CondDist {
    pub(crate) fn from_model(
        model: &FittedModel,
        eta: f64,
        trials: Option<u64>,
    ) -> Result<Self> {
        let kind = model.spec.kind;
        let mean = match model.spec.link {
            Link::Identity => eta,
            Link::Log => eta.exp(),
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
        };
        if !mean.is_finite() {
            return Err(Error::NumericRange(format!(
                "linear predictor {eta} overflows the {} mean",
                kind.name()
            )));
        }
        let aux = model.aux().unwrap_or(f64::NAN);
        Ok(match kind {
            FamilyKind::GaussianLinear => CondDist::Gaussian {
                mu: mean,
                sigma: aux,
            },
            FamilyKind::LogGaussianLinear => CondDist::LogGaussian {
                mu: mean,
                sigma: aux,
            },
            FamilyKind::GammaGlm => {
                if mean <= 0.0 {
                    return Err(Error::NumericRange(format!(
                        "gamma mean {mean} is not positive"
                    )));
                }
                CondDist::Gamma {
                    shape: aux,
                    mean,
                }
            }
            FamilyKind::PoissonGlm => CondDist::Poisson { lambda: mean },
            FamilyKind::NegBinGlm => {
                let r = aux;
                CondDist::NegBin {
                    r,
                    p: r / (r + mean),
                }
            }
            FamilyKind::BinomialGlm => {
                let trials = trials.ok_or_else(|| {
                    Error::InvalidSpec(
                        "binomial_glm needs a per-row trial count; use the _with_trials variant"
                            .into(),
                    )
                })?;
                CondDist::Binomial { trials, p: mean }
            }
        })
    }

    pub(crate) fn is_discrete(&self) -> bool {
        matches!(
            self,
            CondDist::Poisson { .. } | CondDist::NegBin { .. } | CondDist::Binomial { .. }
        )
    }

    pub(crate) fn mean(&self) -> f64 {
        match *self {
            CondDist::Gaussian { mu, .. } => mu,
            CondDist::LogGaussian { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            CondDist::Gamma { mean, .. } => mean,
            CondDist::Poisson { lambda } => lambda,
            CondDist::NegBin { r, p } => r * (1.0 - p) / p,
            CondDist::Binomial { trials, p } => trials as f64 * p,
        }
    }

    /// F(t), right-continuous, with F(-∞) = 0 and F(+∞) = 1.
    pub(crate) fn cdf(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        if t == f64::INFINITY {
            return 1.0;
        }
        if t == f64::NEG_INFINITY {
            return 0.0;
        }
        match *self {
            CondDist::Gaussian { mu, sigma } => norm_cdf((t - mu) / sigma),
            CondDist::LogGaussian { mu, sigma } => {
                if t <= 0.0 {
                    0.0
                } else {
                    norm_cdf((t.ln() - mu) / sigma)
                }
            }
            CondDist::Gamma { shape, mean } => {
                if t <= 0.0 {
                    0.0
                } else {
                    gamma_lr(shape, t * shape / mean)
                }
            }
            CondDist::Poisson { lambda } => {
                if t < 0.0 {
                    0.0
                } else {
                    // P(Y ≤ k) = Q(k+1, λ).
                    gamma_ur(t.floor() + 1.0, lambda)
                }
            }
            CondDist::NegBin { r, p } => {
                if t < 0.0 {
                    0.0
                } else {
                    // P(Y ≤ k) = I_p(r, k+1).
                    beta_reg(r, t.floor() + 1.0, p)
                }
            }
            CondDist::Binomial { trials, p } => {
                let n = trials as f64;
                if t < 0.0 {
                    0.0
                } else if t >= n {
                    1.0
                } else {
                    // P(Y ≤ k) = I_{1-p}(n-k, k+1).
                    let k = t.floor();
                    beta_reg(n - k, k + 1.0, 1.0 - p)
                }
            }
        }
    }

    /// Density for continuous families, probability mass for discrete ones;
    /// zero outside the support.
    pub(crate) fn pdf(&self, y: f64) -> f64 {
        match *self {
            CondDist::Gaussian { mu, sigma } => norm_pdf((y - mu) / sigma) / sigma,
            CondDist::LogGaussian { mu, sigma } => {
                if y <= 0.0 {
                    0.0
                } else {
                    norm_pdf((y.ln() - mu) / sigma) / (sigma * y)
                }
            }
            CondDist::Gamma { shape, mean } => {
                if y <= 0.0 {
                    0.0
                } else {
                    let rate = shape / mean;
                    ((shape - 1.0) * y.ln() - rate * y + shape * rate.ln() - ln_gamma(shape))
                        .exp()
                }
            }
            _ => {
                if y < 0.0 || y.fract() != 0.0 {
                    0.0
                } else {
                    self.ln_pmf(y).exp()
                }
            }
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let bad = |what: &str| Error::NumericRange(format!("cannot sample {what}"));
        Ok(match *self {
            CondDist::Gaussian { mu, sigma } => Normal::new(mu, sigma)
                .map_err(|_| bad("gaussian"))?
                .sample(rng),
            CondDist::LogGaussian { mu, sigma } => Normal::new(mu, sigma)
                .map_err(|_| bad("log-gaussian"))?
                .sample(rng)
                .exp(),
            CondDist::Gamma { shape, mean } => GammaDist::new(shape, mean / shape)
                .map_err(|_| bad("gamma"))?
                .sample(rng),
            CondDist::Poisson { lambda } => Poisson::<f64>::new(lambda)
                .map_err(|_| bad("poisson"))?
                .sample(rng),
            CondDist::NegBin { r, p } => {
                // Gamma(r, (1-p)/p) mixture of Poissons; a zero draw from the
                // mixing gamma (tiny r underflows) is a point mass at zero.
                let mix = GammaDist::new(r, (1.0 - p) / p)
                    .map_err(|_| bad("negbin mixing gamma"))?
                    .sample(rng);
                if mix > 0.0 && mix.is_finite() {
                    Poisson::<f64>::new(mix)
                        .map_err(|_| bad("negbin"))?
                        .sample(rng)
                } else {
                    0.0
                }
            }
            CondDist::Binomial { trials, p } => BinomialDist::new(trials, p)
                .map_err(|_| bad("binomial"))?
                .sample(rng) as f64,
        })
    }

    /// Closed-form characteristic function where one exists.
    pub(crate) fn char_fn(&self, tau: f64) -> Option<Complex64> {
        match *self {
            CondDist::Gaussian { mu, sigma } => {
                Some(Complex64::new(-0.5 * tau * tau * sigma * sigma, tau * mu).exp())
            }
            CondDist::Gamma { shape, mean } => {
                // (1 - iτμ/k)^{-k}; 1 - iτμ/k has positive real part, so the
                // principal branch is the right one.
                let base = Complex64::new(1.0, -tau * mean / shape);
                Some((-shape * base.ln()).exp())
            }
            CondDist::Poisson { lambda } => {
                let e = Complex64::from_polar(1.0, tau) - 1.0;
                Some((lambda * e).exp())
            }
            CondDist::NegBin { r, p } => {
                // [p / (1 - (1-p)e^{iτ})]^r; the base has positive real part.
                let denom = Complex64::new(1.0, 0.0) - (1.0 - p) * Complex64::from_polar(1.0, tau);
                Some((r * (Complex64::new(p.ln(), 0.0) - denom.ln())).exp())
            }
            CondDist::LogGaussian { .. } | CondDist::Binomial { .. } => None,
        }
    }

    fn ln_pmf(&self, k: f64) -> f64 {
        match *self {
            CondDist::Poisson { lambda } => k * lambda.ln() - lambda - ln_gamma(k + 1.0),
            CondDist::NegBin { r, p } => {
                ln_gamma(k + r) - ln_gamma(r) - ln_gamma(k + 1.0)
                    + r * p.ln()
                    + k * (-p).ln_1p()
            }
            CondDist::Binomial { trials, p } => {
                let n = trials as f64;
                if k > n {
                    return f64::NEG_INFINITY;
                }
                // ln p and ln(1-p) via softplus of the logit for stability at
                // extreme linear predictors.
                let logit = (p / (1.0 - p)).ln();
                ln_choose(n, k) + k * -softplus(-logit) + (n - k) * -softplus(logit)
            }
            _ => unreachable!("ln_pmf is only defined for discrete families"),
        }
    }

    /// pmf(k+1) / pmf(k).
    fn ratio_up(&self, k: f64) -> f64 {
        match *self {
            CondDist::Poisson { lambda } => lambda / (k + 1.0),
            CondDist::NegBin { r, p } => (k + r) * (1.0 - p) / (k + 1.0),
            CondDist::Binomial { trials, p } => {
                (trials as f64 - k) * p / ((k + 1.0) * (1.0 - p))
            }
            _ => unreachable!("ratio_up is only defined for discrete families"),
        }
    }

    fn mean_sd(&self) -> (f64, f64) {
        match *self {
            CondDist::Poisson { lambda } => (lambda, lambda.sqrt()),
            CondDist::NegBin { r, p } => {
                let m = r * (1.0 - p) / p;
                (m, (r * (1.0 - p)).sqrt() / p)
            }
            CondDist::Binomial { trials, p } => {
                let n = trials as f64;
                (n * p, (n * p * (1.0 - p)).sqrt())
            }
            _ => unreachable!("mean_sd is only used for discrete families"),
        }
    }

    /// Support window [lo, hi] outside which the pmf is below exp(LN_TAIL)
    /// times its peak. Starts at mean ± 14 sd and widens geometrically for
    /// heavy tails (negative binomial with small dispersion).
    pub(crate) fn discrete_window(&self) -> Option<(i64, i64)> {
        if !self.is_discrete() {
            return None;
        }
        let (mean, sd) = self.mean_sd();
        let cap = match *self {
            CondDist::Binomial { trials, .. } => trials as i64,
            _ => i64::MAX / 4,
        };
        let mut lo = ((mean - 14.0 * sd - 5.0).floor() as i64).max(0);
        let mut hi = (((mean + 14.0 * sd + 5.0).ceil() as i64).max(lo)).min(cap);
        let mode = ((mean.floor() as i64).max(lo)).min(hi);
        let thr = self.ln_pmf(mode as f64) + LN_TAIL;
        for _ in 0..200 {
            if hi >= cap || self.ln_pmf(hi as f64) <= thr {
                break;
            }
            hi = (hi + ((hi - lo) / 2).max(10)).min(cap);
        }
        for _ in 0..200 {
            if lo == 0 || self.ln_pmf(lo as f64) <= thr {
                break;
            }
            lo = (lo - ((hi - lo) / 2).max(10)).max(0);
        }
        Some((lo, hi))
    }

    /// Walk the pmf over [lo, hi] in ascending order.
    fn walk_pmf(&self, lo: i64, hi: i64, mut emit: impl FnMut(i64, f64)) {
        let mut p = self.ln_pmf(lo as f64).exp();
        if p == 0.0 {
            p = f64::MIN_POSITIVE;
        }
        emit(lo, p);
        for k in lo..hi {
            p *= self.ratio_up(k as f64);
            emit(k + 1, p);
        }
    }

    /// Add this distribution's pmf over `window` (from `discrete_window`) into
    /// a dense accumulator indexed from `base`.
    pub(crate) fn accumulate_pmf(&self, window: (i64, i64), base: i64, acc: &mut [f64]) {
        let len = acc.len() as i64;
        self.walk_pmf(window.0, window.1, |k, p| {
            let idx = k - base;
            debug_assert!((0..len).contains(&idx), "window outside accumulator");
            if (0..len).contains(&idx) {
                acc[idx as usize] += p;
            }
        });
    }

    /// Write F(t) for each t in the ascending slice `ts`.
    pub(crate) fn cdf_batch_sorted(&self, ts: &[f64], out: &mut [f64]) {
        debug_assert_eq!(ts.len(), out.len());
        if !self.is_discrete() {
            for (t, o) in ts.iter().zip(out.iter_mut()) {
                *o = self.cdf(*t);
            }
            return;
        }
        let (lo, hi) = self.discrete_window().expect("discrete family");
        let mut idx = 0;
        while idx < ts.len() && (ts[idx] < lo as f64) {
            out[idx] = 0.0;
            idx += 1;
        }
        let mut cum = 0.0;
        self.walk_pmf(lo, hi, |k, p| {
            cum += p;
            // Flush every t with floor(t) == k; in (k, k+1) the cdf is flat.
            let next = (k + 1) as f64;
            while idx < ts.len() && ts[idx] < next {
                out[idx] = cum.min(1.0);
                idx += 1;
            }
        });
        while idx < ts.len() {
            out[idx] = 1.0;
            idx += 1;
        }
    }
}
