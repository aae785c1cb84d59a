//! Parametric conditional distribution families and their maximum-likelihood fits.
//!
//! A family specifies the law of a response Y given a covariate row x through a
//! linear predictor and, for some kinds, one auxiliary parameter (Gaussian scale,
//! Gamma shape, negative binomial dispersion). Fitted models expose the
//! conditional cdf, density, sampler, mean, and characteristic function that the
//! test processes are built on.

mod dist;
mod fit;

pub use fit::{fit_mle, log_likelihood, FitOptions};

pub(crate) use dist::CondDist;

use crate::error::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A sample {(X_i, Y_i)}: covariate matrix with named columns plus responses.
///
/// `trials` carries per-row binomial trial counts; it stays `None` for every
/// other family. `intercept_column` marks the all-ones column so tests that
/// compare covariate vectors can skip it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub covariates: Array2<f64>,
    pub responses: Vec<f64>,
    pub column_names: Vec<String>,
    pub intercept_column: Option<usize>,
    pub trials: Option<Vec<u64>>,
}

impl Dataset {
    pub fn new(
        covariates: Array2<f64>,
        responses: Vec<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        if covariates.nrows() == 0 || responses.is_empty() {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if covariates.nrows() != responses.len() {
            return Err(Error::InvalidData(format!(
                "covariate rows ({}) do not match response length ({})",
                covariates.nrows(),
                responses.len()
            )));
        }
        if column_names.len() != covariates.ncols() {
            return Err(Error::InvalidData(format!(
                "{} column names for {} columns",
                column_names.len(),
                covariates.ncols()
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite covariate entry".into()));
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite response entry".into()));
        }
        Ok(Self {
            covariates,
            responses,
            column_names,
            intercept_column: None,
            trials: None,
        })
    }

    /// Attach per-row binomial trial counts.
    pub fn with_trials(mut self, trials: Vec<u64>) -> Result<Self> {
        if trials.len() != self.responses.len() {
            return Err(Error::InvalidData(format!(
                "{} trial counts for {} rows",
                trials.len(),
                self.responses.len()
            )));
        }
        self.trials = Some(trials);
        Ok(self)
    }

    /// Mark `col` as the intercept column; it must be identically 1.
    pub fn mark_intercept(mut self, col: usize) -> Result<Self> {
        if col >= self.covariates.ncols() {
            return Err(Error::InvalidData(format!(
                "intercept column {col} out of range"
            )));
        }
        if self.covariates.column(col).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidData(format!(
                "column {col} is not identically one"
            )));
        }
        self.intercept_column = Some(col);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub(crate) fn trials_at(&self, i: usize) -> Option<u64> {
        self.trials.as_ref().map(|t| t[i])
    }
}

/// The supported family kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    GaussianLinear,
    LogGaussianLinear,
    GammaGlm,
    PoissonGlm,
    #[serde(rename = "negbin_glm")]
    NegBinGlm,
    BinomialGlm,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::GaussianLinear => "gaussian_linear",
            FamilyKind::LogGaussianLinear => "log_gaussian_linear",
            FamilyKind::GammaGlm => "gamma_glm",
            FamilyKind::PoissonGlm => "poisson_glm",
            FamilyKind::NegBinGlm => "negbin_glm",
            FamilyKind::BinomialGlm => "binomial_glm",
        }
    }

    /// Number of parameters beyond the coefficient vector.
    pub fn aux_parameter_count(self) -> usize {
        match self {
            FamilyKind::GaussianLinear
            | FamilyKind::LogGaussianLinear
            | FamilyKind::GammaGlm
            | FamilyKind::NegBinGlm => 1,
            FamilyKind::PoissonGlm | FamilyKind::BinomialGlm => 0,
        }
    }

    pub fn canonical_link(self) -> Link {
        match self {
            FamilyKind::GaussianLinear | FamilyKind::LogGaussianLinear => Link::Identity,
            FamilyKind::GammaGlm | FamilyKind::PoissonGlm | FamilyKind::NegBinGlm => Link::Log,
            FamilyKind::BinomialGlm => Link::Logit,
        }
    }

    /// Whether responses live on the nonnegative integers.
    pub fn is_discrete(self) -> bool {
        matches!(
            self,
            FamilyKind::PoissonGlm | FamilyKind::NegBinGlm | FamilyKind::BinomialGlm
        )
    }

    fn admits(self, link: Link) -> bool {
        match self {
            FamilyKind::GaussianLinear | FamilyKind::LogGaussianLinear => link == Link::Identity,
            FamilyKind::GammaGlm => link == Link::Log || link == Link::Identity,
            FamilyKind::PoissonGlm | FamilyKind::NegBinGlm => link == Link::Log,
            FamilyKind::BinomialGlm => link == Link::Logit,
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_linear" => Ok(FamilyKind::GaussianLinear),
            "log_gaussian_linear" => Ok(FamilyKind::LogGaussianLinear),
            "gamma_glm" => Ok(FamilyKind::GammaGlm),
            "poisson_glm" => Ok(FamilyKind::PoissonGlm),
            "negbin_glm" => Ok(FamilyKind::NegBinGlm),
            "binomial_glm" => Ok(FamilyKind::BinomialGlm),
            other => Err(Error::InvalidSpec(format!("unknown family '{other}'"))),
        }
    }
}

/// Mean link applied to the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Log,
    Logit,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Logit => "logit",
        })
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Link::Identity),
            "log" => Ok(Link::Log),
            "logit" => Ok(Link::Logit),
            other => Err(Error::InvalidSpec(format!("unknown link '{other}'"))),
        }
    }
}

/// Family kind, link, and total parameter count q (coefficients plus auxiliary).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub link: Link,
    pub parameter_dimension: usize,
}

impl FamilySpec {
    pub fn new(kind: FamilyKind, link: Link, n_coeffs: usize) -> Result<Self> {
        if n_coeffs == 0 {
            return Err(Error::InvalidSpec("need at least one coefficient".into()));
        }
        if !kind.admits(link) {
            return Err(Error::InvalidSpec(format!(
                "link {link} is not admissible for {kind}"
            )));
        }
        Ok(Self {
            kind,
            link,
            parameter_dimension: n_coeffs + kind.aux_parameter_count(),
        })
    }

    /// Spec with the family's canonical link.
    pub fn canonical(kind: FamilyKind, n_coeffs: usize) -> Result<Self> {
        Self::new(kind, kind.canonical_link(), n_coeffs)
    }

    pub fn n_coeffs(&self) -> usize {
        self.parameter_dimension - self.kind.aux_parameter_count()
    }

    pub fn has_aux(&self) -> bool {
        self.kind.aux_parameter_count() > 0
    }
}

/// A fitted model: spec plus the MLE ϑ̂ and fit diagnostics.
///
/// `theta_hat` stores the coefficients followed by the auxiliary parameter on
/// its natural (positive) scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: FamilySpec,
    pub theta_hat: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl FittedModel {
    pub fn coeffs(&self) -> &[f64] {
        &self.theta_hat[..self.spec.n_coeffs()]
    }

    /// Auxiliary parameter (σ, shape, or dispersion) when the family has one.
    pub fn aux(&self) -> Option<f64> {
        self.spec
            .has_aux()
            .then(|| self.theta_hat[self.spec.parameter_dimension - 1])
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.spec.n_coeffs() {
            return Err(Error::InvalidData(format!(
                "covariate row has length {}, design width is {}",
                x.len(),
                self.spec.n_coeffs()
            )));
        }
        Ok(self
            .coeffs()
            .iter()
            .zip(x)
            .map(|(b, v)| b * v)
            .sum::<f64>())
    }

    fn dist_at(&self, x: &[f64], trials: Option<u64>) -> Result<CondDist> {
        CondDist::from_model(self, self.linear_predictor(x)?, trials)
    }

    pub(crate) fn row_dist(&self, data: &Dataset, i: usize) -> Result<CondDist> {
        if data.p() != self.spec.n_coeffs() {
            return Err(Error::InvalidData(format!(
                "dataset has {} columns, design width is {}",
                data.p(),
                self.spec.n_coeffs()
            )));
        }
        let row = data.covariates.row(i);
        let eta = self
            .coeffs()
            .iter()
            .zip(row.iter())
            .map(|(b, v)| b * v)
            .sum::<f64>();
        CondDist::from_model(self, eta, data.trials_at(i))
    }

    /// Conditional cdf F(t | ϑ̂, x); use the `_with_trials` variant for binomial.
    pub fn cond_cdf(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.dist_at(x, None)?.cdf(t))
    }

    pub fn cond_cdf_with_trials(&self, t: f64, x: &[f64], trials: u64) -> Result<f64> {
        Ok(self.dist_at(x, Some(trials))?.cdf(t))
    }

    /// Conditional density (or probability mass) at y.
    pub fn cond_density(&self, y: f64, x: &[f64]) -> Result<f64> {
        Ok(self.dist_at(x, None)?.pdf(y))
    }

    pub fn cond_density_with_trials(&self, y: f64, x: &[f64], trials: u64) -> Result<f64> {
        Ok(self.dist_at(x, Some(trials))?.pdf(y))
    }

    /// One draw from F(· | ϑ̂, x).
    pub fn sample_response<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        self.dist_at(x, None)?.sample(rng)
    }

    pub fn sample_response_with_trials<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        trials: u64,
        rng: &mut R,
    ) -> Result<f64> {
        self.dist_at(x, Some(trials))?.sample(rng)
    }

    /// Conditional mean m(x, ϑ̂).
    pub fn conditional_mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.dist_at(x, None)?.mean())
    }

    pub fn conditional_mean_with_trials(&self, x: &[f64], trials: u64) -> Result<f64> {
        Ok(self.dist_at(x, Some(trials))?.mean())
    }

    /// Conditional characteristic function ∫ exp(iτy) dF(y | ϑ̂, x).
    ///
    /// Closed forms exist for the Gaussian, Poisson, Gamma, and negative
    /// binomial families; the others return an unsupported-family error.
    pub fn char_fn(&self, tau: f64, x: &[f64]) -> Result<Complex64> {
        if matches!(
            self.spec.kind,
            FamilyKind::LogGaussianLinear | FamilyKind::BinomialGlm
        ) {
            return Err(Error::UnsupportedFamily {
                family: self.spec.kind.name().into(),
                operation: "characteristic function".into(),
            });
        }
        Ok(self
            .dist_at(x, None)?
            .char_fn(tau)
            .expect("closed-form characteristic function"))
    }
}
