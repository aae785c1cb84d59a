//! Parametric bootstrap calibration for the goodness-of-fit statistics.
//!
//! Each replication keeps the covariates, redraws responses from the fitted
//! conditional law, refits the family on the resample (warm-started at the
//! original estimate), and recomputes the statistic. The Monte Carlo p-value
//! counts bootstrap statistics at least as large as the observed one.
//!
//! Replication `k` owns the substream `(master_seed, k)` for `k = 1..=m`, so
//! serial and parallel runs produce bit-identical results. Stream 0 is
//! reserved for the integrated-moment frequency draw, which is made once on
//! the original sample and reused in every replication.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::families::{fit_mle, Dataset, FamilySpec, FitOptions, FittedModel};
use crate::gof::{
    andrews_ck_statistic, dikta_mep_statistic, draw_icm_frequencies, non_intercept_columns,
    process_parts, IcmFrequencies, TestKind, TestStatistic,
};
use crate::substream::substream;

/// Settings for the integrated conditional moment statistic when it runs
/// inside the bootstrap: frequency box half-width and number of draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcmSettings {
    pub c: f64,
    pub draws: usize,
}

impl Default for IcmSettings {
    fn default() -> Self {
        Self { c: 5.0, draws: 128 }
    }
}

/// Bootstrap run parameters.
///
/// `parallel` is an execution hint, not part of the result's identity: it is
/// excluded from serialization and equality so that serial and parallel runs
/// of the same configuration compare and serialize identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub master_seed: u64,
    /// Fraction of replications allowed to fail refitting before the whole
    /// run errors out.
    pub max_fit_failures: f64,
    #[serde(skip)]
    pub parallel: bool,
    /// Levels at which critical values are tabulated in each result.
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub icm: IcmSettings,
}

fn default_levels() -> Vec<f64> {
    vec![0.01, 0.05, 0.10]
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 200,
            master_seed: 42,
            max_fit_failures: 0.01,
            parallel: true,
            levels: default_levels(),
            icm: IcmSettings::default(),
        }
    }
}

impl PartialEq for BootstrapConfig {
    fn eq(&self, other: &Self) -> bool {
        self.replications == other.replications
            && self.master_seed == other.master_seed
            && self.max_fit_failures == other.max_fit_failures
            && self.levels == other.levels
            && self.icm == other.icm
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "bootstrap needs at least one replication".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.max_fit_failures) {
            return Err(Error::InvalidConfig(format!(
                "max_fit_failures must lie in [0, 1), got {}",
                self.max_fit_failures
            )));
        }
        if self.levels.is_empty() || self.levels.iter().any(|a| !(0.0..1.0).contains(a) || *a == 0.0)
        {
            return Err(Error::InvalidConfig(
                "levels must be a nonempty list inside (0, 1)".into(),
            ));
        }
        if !(self.icm.c > 0.0 && self.icm.c.is_finite()) || self.icm.draws == 0 {
            return Err(Error::InvalidConfig(
                "icm settings need c > 0 and draws >= 1".into(),
            ));
        }
        Ok(())
    }

    fn allowed_failures(&self) -> usize {
        (self.max_fit_failures * self.replications as f64).floor() as usize
    }
}

/// Outcome of one bootstrap-calibrated test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: TestStatistic,
    /// Successful replications' statistics, ordered by replication index.
    pub boot_statistics: Vec<f64>,
    pub p_value: f64,
    /// `(level, critical value)` pairs at the configured levels.
    pub critical_values: Vec<(f64, f64)>,
    pub failed_replications: usize,
    pub config: BootstrapConfig,
}

/// Draws one bootstrap response vector from the fitted conditional law,
/// one response per covariate row. The covariates themselves are never
/// touched; pass the binomial trial counts when the family needs them.
pub fn resample_responses<R: Rng + ?Sized>(
    model: &FittedModel,
    covariates: &Array2<f64>,
    trials: Option<&[u64]>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = covariates.nrows();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = covariates.row(i).to_vec();
        let y = match trials {
            Some(tr) => model.sample_response_with_trials(&row, tr[i], rng)?,
            None => model.sample_response(&row, rng)?,
        };
        out.push(y);
    }
    Ok(out)
}

/// Monte Carlo p-value: the fraction of bootstrap statistics at least as
/// large as the observed one (ties count as rejections).
pub(crate) fn p_value_from(boot: &[f64], observed: f64) -> f64 {
    let hits = boot.iter().filter(|&&b| b >= observed).count();
    hits as f64 / boot.len() as f64
}

/// Smallest bootstrap statistic `c` with (count of statistics > c) / m' <= alpha.
pub(crate) fn critical_value_from(boot: &[f64], alpha: f64) -> f64 {
    debug_assert!(!boot.is_empty());
    let mut sorted = boot.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    for (i, &c) in sorted.iter().enumerate() {
        // Elements strictly greater than c start past the last tie of c.
        let gt = sorted.len() - sorted[i..].partition_point(|&v| v <= c) - i;
        if gt as f64 / m <= alpha {
            return c;
        }
    }
    sorted[sorted.len() - 1]
}

/// Bootstrap critical value at `alpha` for an already-computed result.
/// Rejection via `statistic.value > c` agrees with `p_value <= alpha`
/// whenever the observed statistic is not tied with a bootstrap one.
pub fn bootstrap_critical_value(result: &TestResult, alpha: f64) -> Result<f64> {
    if result.boot_statistics.is_empty() {
        return Err(Error::InvalidConfig(
            "critical value needs at least one successful replication".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "level must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(critical_value_from(&result.boot_statistics, alpha))
}

/// Computes the raw statistic values of the requested kinds on one sample.
/// The empirical-process evaluation is shared between the KS and CvM
/// functionals; the frequency set is only consulted for the
/// integrated-moment statistic.
fn statistic_values(
    kinds: &[TestKind],
    data: &Dataset,
    model: &FittedModel,
    freqs: Option<&IcmFrequencies>,
) -> Result<Vec<f64>> {
    let parts = if kinds
        .iter()
        .any(|k| matches!(k, TestKind::NewKs | TestKind::NewCvm))
    {
        Some(process_parts(data, model)?)
    } else {
        None
    };
    kinds
        .iter()
        .map(|&kind| match kind {
            TestKind::NewKs => Ok(parts.as_ref().expect("parts prepared").ks_value()),
            TestKind::NewCvm => Ok(parts.as_ref().expect("parts prepared").cvm_value()),
            TestKind::AndrewsCk => andrews_ck_statistic(data, model).map(|s| s.value),
            TestKind::DiktaMep => dikta_mep_statistic(data, model).map(|s| s.value),
            TestKind::BierensIcm => {
                let freqs = freqs.expect("frequency set prepared");
                crate::gof::icm_value(data, model, freqs)
            }
        })
        .collect()
}

fn statistic_metadata(kind: TestKind, config: &BootstrapConfig) -> BTreeMap<String, f64> {
    let mut metadata = BTreeMap::new();
    if kind == TestKind::BierensIcm {
        metadata.insert("c".to_string(), config.icm.c);
        metadata.insert("draws".to_string(), config.icm.draws as f64);
    }
    metadata
}

/// Runs the full parametric bootstrap for one statistic kind.
pub fn bootstrap_test(
    kind: TestKind,
    spec: &FamilySpec,
    data: &Dataset,
    config: &BootstrapConfig,
) -> Result<TestResult> {
    let mut results = bootstrap_test_multi(&[kind], spec, data, config)?;
    Ok(results.pop().expect("one result per requested kind"))
}

/// Runs the bootstrap once and calibrates several statistic kinds against
/// the same resamples and refits. Each kind's result is identical to what
/// `bootstrap_test` for that kind alone would produce, because replication
/// streams do not depend on which statistics are computed.
pub fn bootstrap_test_multi(
    kinds: &[TestKind],
    spec: &FamilySpec,
    data: &Dataset,
    config: &BootstrapConfig,
) -> Result<Vec<TestResult>> {
    config.validate()?;
    if kinds.is_empty() {
        return Err(Error::InvalidConfig("no test kinds requested".into()));
    }
    let model = fit_mle(spec, data, &FitOptions::default())?;

    let freqs = if kinds.contains(&TestKind::BierensIcm) {
        let mut rng = substream(config.master_seed, 0);
        Some(draw_icm_frequencies(
            config.icm.c,
            config.icm.draws,
            non_intercept_columns(data).len(),
            &mut rng,
        ))
    } else {
        None
    };

    let observed = statistic_values(kinds, data, &model, freqs.as_ref())?;

    let warm = FitOptions {
        init: Some(model.theta_hat.clone()),
        ..FitOptions::default()
    };
    let replicate = |k: usize| -> Option<Vec<f64>> {
        let mut rng = substream(config.master_seed, k as u64);
        let responses = resample_responses(
            &model,
            &data.covariates,
            data.trials.as_deref(),
            &mut rng,
        )
        .ok()?;
        let mut boot = data.clone();
        boot.responses = responses;
        let refit = fit_mle(spec, &boot, &warm).ok()?;
        statistic_values(kinds, &boot, &refit, freqs.as_ref()).ok()
    };

    let m = config.replications;
    let per_rep: Vec<Option<Vec<f64>>> = if config.parallel {
        (1..=m).into_par_iter().map(replicate).collect()
    } else {
        (1..=m).map(replicate).collect()
    };

    let failed = per_rep.iter().filter(|r| r.is_none()).count();
    if failed > config.allowed_failures() {
        return Err(Error::BootstrapFailures {
            failed,
            total: m,
            allowed: config.allowed_failures(),
        });
    }

    let mut results = Vec::with_capacity(kinds.len());
    for (slot, &kind) in kinds.iter().enumerate() {
        let boot: Vec<f64> = per_rep
            .iter()
            .filter_map(|r| r.as_ref().map(|v| v[slot]))
            .collect();
        let statistic = TestStatistic::checked(kind, observed[slot], statistic_metadata(kind, config))?;
        let p_value = p_value_from(&boot, statistic.value);
        let critical_values = config
            .levels
            .iter()
            .map(|&a| (a, critical_value_from(&boot, a)))
            .collect();
        results.push(TestResult {
            statistic,
            boot_statistics: boot,
            p_value,
            critical_values,
            failed_replications: failed,
            config: config.clone(),
        });
    }
    Ok(results)
}
