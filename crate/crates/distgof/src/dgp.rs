//! Built-in data-generating processes and rejection studies.
//!
//! Ten named recipes share a standard-normal covariate and an intercept.
//! The continuous series C0-C4 perturbs a Gaussian linear null (heavy
//! tails, skewness, a missing quadratic term, heteroscedasticity); the
//! count series D0-D4 perturbs a log-link Poisson null with binomial and
//! negative binomial responses whose conditional mean stays exp(2 + 3X).
//!
//! `rejection_study` repeats generate-fit-bootstrap cycles and aggregates
//! p-values into rejection fractions and ecdf points.

use rand::Rng;
use rayon::prelude::*;
use rand_distr::{Binomial, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::bootstrap::{bootstrap_test_multi, BootstrapConfig};
use crate::error::{Error, Result};
use crate::families::{Dataset, FamilyKind, FamilySpec};
use crate::gof::TestKind;
use crate::substream::{derive_seed, substream};

/// The ten built-in data-generating processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DgpName {
    C0,
    C1,
    C2,
    C3,
    C4,
    D0,
    D1,
    D2,
    D3,
    D4,
}

impl DgpName {
    pub const ALL: [DgpName; 10] = [
        DgpName::C0,
        DgpName::C1,
        DgpName::C2,
        DgpName::C3,
        DgpName::C4,
        DgpName::D0,
        DgpName::D1,
        DgpName::D2,
        DgpName::D3,
        DgpName::D4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DgpName::C0 => "C0",
            DgpName::C1 => "C1",
            DgpName::C2 => "C2",
            DgpName::C3 => "C3",
            DgpName::C4 => "C4",
            DgpName::D0 => "D0",
            DgpName::D1 => "D1",
            DgpName::D2 => "D2",
            DgpName::D3 => "D3",
            DgpName::D4 => "D4",
        }
    }

    /// Count-valued series (D*) versus continuous series (C*).
    pub fn is_discrete(self) -> bool {
        matches!(
            self,
            DgpName::D0 | DgpName::D1 | DgpName::D2 | DgpName::D3 | DgpName::D4
        )
    }

    /// The family each series is tested against: Gaussian linear for C*,
    /// log-link Poisson for D*. C0 and D0 satisfy their null exactly.
    pub fn null_family(self) -> FamilySpec {
        let kind = if self.is_discrete() {
            FamilyKind::PoissonGlm
        } else {
            FamilyKind::GaussianLinear
        };
        FamilySpec::canonical(kind, 2).expect("two-column design admits the canonical link")
    }
}

impl fmt::Display for DgpName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.to_ascii_uppercase();
        DgpName::ALL
            .into_iter()
            .find(|d| d.name() == up)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown DGP `{s}`")))
    }
}

/// A named process at a sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub name: DgpName,
    pub n: usize,
}

impl DgpSpec {
    pub fn new(name: DgpName, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "DGP sample size must be at least 2, got {n}"
            )));
        }
        Ok(Self { name, n })
    }
}

/// Uniform draw guaranteed inside the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draws one dataset: X standard normal next to an intercept column, Y per
/// the named recipe. Deterministic given the stream.
pub fn generate_dgp<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<Dataset> {
    let n = spec.n;
    let t5 = StudentsT::new(0.0, 1.0, 5.0).expect("fixed dof");
    let mut rows = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    let mut trials: Vec<u64> = Vec::new();

    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        rows.extend_from_slice(&[1.0, x]);
        let y = match spec.name {
            DgpName::C0 => 1.0 + x + rng.sample::<f64, _>(StandardNormal),
            DgpName::C1 => {
                let u = open_unit(rng);
                1.0 + x + (u / (1.0 - u)).ln()
            }
            DgpName::C2 => 1.0 + x + t5.inverse_cdf(open_unit(rng)),
            DgpName::C3 => 1.0 + x + x * x + rng.sample::<f64, _>(StandardNormal),
            DgpName::C4 => 1.0 + x + x * rng.sample::<f64, _>(StandardNormal),
            DgpName::D0 => {
                let lambda = (2.0 + 3.0 * x).exp();
                rng.sample(Poisson::<f64>::new(lambda).expect("positive rate"))
            }
            DgpName::D1 => sample_binomial(1.25, 0.8, x, &mut trials, rng),
            DgpName::D2 => sample_binomial(2.0, 0.5, x, &mut trials, rng),
            DgpName::D3 => sample_binomial(10.0, 0.1, x, &mut trials, rng),
            DgpName::D4 => {
                // Gamma-Poisson mixture with shape 0.25 exp(2 + 3x) and
                // success probability 0.2; the mean is exp(2 + 3x).
                let r = 0.25 * (2.0 + 3.0 * x).exp();
                let lambda: f64 = rng.sample(Gamma::new(r, 4.0).expect("positive shape"));
                if lambda > 0.0 {
                    rng.sample(Poisson::<f64>::new(lambda).expect("positive rate"))
                } else {
                    0.0
                }
            }
        };
        ys.push(y);
    }

    let covariates = ndarray::Array2::from_shape_vec((n, 2), rows).expect("n by 2");
    let names = vec!["intercept".to_string(), "x".to_string()];
    let data = Dataset::new(covariates, ys, names)?.mark_intercept(0)?;
    if trials.is_empty() {
        Ok(data)
    } else {
        data.with_trials(trials)
    }
}

/// Binomial response with per-row trial count ceil(k exp(2 + 3x)); the
/// trial counts are recorded so a binomial family can also be fit.
fn sample_binomial<R: Rng + ?Sized>(
    k: f64,
    p: f64,
    x: f64,
    trials: &mut Vec<u64>,
    rng: &mut R,
) -> f64 {
    let m = (k * (2.0 + 3.0 * x).exp()).ceil() as u64;
    let m = m.max(1);
    trials.push(m);
    rng.sample(Binomial::new(m, p).expect("probability in range")) as f64
}

/// P-values and rejection fractions for one test kind across a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    /// One p-value per repetition, in repetition order.
    pub p_values: Vec<f64>,
    /// `(level, fraction of p-values <= level)` pairs.
    pub rejection_at: Vec<(f64, f64)>,
}

/// Aggregated outcome of a rejection study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub dgp: DgpSpec,
    pub null_family: FamilySpec,
    pub repetitions: usize,
    pub retried: usize,
    pub config: BootstrapConfig,
    pub per_test: BTreeMap<TestKind, TestSummary>,
}

/// Runs `repetitions` generate-fit-bootstrap cycles and aggregates the
/// p-values. Repetition `r`, attempt `a`, derives the bootstrap master seed
/// `derive_seed(boot.master_seed, a * repetitions + r)`; its data stream is
/// substream u64::MAX of that seed, clear of the bootstrap's replication
/// streams. A repetition whose original fit fails retries with the next
/// attempt's seed; total retries are capped at 2% of the repetition count.
pub fn rejection_study(
    dgp: &DgpSpec,
    null_family: &FamilySpec,
    tests: &[TestKind],
    repetitions: usize,
    boot: &BootstrapConfig,
    levels: &[f64],
) -> Result<SimulationReport> {
    boot.validate()?;
    if repetitions == 0 {
        return Err(Error::InvalidConfig("study needs at least one repetition".into()));
    }
    if tests.is_empty() {
        return Err(Error::InvalidConfig("no test kinds requested".into()));
    }
    if levels.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::InvalidConfig("levels must lie in (0, 1)".into()));
    }
    let retry_budget = ((0.02 * repetitions as f64).ceil() as usize).max(1);

    let run_once = |r: usize| -> (Vec<Result<Vec<f64>>>, usize) {
        // The retry loop stays inside the repetition so seeds never depend
        // on other repetitions' outcomes.
        let mut attempts = Vec::new();
        for a in 0..=retry_budget {
            let rep_seed = derive_seed(boot.master_seed, (a * repetitions + r) as u64);
            let mut data_rng = substream(rep_seed, u64::MAX);
            let result = generate_dgp(dgp, &mut data_rng).and_then(|data| {
                let config = BootstrapConfig {
                    master_seed: rep_seed,
                    ..boot.clone()
                };
                bootstrap_test_multi(tests, null_family, &data, &config)
                    .map(|rs| rs.into_iter().map(|t| t.p_value).collect())
            });
            let ok = result.is_ok();
            attempts.push(result);
            if ok {
                return (attempts, a);
            }
        }
        let retries = attempts.len() - 1;
        (attempts, retries)
    };

    let outcomes: Vec<(Vec<Result<Vec<f64>>>, usize)> = if boot.parallel {
        (0..repetitions).into_par_iter().map(run_once).collect()
    } else {
        (0..repetitions).map(run_once).collect()
    };

    let retried: usize = outcomes.iter().map(|(_, a)| a).sum();
    let mut per_rep = Vec::with_capacity(repetitions);
    for (r, (mut attempts, _)) in outcomes.into_iter().enumerate() {
        match attempts.pop().expect("at least one attempt") {
            Ok(ps) => per_rep.push(ps),
            Err(err) => {
                return Err(Error::StudyRetries(format!(
                    "repetition {r} failed after {retry_budget} retries: {err}"
                )));
            }
        }
    }
    if retried > retry_budget {
        return Err(Error::StudyRetries(format!(
            "{retried} retries across the study exceed the budget of {retry_budget}"
        )));
    }

    let mut per_test = BTreeMap::new();
    for (slot, &kind) in tests.iter().enumerate() {
        let p_values: Vec<f64> = per_rep.iter().map(|ps| ps[slot]).collect();
        let rejection_at = levels
            .iter()
            .map(|&a| {
                let hits = p_values.iter().filter(|&&p| p <= a).count();
                (a, hits as f64 / repetitions as f64)
            })
            .collect();
        per_test.insert(
            kind,
            TestSummary {
                p_values,
                rejection_at,
            },
        );
    }

    Ok(SimulationReport {
        dgp: *dgp,
        null_family: *null_family,
        repetitions,
        retried,
        config: boot.clone(),
        per_test,
    })
}

/// Step points of the p-value ecdf for one test kind: `(p, fraction <= p)`
/// at each distinct stored p-value, ascending.
pub fn pvalue_ecdf_points(report: &SimulationReport, kind: TestKind) -> Result<Vec<(f64, f64)>> {
    let summary = report
        .per_test
        .get(&kind)
        .ok_or_else(|| Error::UnknownTest(format!("{kind} is not part of this report")))?;
    let mut sorted = summary.p_values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, p) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == *p => last.1 = frac,
            _ => points.push((*p, frac)),
        }
    }
    Ok(points)
}
