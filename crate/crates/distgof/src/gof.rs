//! Test processes and scalar statistics on a (dataset, fitted model) pair.
//!
//! The primary process compares the response ecdf with the covariate-averaged
//! model cdf: α̃_n(t) = n^{-1/2} Σᵢ [1{Yᵢ ≤ t} − F(t | ϑ̂, Xᵢ)]. Its sup norm
//! and the integral of α̃_n² against the averaged model cdf give the KS- and
//! CvM-type statistics. Three comparison statistics operate on the same pair:
//! a conditional Kolmogorov process indexed by (t, x), a marked empirical
//! process in the fitted direction β̂ᵀx, and an integrated
//! characteristic-function distance over random frequencies.

use crate::error::{Error, Result};
use crate::families::{CondDist, Dataset, FamilyKind, FittedModel};
use crate::special::next_down;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// The five statistic kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    NewKs,
    NewCvm,
    AndrewsCk,
    DiktaMep,
    BierensIcm,
}

impl TestKind {
    pub const ALL: [TestKind; 5] = [
        TestKind::NewKs,
        TestKind::NewCvm,
        TestKind::AndrewsCk,
        TestKind::DiktaMep,
        TestKind::BierensIcm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::NewKs => "new_ks",
            TestKind::NewCvm => "new_cvm",
            TestKind::AndrewsCk => "andrews_ck",
            TestKind::DiktaMep => "dikta_mep",
            TestKind::BierensIcm => "bierens_icm",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "new_ks" => Ok(TestKind::NewKs),
            "new_cvm" => Ok(TestKind::NewCvm),
            "andrews_ck" => Ok(TestKind::AndrewsCk),
            "dikta_mep" => Ok(TestKind::DiktaMep),
            "bierens_icm" => Ok(TestKind::BierensIcm),
            other => Err(Error::UnknownTest(other.to_string())),
        }
    }
}

/// The process α̃_n evaluated over its exact supremum set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessEvaluation {
    /// Sorted evaluation points, bracketed by ±∞ sentinels.
    pub eval_points: Vec<f64>,
    pub values: Vec<f64>,
    pub sup_norm: f64,
}

/// A scalar statistic with its kind and any evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStatistic {
    pub test_kind: TestKind,
    pub value: f64,
    pub metadata: BTreeMap<String, f64>,
}

impl TestStatistic {
    pub(crate) fn checked(
        test_kind: TestKind,
        value: f64,
        metadata: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::NumericRange(format!(
                "{test_kind} statistic is {value}"
            )));
        }
        Ok(Self {
            test_kind,
            value,
            metadata,
        })
    }
}

/// Shared per-evaluation state: distinct responses with their ecdf, the
/// covariate-averaged model cdf at those points, and (discrete families) the
/// averaged pmf over a dense support window.
pub(crate) struct ProcessParts {
    n_f: f64,
    ys: Vec<f64>,
    ecdf: Vec<f64>,
    fbar: Vec<f64>,
    dense: Option<DenseBar>,
}

struct DenseBar {
    base: i64,
    pbar: Vec<f64>,
    cum: Vec<f64>,
}

impl DenseBar {
    /// Averaged model cdf at integer k; exact outside the window because the
    /// truncated tail mass is below 1e-18 per observation.
    fn at(&self, k: i64) -> f64 {
        if k < self.base {
            0.0
        } else if k - self.base >= self.cum.len() as i64 {
            1.0
        } else {
            self.cum[(k - self.base) as usize].min(1.0)
        }
    }

    fn at_t(&self, t: f64) -> f64 {
        if t == f64::INFINITY {
            return 1.0;
        }
        if t == f64::NEG_INFINITY {
            return 0.0;
        }
        self.at(t.floor() as i64)
    }
}

fn distinct_ecdf(responses: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = responses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n_f = sorted.len() as f64;
    let mut ys = Vec::new();
    let mut ecdf = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        ys.push(sorted[i]);
        ecdf.push(j as f64 / n_f);
        i = j;
    }
    (ys, ecdf)
}

pub(crate) fn process_parts(data: &Dataset, model: &FittedModel) -> Result<ProcessParts> {
    if data.n() == 0 {
        return Err(Error::InvalidData("empty dataset".into()));
    }
    let n = data.n();
    let n_f = n as f64;
    let (ys, ecdf) = distinct_ecdf(&data.responses);
    if model.spec.kind.is_discrete() {
        // One window union for all observations, filled by pmf walks.
        let mut windows = Vec::with_capacity(n);
        let (mut base, mut top) = (i64::MAX, i64::MIN);
        for i in 0..n {
            let d = model.row_dist(data, i)?;
            let w = d.discrete_window().expect("discrete family");
            base = base.min(w.0);
            top = top.max(w.1);
            windows.push((d, w));
        }
        let mut pbar = vec![0.0; (top - base + 1) as usize];
        for (d, w) in &windows {
            d.accumulate_pmf(*w, base, &mut pbar);
        }
        for p in &mut pbar {
            *p /= n_f;
        }
        let mut cum = Vec::with_capacity(pbar.len());
        let mut acc = 0.0;
        for p in &pbar {
            acc += p;
            cum.push(acc);
        }
        let dense = DenseBar { base, pbar, cum };
        let fbar = ys.iter().map(|&y| dense.at_t(y)).collect();
        Ok(ProcessParts {
            n_f,
            ys,
            ecdf,
            fbar,
            dense: Some(dense),
        })
    } else {
        let mut fbar = vec![0.0; ys.len()];
        let mut buf = vec![0.0; ys.len()];
        for i in 0..n {
            let d = model.row_dist(data, i)?;
            d.cdf_batch_sorted(&ys, &mut buf);
            for (f, b) in fbar.iter_mut().zip(&buf) {
                *f += b;
            }
        }
        for f in &mut fbar {
            *f /= n_f;
        }
        Ok(ProcessParts {
            n_f,
            ys,
            ecdf,
            fbar,
            dense: None,
        })
    }
}

impl ProcessParts {
    /// Full evaluation over the exact supremum set: every distinct response
    /// and its left limit, the integer grid on [min Y, max Y] for discrete
    /// families, and ±∞ sentinels.
    fn evaluation(&self) -> ProcessEvaluation {
        let sqrt_n = self.n_f.sqrt();
        let mut eval_points = Vec::new();
        let mut values = Vec::new();
        eval_points.push(f64::NEG_INFINITY);
        values.push(0.0);
        match &self.dense {
            None => {
                for j in 0..self.ys.len() {
                    let prev = if j == 0 { 0.0 } else { self.ecdf[j - 1] };
                    // Continuous model cdf: F̄(t⁻) = F̄(t).
                    eval_points.push(next_down(self.ys[j]));
                    values.push(sqrt_n * (prev - self.fbar[j]));
                    eval_points.push(self.ys[j]);
                    values.push(sqrt_n * (self.ecdf[j] - self.fbar[j]));
                }
            }
            Some(dense) => {
                let lo = self.ys[0].floor() as i64;
                let hi = self.ys[self.ys.len() - 1].floor() as i64;
                let mut obs = 0;
                let mut cur = 0.0;
                for k in lo..=hi {
                    let kf = k as f64;
                    // Responses strictly inside (k-1, k) — possible only for
                    // non-integer data — keep their own jump points.
                    while obs < self.ys.len() && self.ys[obs] < kf {
                        let y = self.ys[obs];
                        eval_points.push(next_down(y));
                        values.push(sqrt_n * (cur - dense.at_t(next_down(y))));
                        cur = self.ecdf[obs];
                        eval_points.push(y);
                        values.push(sqrt_n * (cur - dense.at_t(y)));
                        obs += 1;
                    }
                    if obs < self.ys.len() && self.ys[obs] == kf {
                        eval_points.push(next_down(kf));
                        values.push(sqrt_n * (cur - dense.at(k - 1)));
                        cur = self.ecdf[obs];
                        obs += 1;
                    }
                    eval_points.push(kf);
                    values.push(sqrt_n * (cur - dense.at(k)));
                }
            }
        }
        eval_points.push(f64::INFINITY);
        values.push(0.0);
        let sup_norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ProcessEvaluation {
            eval_points,
            values,
            sup_norm,
        }
    }

    /// sup |α̃_n| without materializing the evaluation grid. Between stored
    /// candidates the process is monotone in F̄, so the supremum is attained
    /// at a response value, a left limit, or the left limit of the next
    /// response (discrete case).
    pub(crate) fn ks_value(&self) -> f64 {
        let mut best = 0.0f64;
        match &self.dense {
            None => {
                for j in 0..self.ys.len() {
                    let prev = if j == 0 { 0.0 } else { self.ecdf[j - 1] };
                    best = best
                        .max((prev - self.fbar[j]).abs())
                        .max((self.ecdf[j] - self.fbar[j]).abs());
                }
            }
            Some(dense) => {
                for j in 0..self.ys.len() {
                    let prev = if j == 0 { 0.0 } else { self.ecdf[j - 1] };
                    let left = dense.at_t(next_down(self.ys[j]));
                    best = best
                        .max((prev - left).abs())
                        .max((self.ecdf[j] - self.fbar[j]).abs());
                    if j + 1 < self.ys.len() {
                        let reach = dense.at_t(next_down(self.ys[j + 1]));
                        best = best.max((self.ecdf[j] - reach).abs());
                    }
                }
            }
        }
        self.n_f.sqrt() * best
    }

    /// ∫ α̃_n²(t) dF̄(t) with F̄ the covariate-averaged model cdf.
    ///
    /// Continuous families: on each ecdf step [t_j, t_{j+1}) the process is
    /// c_j − F̄(t), so the integral has the closed form
    /// n/3 · [(c_j − F̄(t_j))³ − (c_j − F̄(t_{j+1}))³] per interval.
    /// Discrete families: exact sum of α̃² times the averaged pmf over the
    /// whole support window, tails included.
    pub(crate) fn cvm_value(&self) -> f64 {
        let last = self.ys.len() - 1;
        match &self.dense {
            None => {
                let mut acc = self.fbar[0].powi(3);
                for j in 0..last {
                    let a = self.ecdf[j] - self.fbar[j];
                    let b = self.ecdf[j] - self.fbar[j + 1];
                    acc += a.powi(3) - b.powi(3);
                }
                acc += (1.0 - self.fbar[last]).powi(3);
                self.n_f * acc / 3.0
            }
            Some(dense) => {
                let mut acc = 0.0;
                let mut obs = 0;
                let mut cur = 0.0;
                for (idx, p) in dense.pbar.iter().enumerate() {
                    let kf = (dense.base + idx as i64) as f64;
                    while obs < self.ys.len() && self.ys[obs] <= kf {
                        cur = self.ecdf[obs];
                        obs += 1;
                    }
                    let a = cur - dense.cum[idx].min(1.0);
                    acc += a * a * p;
                }
                self.n_f * acc
            }
        }
    }
}

/// Evaluate α̃_n over its exact supremum set.
pub fn new_process(data: &Dataset, model: &FittedModel) -> Result<ProcessEvaluation> {
    Ok(process_parts(data, model)?.evaluation())
}

/// KS-type statistic: sup |α̃_n|.
pub fn new_ks_statistic(data: &Dataset, model: &FittedModel) -> Result<TestStatistic> {
    let value = process_parts(data, model)?.ks_value();
    TestStatistic::checked(TestKind::NewKs, value, BTreeMap::new())
}

/// CvM-type statistic: ∫ α̃_n² dF̄.
pub fn new_cvm_statistic(data: &Dataset, model: &FittedModel) -> Result<TestStatistic> {
    let value = process_parts(data, model)?.cvm_value();
    TestStatistic::checked(TestKind::NewCvm, value, BTreeMap::new())
}

pub(crate) fn non_intercept_columns(data: &Dataset) -> Vec<usize> {
    (0..data.p())
        .filter(|&c| data.intercept_column != Some(c))
        .collect()
}

/// Conditional Kolmogorov statistic: max_j |ν_n(Y_j, X_j)| with
/// ν_n(t, x) = n^{-1/2} Σᵢ (1{Yᵢ ≤ t} − F(t | ϑ̂, Xᵢ)) 1{Xᵢ ≤ x},
/// the covariate comparison component-wise over non-intercept columns.
pub fn andrews_ck_statistic(data: &Dataset, model: &FittedModel) -> Result<TestStatistic> {
    let n = data.n();
    let (ys, _) = distinct_ecdf(&data.responses);
    // F(y_d | Xᵢ) for every (observation, distinct response) pair.
    let mut cdfm = vec![0.0; n * ys.len()];
    for i in 0..n {
        let d = model.row_dist(data, i)?;
        d.cdf_batch_sorted(&ys, &mut cdfm[i * ys.len()..(i + 1) * ys.len()]);
    }
    let cols = non_intercept_columns(data);
    let x = &data.covariates;
    let mut best = 0.0f64;
    for j in 0..n {
        let dj = ys.partition_point(|&v| v < data.responses[j]);
        let mut s = 0.0;
        for i in 0..n {
            if cols.iter().any(|&c| x[[i, c]] > x[[j, c]]) {
                continue;
            }
            let ind = if data.responses[i] <= data.responses[j] {
                1.0
            } else {
                0.0
            };
            s += ind - cdfm[i * ys.len() + dj];
        }
        best = best.max(s.abs());
    }
    TestStatistic::checked(TestKind::AndrewsCk, best / (n as f64).sqrt(), BTreeMap::new())
}

/// Marked empirical process statistic in the fitted direction: the maximum of
/// |n^{-1/2} Σᵢ markᵢ 1{β̂ᵀXᵢ ≤ u}| over thresholds u in {β̂ᵀXᵢ}. Marks are
/// Yᵢ − m(Xᵢ, ϑ̂) with m the conditional mean, except under the log-Gaussian
/// family where they are log Yᵢ − μ̂(Xᵢ) on the log scale.
pub fn dikta_mep_statistic(data: &Dataset, model: &FittedModel) -> Result<TestStatistic> {
    let n = data.n();
    let mut etas = Vec::with_capacity(n);
    let mut marks = Vec::with_capacity(n);
    for i in 0..n {
        let row = data.covariates.row(i);
        let eta: f64 = model.coeffs().iter().zip(row.iter()).map(|(b, v)| b * v).sum();
        let mark = if model.spec.kind == FamilyKind::LogGaussianLinear {
            data.responses[i].ln() - eta
        } else {
            data.responses[i] - model.row_dist(data, i)?.mean()
        };
        etas.push(eta);
        marks.push(mark);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| etas[a].total_cmp(&etas[b]));
    let mut best = 0.0f64;
    let mut cum = 0.0;
    let mut i = 0;
    while i < n {
        // Tied thresholds enter the indicator together.
        let mut j = i;
        while j < n && etas[order[j]] == etas[order[i]] {
            cum += marks[order[j]];
            j += 1;
        }
        best = best.max(cum.abs());
        i = j;
    }
    TestStatistic::checked(TestKind::DiktaMep, best / (n as f64).sqrt(), BTreeMap::new())
}

/// A frequency set (τ_s, ξ_s) for the characteristic-function statistic,
/// drawn once and reused across the bootstrap replications of one test run.
#[derive(Debug, Clone)]
pub(crate) struct IcmFrequencies {
    taus: Vec<f64>,
    /// Per draw, one component per non-intercept covariate column.
    xis: Vec<Vec<f64>>,
}

pub(crate) fn draw_icm_frequencies<R: Rng + ?Sized>(
    c: f64,
    draws: usize,
    n_xi: usize,
    rng: &mut R,
) -> IcmFrequencies {
    let uniform = |rng: &mut R| (rng.random::<f64>() * 2.0 - 1.0) * c;
    let mut taus = Vec::with_capacity(draws);
    let mut xis = Vec::with_capacity(draws);
    for _ in 0..draws {
        taus.push(uniform(rng));
        xis.push((0..n_xi).map(|_| uniform(rng)).collect());
    }
    IcmFrequencies { taus, xis }
}

pub(crate) fn icm_value(
    data: &Dataset,
    model: &FittedModel,
    freqs: &IcmFrequencies,
) -> Result<f64> {
    if matches!(
        model.spec.kind,
        FamilyKind::LogGaussianLinear | FamilyKind::BinomialGlm
    ) {
        return Err(Error::UnsupportedFamily {
            family: model.spec.kind.name().into(),
            operation: "characteristic-function statistic".into(),
        });
    }
    let n = data.n();
    let dists: Vec<CondDist> = (0..n)
        .map(|i| model.row_dist(data, i))
        .collect::<Result<_>>()?;
    let cols = non_intercept_columns(data);
    let x = &data.covariates;
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut total = 0.0;
    for (tau, xi) in freqs.taus.iter().zip(&freqs.xis) {
        let mut z = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let cf = dists[j]
                .char_fn(*tau)
                .expect("closed-form characteristic function");
            let phase: f64 = cols
                .iter()
                .zip(xi)
                .map(|(&c, &w)| w * x[[j, c]])
                .sum();
            z += (Complex64::from_polar(1.0, tau * data.responses[j]) - cf)
                * Complex64::from_polar(1.0, phase);
        }
        total += (z * inv_sqrt_n).norm_sqr();
    }
    Ok(total / freqs.taus.len() as f64)
}

/// Integrated characteristic-function statistic: the mean over `draws` random
/// frequencies (τ, ξ) ~ U[−c, c]^{1+p'} of |Z_n(τ, ξ)|², where
/// Z_n = n^{-1/2} Σⱼ (e^{iτYⱼ} − ∫e^{iτy} dF(y|ϑ̂, Xⱼ)) e^{iξᵀXⱼ} and ξ pairs
/// with the non-intercept covariate columns. Deterministic given `rng`.
pub fn bierens_icm_statistic<R: Rng + ?Sized>(
    data: &Dataset,
    model: &FittedModel,
    c: f64,
    draws: usize,
    rng: &mut R,
) -> Result<TestStatistic> {
    if c <= 0.0 || !c.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "frequency box half-width must be positive, got {c}"
        )));
    }
    if draws == 0 {
        return Err(Error::InvalidConfig("need at least one frequency draw".into()));
    }
    let freqs = draw_icm_frequencies(c, draws, non_intercept_columns(data).len(), rng);
    let value = icm_value(data, model, &freqs)?;
    let mut metadata = BTreeMap::new();
    metadata.insert("c".to_string(), c);
    metadata.insert("draws".to_string(), draws as f64);
    TestStatistic::checked(TestKind::BierensIcm, value, metadata)
}

#[cfg(test)]
mod tests;
