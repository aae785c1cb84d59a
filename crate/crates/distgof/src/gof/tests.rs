use super::*;
use crate::families::{fit_mle, FamilySpec, FitOptions};
use crate::special::norm_cdf;
use crate::substream::substream;
use ndarray::Array2;
use proptest::prelude::*;
use rand_distr::StandardNormal;

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

fn model(spec: FamilySpec, theta: &[f64]) -> FittedModel {
    FittedModel {
        spec,
        theta_hat: theta.to_vec(),
        loglik: f64::NAN,
        converged: true,
        iterations: 0,
        gradient_norm: 0.0,
    }
}

/// Intercept-plus-slope dataset with Gaussian responses b0 + b1 x + sigma eps.
fn gaussian_data(n: usize, b: (f64, f64), sigma: f64, seed: u64) -> Dataset {
    let mut rng = substream(seed, 0);
    let mut rows = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        let eps: f64 = rng.sample(StandardNormal);
        rows.extend_from_slice(&[1.0, x]);
        y.push(b.0 + b.1 * x + sigma * eps);
    }
    Dataset::new(Array2::from_shape_vec((n, 2), rows).unwrap(), y, names(2))
        .unwrap()
        .mark_intercept(0)
        .unwrap()
}

fn poisson_data(n: usize, b: (f64, f64), seed: u64) -> Dataset {
    let truth = model(
        FamilySpec::canonical(FamilyKind::PoissonGlm, 2).unwrap(),
        &[b.0, b.1],
    );
    let mut rng = substream(seed, 0);
    let mut rows = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        let row = [1.0, x];
        y.push(truth.sample_response(&row, &mut rng).unwrap());
        rows.extend_from_slice(&row);
    }
    Dataset::new(Array2::from_shape_vec((n, 2), rows).unwrap(), y, names(2))
        .unwrap()
        .mark_intercept(0)
        .unwrap()
}

fn fit(spec: &FamilySpec, data: &Dataset) -> FittedModel {
    fit_mle(spec, data, &FitOptions::default()).unwrap()
}

/// Direct evaluation of α̃_n(t), one cdf call per observation.
fn brute_alpha(data: &Dataset, m: &FittedModel, t: f64) -> f64 {
    let n = data.n();
    let mut s = 0.0;
    for i in 0..n {
        let row: Vec<f64> = data.covariates.row(i).to_vec();
        let f = match data.trials.as_ref() {
            Some(tr) => m.cond_cdf_with_trials(t, &row, tr[i]).unwrap(),
            None => m.cond_cdf(t, &row).unwrap(),
        };
        let ind = if data.responses[i] <= t { 1.0 } else { 0.0 };
        s += ind - f;
    }
    s / (n as f64).sqrt()
}

#[test]
fn single_observation_process() {
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 1).unwrap();
    let m = model(spec, &[1.0, 1.0]);
    let data = Dataset::new(
        Array2::from_shape_vec((1, 1), vec![1.0]).unwrap(),
        vec![2.0],
        names(1),
    )
    .unwrap();
    // p = F(2 | mu=1, sigma=1) = Phi(1).
    let p = norm_cdf(1.0);
    let eval = new_process(&data, &m).unwrap();
    assert_eq!(eval.eval_points.len(), 4);
    assert_eq!(eval.values[0], 0.0);
    assert!((eval.values[1] - (-p)).abs() < 1e-14);
    assert!((eval.values[2] - (1.0 - p)).abs() < 1e-14);
    assert_eq!(eval.values[3], 0.0);
    assert!((eval.sup_norm - p.max(1.0 - p)).abs() < 1e-14);
    let ks = new_ks_statistic(&data, &m).unwrap();
    assert!((ks.value - eval.sup_norm).abs() < 1e-14);
}

#[test]
fn pooled_ecdf_model_cancels_exactly() {
    // An intercept-only Bernoulli fit reproduces the response ecdf: p-hat is
    // the sample mean, so the averaged model cdf equals the ecdf everywhere.
    let n = 10;
    let y: Vec<f64> = (0..n).map(|i| if i < 3 { 0.0 } else { 1.0 }).collect();
    let data = Dataset::new(
        Array2::from_shape_vec((n, 1), vec![1.0; n]).unwrap(),
        y,
        names(1),
    )
    .unwrap()
    .with_trials(vec![1; n])
    .unwrap();
    let spec = FamilySpec::canonical(FamilyKind::BinomialGlm, 1).unwrap();
    let m = fit(&spec, &data);
    let eval = new_process(&data, &m).unwrap();
    assert!(eval.sup_norm < 1e-8, "sup {}", eval.sup_norm);
    let cvm = new_cvm_statistic(&data, &m).unwrap();
    assert!(cvm.value < 1e-15, "cvm {}", cvm.value);
}

#[test]
fn continuous_sup_agrees_with_dense_grid_oracle() {
    let data = gaussian_data(80, (0.5, 1.0), 1.2, 21);
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let m = fit(&spec, &data);
    let eval = new_process(&data, &m).unwrap();

    // Stored values match the direct evaluation pointwise.
    for (t, v) in eval.eval_points.iter().zip(&eval.values) {
        if t.is_finite() {
            assert!(
                (brute_alpha(&data, &m, *t) - v).abs() < 1e-12,
                "pointwise mismatch at t={t}"
            );
        }
    }

    // 1e5-point grid over the response range, plus the jump set itself.
    let lo = data.responses.iter().cloned().fold(f64::MAX, f64::min) - 4.0;
    let hi = data.responses.iter().cloned().fold(f64::MIN, f64::max) + 4.0;
    let mut grid: Vec<f64> = (0..100_000)
        .map(|k| lo + (hi - lo) * k as f64 / 99_999.0)
        .collect();
    grid.extend(eval.eval_points.iter().filter(|t| t.is_finite()));
    let bf_sup = grid
        .iter()
        .map(|&t| brute_alpha(&data, &m, t).abs())
        .fold(0.0f64, f64::max);
    assert!(
        (bf_sup - eval.sup_norm).abs() < 1e-12,
        "grid sup {bf_sup} vs stored {}",
        eval.sup_norm
    );
    let ks = new_ks_statistic(&data, &m).unwrap();
    assert!((ks.value - eval.sup_norm).abs() < 1e-15);
}

#[test]
fn discrete_sup_agrees_with_dense_grid_oracle() {
    let data = poisson_data(60, (1.0, 0.4), 22);
    let spec = FamilySpec::canonical(FamilyKind::PoissonGlm, 2).unwrap();
    let m = fit(&spec, &data);
    let eval = new_process(&data, &m).unwrap();

    for (t, v) in eval.eval_points.iter().zip(&eval.values) {
        if t.is_finite() {
            assert!(
                (brute_alpha(&data, &m, *t) - v).abs() < 5e-10,
                "pointwise mismatch at t={t}"
            );
        }
    }
    let max_y = data.responses.iter().cloned().fold(0.0f64, f64::max) as i64;
    let mut grid: Vec<f64> = Vec::new();
    for k in -2..=(max_y + 5) {
        grid.push(k as f64);
        grid.push(k as f64 + 0.5);
    }
    let bf_sup = grid
        .iter()
        .map(|&t| brute_alpha(&data, &m, t).abs())
        .fold(0.0f64, f64::max);
    assert!(
        (bf_sup - eval.sup_norm).abs() < 1e-9,
        "grid sup {bf_sup} vs stored {}",
        eval.sup_norm
    );
    let ks = new_ks_statistic(&data, &m).unwrap();
    assert!((ks.value - eval.sup_norm).abs() < 1e-15);
}

#[test]
fn process_structure_invariants() {
    let cases: Vec<(Dataset, FittedModel)> = vec![
        {
            let d = gaussian_data(40, (0.0, 1.0), 1.0, 31);
            let m = fit(
                &FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap(),
                &d,
            );
            (d, m)
        },
        {
            let d = poisson_data(40, (0.8, 0.5), 32);
            let m = fit(&FamilySpec::canonical(FamilyKind::PoissonGlm, 2).unwrap(), &d);
            (d, m)
        },
    ];
    for (data, m) in cases {
        let eval = new_process(&data, &m).unwrap();
        assert_eq!(eval.eval_points.len(), eval.values.len());
        assert_eq!(eval.eval_points[0], f64::NEG_INFINITY);
        assert_eq!(*eval.eval_points.last().unwrap(), f64::INFINITY);
        assert_eq!(*eval.values.last().unwrap(), 0.0);
        for w in eval.eval_points.windows(2) {
            assert!(w[0] < w[1], "eval points not strictly sorted");
        }
        let max_abs = eval.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert_eq!(eval.sup_norm, max_abs);

        // Below the sample minimum the process is -mean model cdf (≤ 0).
        let min_y = data.responses.iter().cloned().fold(f64::MAX, f64::min);
        let t = min_y - 1.0;
        let mut mean_cdf = 0.0;
        for i in 0..data.n() {
            let row: Vec<f64> = data.covariates.row(i).to_vec();
            mean_cdf += m.cond_cdf(t, &row).unwrap();
        }
        let direct = brute_alpha(&data, &m, t);
        assert!(direct <= 0.0);
        assert!((direct + mean_cdf / (data.n() as f64).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn cvm_matches_trapezoid_oracle() {
    let data = gaussian_data(50, (0.2, 0.8), 1.0, 41);
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let m = fit(&spec, &data);
    let cvm = new_cvm_statistic(&data, &m).unwrap();

    let sigma = m.aux().unwrap();
    let lo = data.responses.iter().cloned().fold(f64::MAX, f64::min) - 8.0 * sigma;
    let hi = data.responses.iter().cloned().fold(f64::MIN, f64::max) + 8.0 * sigma;
    let grid_n = 100_000;
    let n_f = data.n() as f64;
    let mut sorted = data.responses.clone();
    sorted.sort_by(f64::total_cmp);
    // Uniform grid refined with the ecdf jump pairs, so the trapezoid rule
    // never straddles a discontinuity of the integrand.
    let mut grid: Vec<f64> = (0..grid_n)
        .map(|k| lo + (hi - lo) * k as f64 / (grid_n - 1) as f64)
        .collect();
    for &y in &sorted {
        grid.push(crate::special::next_down(y));
        grid.push(y);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut oracle = 0.0;
    let mut prev: Option<(f64, f64)> = None; // (integrand, fbar)
    for &t in &grid {
        let mut fbar = 0.0;
        for i in 0..data.n() {
            let row: Vec<f64> = data.covariates.row(i).to_vec();
            fbar += m.cond_cdf(t, &row).unwrap();
        }
        fbar /= n_f;
        let ecdf = sorted.partition_point(|&v| v <= t) as f64 / n_f;
        let g = n_f * (ecdf - fbar) * (ecdf - fbar);
        if let Some((g0, f0)) = prev {
            oracle += 0.5 * (g0 + g) * (fbar - f0);
        }
        prev = Some((g, fbar));
    }
    assert!(
        (cvm.value - oracle).abs() < 1e-6,
        "cvm {} vs trapezoid {oracle}",
        cvm.value
    );
}

#[test]
fn cvm_discrete_matches_atomic_oracle() {
    let data = poisson_data(40, (0.8, 0.4), 42);
    let spec = FamilySpec::canonical(FamilyKind::PoissonGlm, 2).unwrap();
    let m = fit(&spec, &data);
    let cvm = new_cvm_statistic(&data, &m).unwrap();

    let n_f = data.n() as f64;
    let max_y = data.responses.iter().cloned().fold(0.0f64, f64::max) as i64;
    let mut sorted = data.responses.clone();
    sorted.sort_by(f64::total_cmp);
    let mut oracle = 0.0;
    let mut cum = 0.0;
    for k in 0..=(max_y + 400) {
        let mut pbar = 0.0;
        for i in 0..data.n() {
            let row: Vec<f64> = data.covariates.row(i).to_vec();
            pbar += m.cond_density(k as f64, &row).unwrap();
        }
        pbar /= n_f;
        cum += pbar;
        let ecdf = sorted.partition_point(|&v| v <= k as f64) as f64 / n_f;
        let a = (ecdf - cum) * n_f.sqrt();
        oracle += a * a * pbar;
    }
    assert!(
        (cvm.value - oracle).abs() < 1e-10,
        "cvm {} vs atomic {oracle}",
        cvm.value
    );
}

#[test]
fn cvm_bounded_by_sup_squared() {
    for (data, spec) in [
        (
            gaussian_data(35, (0.1, 1.1), 0.9, 51),
            FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap(),
        ),
        (
            poisson_data(35, (1.1, 0.3), 52),
            FamilySpec::canonical(FamilyKind::PoissonGlm, 2).unwrap(),
        ),
    ] {
        let m = fit(&spec, &data);
        let ks = new_ks_statistic(&data, &m).unwrap();
        let cvm = new_cvm_statistic(&data, &m).unwrap();
        assert!(cvm.value >= 0.0);
        assert!(cvm.value <= ks.value * ks.value + 1e-12);
    }
}

#[test]
fn andrews_single_observation() {
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 1).unwrap();
    let m = model(spec, &[0.0, 1.0]);
    let data = Dataset::new(
        Array2::from_shape_vec((1, 1), vec![1.0]).unwrap(),
        vec![0.3],
        names(1),
    )
    .unwrap();
    let got = andrews_ck_statistic(&data, &m).unwrap();
    assert!((got.value - (1.0 - norm_cdf(0.3))).abs() < 1e-14);
}

#[test]
fn andrews_matches_double_loop_brute_force() {
    // Three columns: intercept plus two covariates, component-wise comparison
    // over the non-intercept pair.
    let n = 50;
    let mut rng = substream(61, 0);
    let mut rows = Vec::with_capacity(3 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.sample(StandardNormal);
        let x2: f64 = rng.sample(StandardNormal);
        let eps: f64 = rng.sample(StandardNormal);
        rows.extend_from_slice(&[1.0, x1, x2]);
        y.push(0.5 + x1 - 0.5 * x2 + eps);
    }
    let data = Dataset::new(Array2::from_shape_vec((n, 3), rows).unwrap(), y, names(3))
        .unwrap()
        .mark_intercept(0)
        .unwrap();
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 3).unwrap();
    let m = fit(&spec, &data);

    let mut best = 0.0f64;
    for j in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            let dominated = data.covariates[[i, 1]] <= data.covariates[[j, 1]]
                && data.covariates[[i, 2]] <= data.covariates[[j, 2]];
            if !dominated {
                continue;
            }
            let row: Vec<f64> = data.covariates.row(i).to_vec();
            let f = m.cond_cdf(data.responses[j], &row).unwrap();
            let ind = if data.responses[i] <= data.responses[j] {
                1.0
            } else {
                0.0
            };
            s += ind - f;
        }
        best = best.max(s.abs());
    }
    let brute = best / (n as f64).sqrt();
    let got = andrews_ck_statistic(&data, &m).unwrap();
    assert!(
        (got.value - brute).abs() < 1e-12,
        "impl {} vs brute {brute}",
        got.value
    );
}

#[test]
fn andrews_collapses_on_antichains() {
    // First coordinate increasing, second decreasing: no pair is comparable,
    // so each ν_n(Y_j, X_j) keeps only its own term.
    for seed in 0..10 {
        let n = 40;
        let mut rng = substream(70 + seed, 0);
        let mut rows = Vec::with_capacity(3 * n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let eps: f64 = rng.sample(StandardNormal);
            let jitter: f64 = rng.random::<f64>() * 0.4;
            let x1 = i as f64 + jitter;
            let x2 = -(i as f64) - rng.random::<f64>() * 0.4;
            rows.extend_from_slice(&[1.0, x1, x2]);
            y.push(0.3 + 0.1 * x1 + 0.05 * x2 + eps);
        }
        let data = Dataset::new(Array2::from_shape_vec((n, 3), rows).unwrap(), y, names(3))
            .unwrap()
            .mark_intercept(0)
            .unwrap();
        let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 3).unwrap();
        let m = fit(&spec, &data);
        let got = andrews_ck_statistic(&data, &m).unwrap();
        assert!(
            got.value <= 1.0 / (n as f64).sqrt() + 1e-12,
            "antichain statistic {} exceeds 1/sqrt(n)",
            got.value
        );
    }
}

#[test]
fn dikta_zero_marks_give_zero() {
    let n = 20;
    let mut rows = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let x = i as f64 / 7.0 - 1.0;
        rows.extend_from_slice(&[1.0, x]);
        y.push(2.0 + 3.0 * x);
    }
    let data = Dataset::new(Array2::from_shape_vec((n, 2), rows).unwrap(), y, names(2)).unwrap();
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let m = model(spec, &[2.0, 3.0, 1.0]);
    let got = dikta_mep_statistic(&data, &m).unwrap();
    assert_eq!(got.value, 0.0);
}

#[test]
fn dikta_fitted_gaussian_residuals_sum_to_zero() {
    let data = gaussian_data(60, (1.0, -0.7), 1.3, 81);
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let m = fit(&spec, &data);
    // At the largest threshold every mark enters; the normal equations force
    // the sum of residuals to zero.
    let total: f64 = (0..data.n())
        .map(|i| {
            let row: Vec<f64> = data.covariates.row(i).to_vec();
            data.responses[i] - m.conditional_mean(&row).unwrap()
        })
        .sum();
    assert!(total.abs() / (data.n() as f64).sqrt() < 1e-8);
    let got = dikta_mep_statistic(&data, &m).unwrap();
    assert!(got.value.is_finite() && got.value >= 0.0);
}

#[test]
#[allow(clippy::needless_range_loop)] // indexed loops transcribe the double sums
fn dikta_matches_brute_force_with_ties() {
    // Duplicate covariate rows create tied thresholds.
    let base = poisson_data(35, (0.9, 0.6), 82);
    let n = 50;
    let mut rows = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let src = i % 35;
        rows.push(base.covariates[[src, 0]]);
        rows.push(base.covariates[[src, 1]]);
        y.push(base.responses[src].max(i as f64 % 3.0));
    }
    let data = Dataset::new(Array2::from_shape_vec((n, 2), rows).unwrap(), y, names(2)).unwrap();
    let spec = FamilySpec::canonical(FamilyKind::PoissonGlm, 2).unwrap();
    let m = fit(&spec, &data);

    let etas: Vec<f64> = (0..n)
        .map(|i| {
            let row = data.covariates.row(i);
            m.coeffs().iter().zip(row.iter()).map(|(b, v)| b * v).sum()
        })
        .collect();
    let mut brute = 0.0f64;
    for u in &etas {
        let mut s = 0.0;
        for i in 0..n {
            if etas[i] <= *u {
                let row: Vec<f64> = data.covariates.row(i).to_vec();
                s += data.responses[i] - m.conditional_mean(&row).unwrap();
            }
        }
        brute = brute.max(s.abs());
    }
    let brute = brute / (n as f64).sqrt();
    let got = dikta_mep_statistic(&data, &m).unwrap();
    assert!(
        (got.value - brute).abs() < 1e-12,
        "impl {} vs brute {brute}",
        got.value
    );
}

#[test]
#[allow(clippy::needless_range_loop)] // indexed loops transcribe the double sums
fn dikta_uses_log_scale_marks_for_log_gaussian() {
    let n = 30;
    let mut rng = substream(83, 0);
    let mut rows = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        let eps: f64 = rng.sample(StandardNormal);
        rows.extend_from_slice(&[1.0, x]);
        y.push((0.4 + 0.9 * x + 0.5 * eps).exp());
    }
    let data = Dataset::new(Array2::from_shape_vec((n, 2), rows).unwrap(), y, names(2)).unwrap();
    let spec = FamilySpec::canonical(FamilyKind::LogGaussianLinear, 2).unwrap();
    let m = fit(&spec, &data);

    let etas: Vec<f64> = (0..n)
        .map(|i| {
            let row = data.covariates.row(i);
            m.coeffs().iter().zip(row.iter()).map(|(b, v)| b * v).sum()
        })
        .collect();
    let mut brute = 0.0f64;
    for u in &etas {
        let mut s = 0.0;
        for i in 0..n {
            if etas[i] <= *u {
                s += data.responses[i].ln() - etas[i];
            }
        }
        brute = brute.max(s.abs());
    }
    let brute = brute / (n as f64).sqrt();
    let got = dikta_mep_statistic(&data, &m).unwrap();
    assert!((got.value - brute).abs() < 1e-12);

    // Exact log-linear responses give zero marks, up to ln(exp(z)) rounding.
    let y0: Vec<f64> = (0..n)
        .map(|i| (0.4 + 0.9 * data.covariates[[i, 1]]).exp())
        .collect();
    let exact = Dataset::new(data.covariates.clone(), y0, names(2)).unwrap();
    let m0 = model(spec, &[0.4, 0.9, 0.5]);
    assert!(dikta_mep_statistic(&exact, &m0).unwrap().value < 1e-13);
}

#[test]
fn icm_zero_frequency_is_zero() {
    let data = gaussian_data(12, (0.3, 0.5), 1.0, 91);
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let m = fit(&spec, &data);
    let freqs = IcmFrequencies {
        taus: vec![0.0],
        xis: vec![vec![0.0]],
    };
    assert_eq!(icm_value(&data, &m, &freqs).unwrap(), 0.0);
}

#[test]
fn icm_respects_modulus_bound() {
    let data = gaussian_data(30, (0.1, 0.9), 1.1, 92);
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let m = fit(&spec, &data);
    let mut rng = substream(92, 1);
    let got = bierens_icm_statistic(&data, &m, 5.0, 64, &mut rng).unwrap();
    // |Z| ≤ 2 sqrt(n) because each summand has modulus at most 2.
    assert!(got.value <= 4.0 * data.n() as f64 + 1e-9);
    assert_eq!(got.metadata["c"], 5.0);
    assert_eq!(got.metadata["draws"], 64.0);
}

#[test]
fn gaussian_char_fn_matches_quadrature() {
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let m = model(spec, &[0.7, 0.0, 1.2]);
    let x = [1.0, 0.0];
    let tau = 1.0;
    let (mu, sigma) = (0.7, 1.2);
    let (a, b, steps) = (mu - 12.0 * sigma, mu + 12.0 * sigma, 200_000);
    let h = (b - a) / steps as f64;
    let mut direct = Complex64::new(0.0, 0.0);
    for k in 0..=steps {
        let yv = a + h * k as f64;
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        direct += w * h * Complex64::from_polar(m.cond_density(yv, &x).unwrap(), tau * yv);
    }
    let closed = m.char_fn(tau, &x).unwrap();
    assert!((closed - direct).norm() < 1e-6);
}

#[test]
fn icm_matches_inline_reimplementation() {
    let n = 7;
    let mut rng = substream(93, 0);
    let mut rows = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        rows.extend_from_slice(&[1.0, x]);
        y.push(rng.sample::<f64, _>(StandardNormal) * 1.4 + 0.2);
    }
    let data = Dataset::new(Array2::from_shape_vec((n, 2), rows).unwrap(), y, names(2))
        .unwrap()
        .mark_intercept(0)
        .unwrap();
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let m = model(spec, &[0.2, 0.4, 1.4]);
    let freqs = IcmFrequencies {
        taus: vec![0.8, -1.7, 2.4],
        xis: vec![vec![0.5], vec![-2.0], vec![0.0]],
    };
    let got = icm_value(&data, &m, &freqs).unwrap();

    let mut expect = 0.0;
    for (tau, xi) in freqs.taus.iter().zip(&freqs.xis) {
        let mut z = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let mu = 0.2 + 0.4 * data.covariates[[j, 1]];
            let cf = Complex64::new(-0.5 * tau * tau * 1.4 * 1.4, tau * mu).exp();
            let phase = xi[0] * data.covariates[[j, 1]];
            z += (Complex64::from_polar(1.0, tau * data.responses[j]) - cf)
                * Complex64::from_polar(1.0, phase);
        }
        expect += (z / (n as f64).sqrt()).norm_sqr();
    }
    expect /= freqs.taus.len() as f64;
    assert!((got - expect).abs() < 1e-12, "impl {got} vs inline {expect}");
}

#[test]
fn icm_is_deterministic_given_stream() {
    let data = poisson_data(25, (0.7, 0.5), 94);
    let spec = FamilySpec::canonical(FamilyKind::PoissonGlm, 2).unwrap();
    let m = fit(&spec, &data);
    let a = bierens_icm_statistic(&data, &m, 5.0, 32, &mut substream(7, 0)).unwrap();
    let b = bierens_icm_statistic(&data, &m, 5.0, 32, &mut substream(7, 0)).unwrap();
    let c = bierens_icm_statistic(&data, &m, 5.0, 32, &mut substream(8, 0)).unwrap();
    assert_eq!(a.value, b.value);
    assert_ne!(a.value, c.value);
}

#[test]
fn icm_rejects_invalid_settings_and_families() {
    let data = gaussian_data(10, (0.0, 1.0), 1.0, 95);
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let m = fit(&spec, &data);
    let mut rng = substream(95, 0);
    assert!(matches!(
        bierens_icm_statistic(&data, &m, 0.0, 16, &mut rng),
        Err(Error::InvalidConfig(_))
    ));
    assert!(matches!(
        bierens_icm_statistic(&data, &m, 5.0, 0, &mut rng),
        Err(Error::InvalidConfig(_))
    ));

    let lg_spec = FamilySpec::canonical(FamilyKind::LogGaussianLinear, 2).unwrap();
    let lg = model(lg_spec, &[0.0, 1.0, 1.0]);
    let positive: Vec<f64> = data.responses.iter().map(|v| v.abs() + 0.1).collect();
    let lg_data = Dataset::new(data.covariates.clone(), positive, names(2)).unwrap();
    assert!(matches!(
        bierens_icm_statistic(&lg_data, &lg, 5.0, 16, &mut rng),
        Err(Error::UnsupportedFamily { .. })
    ));
}

#[test]
fn gaussian_affine_equivariance() {
    let data = gaussian_data(60, (0.5, 1.2), 1.0, 96);
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let tight = FitOptions {
        gradient_tol: 1e-12,
        ..FitOptions::default()
    };
    let m1 = fit_mle(&spec, &data, &tight).unwrap();
    let ks1 = new_ks_statistic(&data, &m1).unwrap();
    let cvm1 = new_cvm_statistic(&data, &m1).unwrap();

    // y ↦ a y + b'x with a > 0 and b in the intercept direction, so b'x is
    // the same shift for every row. The family is closed under the map and
    // the pooled evaluation points transform uniformly; a slope-dependent
    // shift would re-pool the process and genuinely change the statistic.
    let (a, b0) = (2.5, 1.0);
    let y2: Vec<f64> = (0..data.n())
        .map(|i| a * data.responses[i] + b0 * data.covariates[[i, 0]])
        .collect();
    let data2 = Dataset::new(data.covariates.clone(), y2, names(2)).unwrap();
    let m2 = fit_mle(&spec, &data2, &tight).unwrap();
    let ks2 = new_ks_statistic(&data2, &m2).unwrap();
    let cvm2 = new_cvm_statistic(&data2, &m2).unwrap();

    assert!(
        (ks1.value - ks2.value).abs() < 1e-10,
        "KS changed under affine map: {} vs {}",
        ks1.value,
        ks2.value
    );
    assert!((cvm1.value - cvm2.value).abs() < 1e-10);
}

#[test]
fn discrete_jumps_match_mass_differences() {
    let data = poisson_data(50, (1.0, 0.5), 97);
    let spec = FamilySpec::canonical(FamilyKind::PoissonGlm, 2).unwrap();
    let m = fit(&spec, &data);
    let eval = new_process(&data, &m).unwrap();
    let n_f = data.n() as f64;

    let (ys, _) = distinct_ecdf(&data.responses);
    for &t in &ys {
        // Stored value at t minus stored value at t⁻.
        let at = eval.eval_points.partition_point(|&v| v < t);
        assert_eq!(eval.eval_points[at], t);
        let jump = eval.values[at] - eval.values[at - 1];
        let mut mass = 0.0;
        for i in 0..data.n() {
            let row: Vec<f64> = data.covariates.row(i).to_vec();
            mass += m.cond_density(t, &row).unwrap();
        }
        let count = data.responses.iter().filter(|&&v| v == t).count() as f64;
        let expect = (count - mass) / n_f.sqrt();
        assert!(
            (jump - expect).abs() < 1e-10,
            "jump at t={t}: {jump} vs {expect}"
        );
        // The same identity through direct evaluation at t and t - 0.5.
        let direct = brute_alpha(&data, &m, t) - brute_alpha(&data, &m, t - 0.5);
        assert!((direct - expect).abs() < 1e-10);
    }
}

#[test]
fn all_statistics_nonnegative_and_finite() {
    let data = gaussian_data(40, (0.3, 0.9), 1.0, 98);
    let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
    let m = fit(&spec, &data);
    let stats = [
        new_ks_statistic(&data, &m).unwrap(),
        new_cvm_statistic(&data, &m).unwrap(),
        andrews_ck_statistic(&data, &m).unwrap(),
        dikta_mep_statistic(&data, &m).unwrap(),
        bierens_icm_statistic(&data, &m, 5.0, 32, &mut substream(98, 0)).unwrap(),
    ];
    for (s, kind) in stats.iter().zip(TestKind::ALL) {
        assert_eq!(s.test_kind, kind);
        assert!(s.value.is_finite() && s.value >= 0.0);
    }
}

#[test]
fn test_kind_names_round_trip() {
    for kind in TestKind::ALL {
        assert_eq!(kind.name().parse::<TestKind>().unwrap(), kind);
        let json = serde_json::to_string(&kind).unwrap();
        assert_eq!(json, format!("\"{kind}\""));
    }
    assert!(matches!(
        "chisq".parse::<TestKind>(),
        Err(Error::UnknownTest(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gaussian_sup_matches_brute_force(
        n in 3usize..20,
        b0 in -1.0f64..1.0,
        b1 in -1.0f64..1.0,
        sigma in 0.5f64..2.5,
        seed in 0u64..5000,
        probe in -4.0f64..4.0,
    ) {
        let data = gaussian_data(n, (0.0, 1.0), 1.0, seed);
        let spec = FamilySpec::canonical(FamilyKind::GaussianLinear, 2).unwrap();
        let m = model(spec, &[b0, b1, sigma]);
        let eval = new_process(&data, &m).unwrap();
        for (t, v) in eval.eval_points.iter().zip(&eval.values) {
            if t.is_finite() {
                prop_assert!((brute_alpha(&data, &m, *t) - v).abs() < 1e-12);
            }
        }
        // No point beats the stored supremum.
        prop_assert!(brute_alpha(&data, &m, probe).abs() <= eval.sup_norm + 1e-12);
        let cvm = new_cvm_statistic(&data, &m).unwrap();
        prop_assert!(cvm.value <= eval.sup_norm * eval.sup_norm + 1e-12);
    }

    #[test]
    fn poisson_sup_matches_brute_force(
        n in 3usize..20,
        b0 in -0.5f64..1.2,
        b1 in -0.6f64..0.6,
        seed in 0u64..5000,
        probe in -2.0f64..25.0,
    ) {
        let data = poisson_data(n, (b0, b1), seed);
        let spec = FamilySpec::canonical(FamilyKind::PoissonGlm, 2).unwrap();
        let m = model(spec, &[b0, b1]);
        let eval = new_process(&data, &m).unwrap();
        for (t, v) in eval.eval_points.iter().zip(&eval.values) {
            if t.is_finite() {
                prop_assert!((brute_alpha(&data, &m, *t) - v).abs() < 1e-9);
            }
        }
        prop_assert!(brute_alpha(&data, &m, probe).abs() <= eval.sup_norm + 1e-9);
    }
}
