//! Maximum-likelihood fitting by Fisher scoring.
//!
//! Each family supplies an analytic score and information matrix on the
//! working scale (coefficients plus the log of any auxiliary parameter, so the
//! iteration is unconstrained). Steps are damped by halving until the
//! log-likelihood does not decrease; convergence is a sup-norm gradient test,
//! backed by a scale-aware stop for data whose score cancellation floor sits
//! above the absolute tolerance (count means of order 1e5 and beyond).

use crate::error::{Error, Result};
use crate::special::{ln_choose, softplus, trigamma};
use ndarray::{Array1, Array2};
use statrs::function::gamma::{digamma, ln_gamma};

use super::{Dataset, FamilyKind, FamilySpec, FittedModel, Link};

/// Tolerances and limits for `fit_mle`; `init` is a warm start on the natural
/// parameter scale (coefficients, then positive auxiliary parameter).
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub gradient_tol: f64,
    pub max_iterations: usize,
    pub init: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-8,
            max_iterations: 100,
            init: None,
        }
    }
}

/// Fit the family by maximum likelihood.
pub fn fit_mle(spec: &FamilySpec, data: &Dataset, options: &FitOptions) -> Result<FittedModel> {
    if data.p() != spec.n_coeffs() {
        return Err(Error::InvalidSpec(format!(
            "spec expects {} coefficients, dataset has {} columns",
            spec.n_coeffs(),
            data.p()
        )));
    }
    validate_support(spec, data)?;

    let q = spec.parameter_dimension;
    let mut phi = match &options.init {
        Some(theta) => {
            if theta.len() != q {
                return Err(Error::InvalidSpec(format!(
                    "warm start has length {}, parameter dimension is {q}",
                    theta.len()
                )));
            }
            let mut phi = theta.clone();
            if spec.has_aux() {
                if theta[q - 1] <= 0.0 || !theta[q - 1].is_finite() {
                    return Err(Error::InvalidSpec(
                        "warm-start auxiliary parameter must be positive".into(),
                    ));
                }
                phi[q - 1] = theta[q - 1].ln();
            }
            phi
        }
        None => init_phi(spec, data)?,
    };

    let mut iterations = 0;
    let mut best_gnorm = f64::INFINITY;
    let mut stalled = 0usize;
    loop {
        let (ll, score, info) = eval_all(spec, data, &phi)?;
        let gnorm = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if gnorm <= options.gradient_tol {
            return Ok(finish(spec, phi, ll, iterations, gnorm));
        }
        if gnorm < 0.5 * best_gnorm {
            stalled = 0;
        } else {
            stalled += 1;
        }
        best_gnorm = best_gnorm.min(gnorm);
        if iterations >= options.max_iterations {
            return Err(Error::NotConverged {
                iterations,
                gradient_norm: gnorm,
                last_iterate: to_natural(spec, &phi),
            });
        }
        let delta = solve(info, score.to_vec())?;
        // With means of order 1e5 the score's cancellation floor exceeds the
        // absolute tolerance. Once contraction has stalled and the quadratic
        // model predicts a log-likelihood gain below f64 evaluation noise,
        // the iterate is the maximum to machine precision.
        let predicted_gain = 0.5 * score.iter().zip(&delta).map(|(g, d)| g * d).sum::<f64>();
        if stalled >= 5 && predicted_gain.abs() <= 32.0 * f64::EPSILON * (1.0 + ll.abs()) {
            return Ok(finish(spec, phi, ll, iterations, gnorm));
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = phi
                .iter()
                .zip(&delta)
                .map(|(p, d)| p + lambda * d)
                .collect();
            let ll_cand = loglik_working(spec, data, &cand);
            if ll_cand.is_finite() && ll_cand >= ll - 1e-12 * (1.0 + ll.abs()) {
                phi = cand;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // No admissible step; a further pass will stop at max_iterations
            // with a non-convergence diagnostic unless the gradient test passes.
            continue;
        }
    }
}

/// Sample log-likelihood at a parameter vector on the natural scale.
pub fn log_likelihood(spec: &FamilySpec, data: &Dataset, theta: &[f64]) -> Result<f64> {
    if theta.len() != spec.parameter_dimension {
        return Err(Error::InvalidSpec(format!(
            "theta has length {}, parameter dimension is {}",
            theta.len(),
            spec.parameter_dimension
        )));
    }
    if data.p() != spec.n_coeffs() {
        return Err(Error::InvalidSpec(format!(
            "spec expects {} coefficients, dataset has {} columns",
            spec.n_coeffs(),
            data.p()
        )));
    }
    validate_support(spec, data)?;
    let mut phi = theta.to_vec();
    if spec.has_aux() {
        let aux = theta[theta.len() - 1];
        if aux <= 0.0 || !aux.is_finite() {
            return Err(Error::InvalidSpec(
                "auxiliary parameter must be positive".into(),
            ));
        }
        let last = phi.len() - 1;
        phi[last] = aux.ln();
    }
    Ok(loglik_working(spec, data, &phi))
}

fn finish(spec: &FamilySpec, phi: Vec<f64>, ll: f64, iterations: usize, gnorm: f64) -> FittedModel {
    FittedModel {
        spec: *spec,
        theta_hat: to_natural(spec, &phi),
        loglik: ll,
        converged: true,
        iterations,
        gradient_norm: gnorm,
    }
}

fn to_natural(spec: &FamilySpec, phi: &[f64]) -> Vec<f64> {
    let mut theta = phi.to_vec();
    if spec.has_aux() {
        let last = theta.len() - 1;
        theta[last] = theta[last].exp();
    }
    theta
}

fn validate_support(spec: &FamilySpec, data: &Dataset) -> Result<()> {
    let fam = spec.kind.name();
    let outside = |row: usize, value: f64| Error::ResponseOutsideSupport {
        family: fam.to_string(),
        row,
        value,
    };
    match spec.kind {
        FamilyKind::GaussianLinear => {}
        FamilyKind::LogGaussianLinear | FamilyKind::GammaGlm => {
            for (i, &y) in data.responses.iter().enumerate() {
                if y <= 0.0 {
                    return Err(outside(i, y));
                }
            }
        }
        FamilyKind::PoissonGlm | FamilyKind::NegBinGlm => {
            for (i, &y) in data.responses.iter().enumerate() {
                if y < 0.0 || y.fract() != 0.0 {
                    return Err(outside(i, y));
                }
            }
        }
        FamilyKind::BinomialGlm => {
            let trials = data.trials.as_ref().ok_or_else(|| {
                Error::InvalidSpec("binomial_glm needs per-row trial counts".into())
            })?;
            for (i, &y) in data.responses.iter().enumerate() {
                if y < 0.0 || y.fract() != 0.0 || y > trials[i] as f64 {
                    return Err(outside(i, y));
                }
            }
        }
    }
    Ok(())
}

/// Solve a symmetric positive (semi)definite system by Gaussian elimination
/// with partial pivoting; near-zero pivots surface as rank deficiency.
fn solve(mut a: Array2<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let q = b.len();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..q {
        let mut pivot_row = col;
        for r in col + 1..q {
            if a[[r, col]].abs() > a[[pivot_row, col]].abs() {
                pivot_row = r;
            }
        }
        if a[[pivot_row, col]].abs() <= 1e-12 * scale {
            return Err(Error::RankDeficient(format!(
                "information matrix is singular at column {col}"
            )));
        }
        if pivot_row != col {
            for c in 0..q {
                let tmp = a[[col, c]];
                a[[col, c]] = a[[pivot_row, c]];
                a[[pivot_row, c]] = tmp;
            }
            b.swap(col, pivot_row);
        }
        for r in col + 1..q {
            let f = a[[r, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for c in col..q {
                a[[r, c]] -= f * a[[col, c]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; q];
    for row in (0..q).rev() {
        let mut s = b[row];
        for c in row + 1..q {
            s -= a[[row, c]] * x[c];
        }
        x[row] = s / a[[row, row]];
    }
    Ok(x)
}

/// Least-squares coefficients for a working response, via normal equations.
fn least_squares(data: &Dataset, z: &[f64]) -> Result<Vec<f64>> {
    let x = &data.covariates;
    let p = x.ncols();
    let mut xtx = Array2::zeros((p, p));
    let mut xtz = vec![0.0; p];
    for (i, zi) in z.iter().enumerate() {
        let row = x.row(i);
        for a in 0..p {
            xtz[a] += row[a] * zi;
            for b in a..p {
                xtx[[a, b]] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[[a, b]] = xtx[[b, a]];
        }
    }
    solve(xtx, xtz).map_err(|_| Error::RankDeficient("design matrix is rank deficient".into()))
}

fn etas(data: &Dataset, beta: &[f64]) -> Vec<f64> {
    data.covariates
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(beta).map(|(v, b)| v * b).sum())
        .collect()
}

fn init_phi(spec: &FamilySpec, data: &Dataset) -> Result<Vec<f64>> {
    let n = data.n() as f64;
    let y = &data.responses;
    match spec.kind {
        FamilyKind::GaussianLinear | FamilyKind::LogGaussianLinear => {
            let z: Vec<f64> = if spec.kind == FamilyKind::GaussianLinear {
                y.clone()
            } else {
                y.iter().map(|v| v.ln()).collect()
            };
            let beta = least_squares(data, &z)?;
            let eta = etas(data, &beta);
            let rss: f64 = z.iter().zip(&eta).map(|(v, e)| (v - e) * (v - e)).sum();
            let scale: f64 = z.iter().map(|v| v * v).sum::<f64>() / n;
            if rss / n <= 1e-20 * scale.max(1e-300) {
                return Err(Error::DegenerateModel(
                    "residual variance is zero; sigma lies outside the parameter space".into(),
                ));
            }
            let mut phi = beta;
            phi.push(0.5 * (rss / n).ln());
            Ok(phi)
        }
        FamilyKind::PoissonGlm => {
            let z: Vec<f64> = y.iter().map(|v| v.max(0.5).ln()).collect();
            least_squares(data, &z)
        }
        FamilyKind::NegBinGlm => {
            let z: Vec<f64> = y.iter().map(|v| v.max(0.5).ln()).collect();
            let beta = least_squares(data, &z)?;
            let mu: Vec<f64> = etas(data, &beta).iter().map(|e| e.exp()).collect();
            let mu2: f64 = mu.iter().map(|m| m * m).sum();
            let excess: f64 = y
                .iter()
                .zip(&mu)
                .map(|(v, m)| (v - m) * (v - m) - m)
                .sum();
            let r0 = if excess > mu2 / 1e6 {
                (mu2 / excess).clamp(1e-3, 1e6)
            } else {
                // No visible overdispersion; start near the Poisson limit.
                1e4
            };
            let mut phi = beta;
            phi.push(r0.ln());
            Ok(phi)
        }
        FamilyKind::GammaGlm => {
            let (beta, mu) = match spec.link {
                Link::Log => {
                    let z: Vec<f64> = y.iter().map(|v| v.ln()).collect();
                    let beta = least_squares(data, &z)?;
                    let mu: Vec<f64> = etas(data, &beta).iter().map(|e| e.exp()).collect();
                    (beta, mu)
                }
                Link::Identity => {
                    let mut beta = least_squares(data, y)?;
                    // Identity link: damp toward an intercept-only mean until
                    // every fitted mean is positive.
                    let ic = data.intercept_column;
                    let mut mu = etas(data, &beta);
                    let mut tries = 0;
                    while mu.iter().any(|&m| m <= 0.0) {
                        let Some(ic) = ic else {
                            return Err(Error::InvalidSpec(
                                "identity-link gamma needs positive initial means; add an intercept column".into(),
                            ));
                        };
                        if tries >= 60 {
                            return Err(Error::NotConverged {
                                iterations: 0,
                                gradient_norm: f64::INFINITY,
                                last_iterate: beta.clone(),
                            });
                        }
                        let ybar = y.iter().sum::<f64>() / n;
                        for (j, b) in beta.iter_mut().enumerate() {
                            let target = if j == ic { ybar } else { 0.0 };
                            *b = 0.5 * *b + 0.5 * target;
                        }
                        mu = etas(data, &beta);
                        tries += 1;
                    }
                    (beta, mu)
                }
                Link::Logit => unreachable!("spec validation rejects logit gamma"),
            };
            let pearson: f64 = y
                .iter()
                .zip(&mu)
                .map(|(v, m)| ((v - m) / m) * ((v - m) / m))
                .sum();
            let k0 = if pearson > 0.0 {
                (n / pearson).clamp(1e-3, 1e6)
            } else {
                1e6
            };
            let mut phi = beta;
            phi.push(k0.ln());
            Ok(phi)
        }
        FamilyKind::BinomialGlm => {
            let trials = data.trials.as_ref().expect("validated earlier");
            let z: Vec<f64> = y
                .iter()
                .zip(trials)
                .map(|(v, &t)| ((v + 0.5) / (t as f64 - v + 0.5)).ln())
                .collect();
            least_squares(data, &z)
        }
    }
}

/// Log-likelihood on the working scale; -inf marks an inadmissible iterate.
fn loglik_working(spec: &FamilySpec, data: &Dataset, phi: &[f64]) -> f64 {
    let p = spec.n_coeffs();
    let beta = &phi[..p];
    let eta = etas(data, beta);
    let y = &data.responses;
    let n = data.n() as f64;
    match spec.kind {
        FamilyKind::GaussianLinear | FamilyKind::LogGaussianLinear => {
            let t = phi[p];
            let sigma2 = (2.0 * t).exp();
            let (rss, jac) = if spec.kind == FamilyKind::GaussianLinear {
                let rss = y
                    .iter()
                    .zip(&eta)
                    .map(|(v, e)| (v - e) * (v - e))
                    .sum::<f64>();
                (rss, 0.0)
            } else {
                let mut rss = 0.0;
                let mut jac = 0.0;
                for (v, e) in y.iter().zip(&eta) {
                    let z = v.ln();
                    rss += (z - e) * (z - e);
                    jac -= z;
                }
                (rss, jac)
            };
            -0.5 * n * (2.0 * std::f64::consts::PI).ln() - n * t - rss / (2.0 * sigma2) + jac
        }
        FamilyKind::PoissonGlm => y
            .iter()
            .zip(&eta)
            .map(|(v, e)| v * e - e.exp() - ln_gamma(v + 1.0))
            .sum(),
        FamilyKind::GammaGlm => {
            let k = phi[p].exp();
            let mut ll = n * (k * k.ln() - ln_gamma(k));
            for (v, e) in y.iter().zip(&eta) {
                let mu = match spec.link {
                    Link::Log => e.exp(),
                    _ => *e,
                };
                if mu <= 0.0 || !mu.is_finite() {
                    return f64::NEG_INFINITY;
                }
                ll += (k - 1.0) * v.ln() - k * mu.ln() - k * v / mu;
            }
            ll
        }
        FamilyKind::NegBinGlm => {
            let r = phi[p].exp();
            if !r.is_finite() || r <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let mut ll = -n * ln_gamma(r);
            for (v, e) in y.iter().zip(&eta) {
                let mu = e.exp();
                if !mu.is_finite() {
                    return f64::NEG_INFINITY;
                }
                let denom = (r + mu).ln();
                ll += ln_gamma(v + r) - ln_gamma(v + 1.0)
                    + r * (r.ln() - denom)
                    + v * (mu.ln() - denom);
            }
            ll
        }
        FamilyKind::BinomialGlm => {
            let trials = data.trials.as_ref().expect("validated earlier");
            y.iter()
                .zip(&eta)
                .zip(trials)
                .map(|((v, e), &t)| {
                    let t = t as f64;
                    ln_choose(t, *v) - v * softplus(-e) - (t - v) * softplus(*e)
                })
                .sum()
        }
    }
}

/// Log-likelihood, score, and information matrix on the working scale.
#[allow(clippy::type_complexity)]
fn eval_all(
    spec: &FamilySpec,
    data: &Dataset,
    phi: &[f64],
) -> Result<(f64, Array1<f64>, Array2<f64>)> {
    let p = spec.n_coeffs();
    let q = spec.parameter_dimension;
    let x = &data.covariates;
    let y = &data.responses;
    let n = data.n() as f64;
    let beta = &phi[..p];
    let eta = etas(data, beta);

    let mut score = Array1::zeros(q);
    let mut info = Array2::zeros((q, q));
    let ll = loglik_working(spec, data, phi);
    if !ll.is_finite() {
        return Err(Error::NumericRange(
            "log-likelihood is not finite at the current iterate".into(),
        ));
    }

    // Adds w * x_i x_i' to the coefficient block.
    let add_outer = |info: &mut Array2<f64>, i: usize, w: f64| {
        let row = x.row(i);
        for a in 0..p {
            let wa = w * row[a];
            for b in a..p {
                info[[a, b]] += wa * row[b];
            }
        }
    };
    let add_score = |score: &mut Array1<f64>, i: usize, w: f64| {
        let row = x.row(i);
        for a in 0..p {
            score[a] += w * row[a];
        }
    };

    match spec.kind {
        FamilyKind::GaussianLinear | FamilyKind::LogGaussianLinear => {
            let t = phi[p];
            let sigma2 = (2.0 * t).exp();
            let mut rss = 0.0;
            for i in 0..data.n() {
                let z = if spec.kind == FamilyKind::GaussianLinear {
                    y[i]
                } else {
                    y[i].ln()
                };
                let r = z - eta[i];
                rss += r * r;
                add_score(&mut score, i, r / sigma2);
                add_outer(&mut info, i, 1.0 / sigma2);
            }
            score[p] = -n + rss / sigma2;
            info[[p, p]] = 2.0 * n;
        }
        FamilyKind::PoissonGlm => {
            for i in 0..data.n() {
                let lam = eta[i].exp();
                add_score(&mut score, i, y[i] - lam);
                add_outer(&mut info, i, lam);
            }
        }
        FamilyKind::GammaGlm => {
            let k = phi[p].exp();
            let mut score_k = 0.0;
            for i in 0..data.n() {
                let (mu, w_score, w_info) = match spec.link {
                    Link::Log => {
                        let mu = eta[i].exp();
                        (mu, k * (y[i] - mu) / mu, k)
                    }
                    _ => {
                        let mu = eta[i];
                        (mu, k * (y[i] - mu) / (mu * mu), k / (mu * mu))
                    }
                };
                add_score(&mut score, i, w_score);
                add_outer(&mut info, i, w_info);
                score_k += k.ln() + 1.0 - mu.ln() - digamma(k) + y[i].ln() - y[i] / mu;
            }
            score[p] = k * score_k;
            info[[p, p]] = k * k * n * (trigamma(k) - 1.0 / k);
        }
        FamilyKind::NegBinGlm => {
            let r = phi[p].exp();
            let mut d1 = 0.0;
            let mut nd2 = 0.0;
            for i in 0..data.n() {
                let mu = eta[i].exp();
                let rm = r + mu;
                add_score(&mut score, i, (y[i] - mu) * r / rm);
                add_outer(&mut info, i, mu * r / rm);
                d1 += digamma(y[i] + r) - digamma(r) + (r / rm).ln() + (mu - y[i]) / rm;
                nd2 += trigamma(r) - trigamma(y[i] + r) - mu / (r * rm)
                    + (mu - y[i]) / (rm * rm);
            }
            score[p] = r * d1;
            // Observed information for the dispersion block (no closed-form
            // expectation of trigamma(Y + r)); guard against indefiniteness
            // far from the optimum.
            let i_tt = r * r * nd2 - score[p];
            info[[p, p]] = if i_tt > 1e-10 {
                i_tt
            } else {
                score[p].abs().max(1.0)
            };
        }
        FamilyKind::BinomialGlm => {
            let trials = data.trials.as_ref().expect("validated earlier");
            for i in 0..data.n() {
                let t = trials[i] as f64;
                let prob = 1.0 / (1.0 + (-eta[i]).exp());
                add_score(&mut score, i, y[i] - t * prob);
                add_outer(&mut info, i, t * prob * (1.0 - prob));
            }
        }
    }

    // Mirror the coefficient block; aux cross-terms are zero by orthogonality.
    for a in 0..p {
        for b in 0..a {
            info[[a, b]] = info[[b, a]];
        }
    }
    Ok((ll, score, info))
}
