use log::debug;
use ndarray::{Array2, Axis};

use super::likelihood::{log_duration_terms, DiscreteDurations};
use super::mstep::{m_step_geometric, m_step_weibull, WeibullParams};
use super::params::{log_sum_exp, CmixParams, DurationParams, FitError, Parameterization, Posterior, ALPHA_MAX, ALPHA_MIN};
use crate::data::SurvivalDataset;
use crate::metrics::empirical_quantile;

const EM_MAX_ITER: usize = 1000;
const EM_TOL: f64 = 1e-10;
const COLLAPSE_TOL: f64 = 1e-3;

/// Starting point of the EM loop: zero coefficients and duration parameters
/// from a covariate-free censored mixture, classes ordered by increasing risk.
pub fn initialize(
    data: &SurvivalDataset,
    k: usize,
    parameterization: Parameterization,
    cure_mode: bool,
) -> Result<CmixParams, FitError> {
    let durations = initial_durations(&DiscreteDurations::from_dataset(data), k, parameterization, cure_mode)?;
    Ok(CmixParams::with_zero_coefficients(durations, k, data.d(), cure_mode))
}

/// Duration parameters of the covariate-free mixture.
pub fn initial_durations(
    dur: &DiscreteDurations,
    k: usize,
    parameterization: Parameterization,
    cure_mode: bool,
) -> Result<DurationParams, FitError> {
    if k < 2 {
        return Err(FitError::InvalidConfig("n_classes must be at least 2".into()));
    }
    match parameterization {
        Parameterization::Geometric => Ok(DurationParams::Geometric(geometric_start(dur, k, cure_mode))),
        Parameterization::Weibull => {
            if k != 2 {
                return Err(FitError::Unsupported("the Weibull parameterization supports K = 2 only".into()));
            }
            if cure_mode {
                return Err(FitError::Unsupported("cure mode requires the geometric parameterization".into()));
            }
            let alphas = geometric_start(dur, 2, false);
            let w = weibull_start(dur, alphas[0], alphas[1]);
            Ok(DurationParams::Weibull { phi: w.phi, mu: w.mu })
        }
    }
}

fn geometric_start(dur: &DiscreteDurations, k: usize, cure_mode: bool) -> Vec<f64> {
    let t: Vec<f64> = dur.t.iter().map(|&v| v as f64).collect();
    // Spread the starting rates over the quantiles of the durations: long
    // durations seed the low-risk classes.
    let mut alphas: Vec<f64> = (0..k)
        .map(|r| {
            let p = 1.0 - (r as f64 + 0.5) / k as f64;
            (1.0 / empirical_quantile(&t, p)).clamp(1e-4, 0.95)
        })
        .collect();
    if cure_mode {
        alphas[0] = 0.0;
    }
    let mut fitted = geometric_mixture_em(dur, alphas, cure_mode);
    sort_rates(&mut fitted);
    if !collapsed(&fitted, cure_mode) {
        return fitted;
    }
    let perturbed = perturb(&fitted, cure_mode);
    debug!("covariate-free mixture collapsed at {fitted:?}; retrying from {perturbed:?}");
    let mut retry = geometric_mixture_em(dur, perturbed.clone(), cure_mode);
    sort_rates(&mut retry);
    if collapsed(&retry, cure_mode) {
        perturbed
    } else {
        retry
    }
}

fn sort_rates(alphas: &mut [f64]) {
    alphas.sort_by(f64::total_cmp);
}

fn collapsed(alphas: &[f64], cure_mode: bool) -> bool {
    let start = usize::from(cure_mode);
    alphas[start..]
        .windows(2)
        .any(|w| (w[1] - w[0]).abs() <= COLLAPSE_TOL * w[0].abs().max(w[1].abs()))
}

/// Scales the rates by factors spread evenly over `[0.9, 1.1]`.
fn perturb(alphas: &[f64], cure_mode: bool) -> Vec<f64> {
    let start = usize::from(cure_mode);
    let m = alphas.len() - start;
    let mut out = alphas.to_vec();
    for (j, a) in out[start..].iter_mut().enumerate() {
        let factor = if m == 1 { 1.0 } else { 0.9 + 0.2 * j as f64 / (m - 1) as f64 };
        *a = (*a * factor).clamp(ALPHA_MIN, ALPHA_MAX);
    }
    out
}

/// E-step with constant class weights `ln_pi`. Returns the posterior and log-likelihood.
fn constant_weight_e_step(log_dens: &Array2<f64>, ln_pi: &[f64]) -> (Posterior, f64) {
    let mut log_lambda = log_dens.clone();
    for mut row in log_lambda.axis_iter_mut(Axis(0)) {
        for (v, lp) in row.iter_mut().zip(ln_pi) {
            *v += lp;
        }
    }
    let mut q = Array2::zeros(log_lambda.dim());
    let mut ll = 0.0;
    let k = ln_pi.len();
    for (i, row) in log_lambda.axis_iter(Axis(0)).enumerate() {
        let lse = log_sum_exp(row.as_slice().unwrap());
        if lse.is_finite() {
            ll += lse;
            for r in 0..k {
                q[[i, r]] = (row[r] - lse).exp();
            }
        } else {
            q[[i, k - 1]] = 1.0;
        }
    }
    (Posterior { q }, ll)
}

fn class_log_weights(post: &Posterior) -> Vec<f64> {
    let n = post.n() as f64;
    (0..post.n_classes())
        .map(|r| (post.class(r).sum() / n).max(1e-300).ln())
        .collect()
}

fn geometric_mixture_em(dur: &DiscreteDurations, mut alphas: Vec<f64>, cure_mode: bool) -> Vec<f64> {
    let k = alphas.len();
    let mut ln_pi = vec![-(k as f64).ln(); k];
    let mut previous = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITER {
        let log_dens = log_duration_terms(&DurationParams::Geometric(alphas.clone()), dur);
        let (post, ll) = constant_weight_e_step(&log_dens, &ln_pi);
        alphas = m_step_geometric(&post, dur, &alphas, cure_mode).alphas;
        ln_pi = class_log_weights(&post);
        if (ll - previous).abs() <= EM_TOL * ll.abs().max(1.0) {
            break;
        }
        previous = ll;
    }
    alphas
}

/// Covariate-free two-class Weibull mixture started near the geometric fit,
/// with class 1 the faster-decaying (larger shape) class.
fn weibull_start(dur: &DiscreteDurations, alpha0: f64, alpha1: f64) -> WeibullParams {
    let phi = alpha0.clamp(1e-6, 0.99);
    // Match the class-1 survival at its mean duration.
    let horizon = (1.0 / alpha1).max(2.0);
    let ratio = (-alpha1).ln_1p() / (-phi).ln_1p();
    let mu1 = (1.0 + ratio.ln() / horizon.ln()).clamp(0.1, 15.0);
    let mut params = WeibullParams { phi, mu: [1.0, mu1] };

    let mut ln_pi = vec![-(2f64).ln(); 2];
    let mut previous = f64::NEG_INFINITY;
    for _ in 0..200 {
        let log_dens = log_duration_terms(&DurationParams::Weibull { phi: params.phi, mu: params.mu }, dur);
        let (post, ll) = constant_weight_e_step(&log_dens, &ln_pi);
        params = m_step_weibull(&post, dur, &params).params;
        ln_pi = class_log_weights(&post);
        if (ll - previous).abs() <= 1e-9 * ll.abs().max(1.0) {
            break;
        }
        previous = ll;
    }
    if params.mu[0] > params.mu[1] {
        params.mu.swap(0, 1);
    }
    params
}
