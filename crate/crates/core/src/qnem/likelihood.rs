use log::warn;
use ndarray::{Array2, Axis};

use super::params::{log_sum_exp, CmixParams, DurationParams, FitConfig, FitError, Posterior};
use crate::data::SurvivalDataset;
use crate::distributions::{dweibull_ln_pmf, dweibull_ln_surv, geom_ln_pmf, geom_ln_surv, round_duration};

/// Integer durations and event indicators as seen by the discrete likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDurations {
    pub t: Vec<u64>,
    pub delta: Vec<bool>,
}

impl DiscreteDurations {
    pub fn new(t: Vec<u64>, delta: Vec<bool>) -> Self {
        assert_eq!(t.len(), delta.len(), "durations and indicators differ in length");
        Self { t, delta }
    }

    /// Rounds each observed duration half-up to an integer of at least one.
    pub fn from_dataset(data: &SurvivalDataset) -> Self {
        Self {
            t: data.y().iter().map(|&y| round_duration(y)).collect(),
            delta: data.delta().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// `δ ln f_k(t) + (1-δ) ln F̄_k(t)` for every subject and class.
pub(crate) fn log_duration_terms(durations: &DurationParams, dur: &DiscreteDurations) -> Array2<f64> {
    let n = dur.len();
    match durations {
        DurationParams::Geometric(alphas) => {
            let mut out = Array2::zeros((n, alphas.len()));
            for (k, &a) in alphas.iter().enumerate() {
                for i in 0..n {
                    out[[i, k]] = if dur.delta[i] {
                        geom_ln_pmf(a, dur.t[i])
                    } else {
                        geom_ln_surv(a, dur.t[i])
                    };
                }
            }
            out
        }
        DurationParams::Weibull { phi, mu } => {
            let ln_q = (-phi).ln_1p();
            let mut out = Array2::zeros((n, 2));
            for (k, &m) in mu.iter().enumerate() {
                for i in 0..n {
                    out[[i, k]] = if dur.delta[i] {
                        dweibull_ln_pmf(ln_q, m, dur.t[i])
                    } else {
                        dweibull_ln_surv(ln_q, m, dur.t[i])
                    };
                }
            }
            out
        }
    }
}

/// Linear predictors `[0, xᵀβ_1 + c_1, ...]`, one row per subject.
pub(crate) fn logits(params: &CmixParams, x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let k = params.n_classes();
    let mut eta = Array2::zeros((n, k));
    for (j, (b, c)) in params.betas.iter().zip(&params.intercepts).enumerate() {
        let mut col = eta.column_mut(j + 1);
        col.assign(&x.dot(b));
        col += *c;
    }
    eta
}

/// `ln π_k(x_i)` for every subject and class.
pub(crate) fn log_weights(params: &CmixParams, x: &Array2<f64>) -> Array2<f64> {
    let mut eta = logits(params, x);
    for mut row in eta.axis_iter_mut(Axis(0)) {
        let lse = log_sum_exp(row.as_slice().unwrap());
        row -= lse;
    }
    eta
}

/// The matrix `ln Λ_{k,i}` with the censoring factors dropped, together with
/// its row-wise log-sum-exp.
pub(crate) struct Evaluation {
    pub log_lambda: Array2<f64>,
    pub row_lse: Vec<f64>,
}

impl Evaluation {
    pub fn new(params: &CmixParams, x: &Array2<f64>, dur: &DiscreteDurations) -> Self {
        let mut log_lambda = log_weights(params, x);
        log_lambda += &log_duration_terms(&params.durations, dur);
        let row_lse = log_lambda
            .axis_iter(Axis(0))
            .map(|row| log_sum_exp(row.as_slice().unwrap()))
            .collect();
        Self { log_lambda, row_lse }
    }

    pub fn neg_log_likelihood(&self) -> Result<f64, FitError> {
        let mut total = 0.0;
        for (i, &v) in self.row_lse.iter().enumerate() {
            if !v.is_finite() {
                return Err(FitError::NonFinite { row: i + 1 });
            }
            total += v;
        }
        Ok(-total / self.row_lse.len() as f64)
    }

    pub fn posterior(&self) -> Posterior {
        let (n, k) = self.log_lambda.dim();
        let mut q = Array2::zeros((n, k));
        let mut degenerate = 0;
        for i in 0..n {
            let lse = self.row_lse[i];
            if lse.is_finite() {
                for r in 0..k {
                    q[[i, r]] = (self.log_lambda[[i, r]] - lse).exp();
                }
            } else {
                // Every class has zero likelihood: only reachable when a cured
                // class meets an event and the other weights underflow.
                q[[i, k - 1]] = 1.0;
                degenerate += 1;
            }
        }
        if degenerate > 0 {
            warn!("{degenerate} subjects had zero likelihood under every class; assigned to class {}", k - 1);
        }
        Posterior { q }
    }
}

fn check_dimensions(params: &CmixParams, x: &Array2<f64>) -> Result<(), FitError> {
    if params.d() != x.ncols() {
        return Err(FitError::DimensionMismatch {
            expected: params.d(),
            found: x.ncols(),
        });
    }
    Ok(())
}

/// `-n⁻¹ Σ_i ln Σ_k π_k(x_i) f_k(y_i)^δ_i F̄_k(y_i)^(1-δ_i)`, omitting the
/// censoring-distribution terms that do not depend on the parameters.
pub fn neg_log_likelihood(params: &CmixParams, data: &SurvivalDataset) -> Result<f64, FitError> {
    check_dimensions(params, data.x())?;
    Evaluation::new(params, data.x(), &DiscreteDurations::from_dataset(data)).neg_log_likelihood()
}

/// Elastic-Net penalty summed over the non-reference classes. Intercepts are not penalized.
pub fn penalty(params: &CmixParams, config: &FitConfig) -> f64 {
    params
        .betas
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let l1: f64 = b.iter().map(|v| v.abs()).sum();
            let l2: f64 = b.iter().map(|v| v * v).sum();
            config.gamma_for(j + 1) * ((1.0 - config.eta) * l1 + 0.5 * config.eta * l2)
        })
        .sum()
}

pub fn penalized_objective(params: &CmixParams, data: &SurvivalDataset, config: &FitConfig) -> Result<f64, FitError> {
    Ok(neg_log_likelihood(params, data)? + penalty(params, config))
}

pub fn e_step(params: &CmixParams, data: &SurvivalDataset) -> Result<Posterior, FitError> {
    check_dimensions(params, data.x())?;
    Ok(Evaluation::new(params, data.x(), &DiscreteDurations::from_dataset(data)).posterior())
}
