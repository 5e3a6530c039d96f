use log::{debug, warn};
use ndarray::Array1;

use super::init::initialize;
use super::likelihood::{logits, penalty, DiscreteDurations, Evaluation};
use super::mstep::{m_step_geometric, m_step_weibull, WeibullParams};
use super::params::{log_sum_exp, CmixParams, DurationParams, FitConfig, FitError, FitTrace, Posterior};
use super::solver::SolverStatus;
use super::subproblem::beta_subproblem;
use crate::data::SurvivalDataset;

/// Absolute slack allowed when checking that the objective never increases.
pub const DESCENT_SLACK: f64 = 1e-10;

/// Fits the penalized mixture from the default starting point.
pub fn fit(data: &SurvivalDataset, config: &FitConfig) -> Result<(CmixParams, FitTrace), FitError> {
    config.validate()?;
    let init = initialize(data, config.n_classes, config.parameterization, config.cure_mode)?;
    fit_from(data, config, init)
}

/// Fits the penalized mixture starting from `init` (e.g. a neighbouring
/// solution on a penalty path).
pub fn fit_from(data: &SurvivalDataset, config: &FitConfig, init: CmixParams) -> Result<(CmixParams, FitTrace), FitError> {
    config.validate()?;
    init.validate()?;
    if init.n_classes() != config.n_classes || init.parameterization() != config.parameterization {
        return Err(FitError::InvalidConfig(
            "starting point does not match the configured classes or parameterization".into(),
        ));
    }
    if init.cure_mode != config.cure_mode {
        return Err(FitError::InvalidConfig("starting point and configuration disagree on cure mode".into()));
    }
    if init.d() != data.d() {
        return Err(FitError::DimensionMismatch {
            expected: init.d(),
            found: data.d(),
        });
    }

    let dur = DiscreteDurations::from_dataset(data);
    let x = data.x();
    let mut params = init;
    let mut trace = FitTrace::default();

    let mut eval = Evaluation::new(&params, x, &dur);
    let mut objective = eval.neg_log_likelihood()? + penalty(&params, config);
    trace.objective_history.push(objective);

    for iteration in 1..=config.max_iter {
        let posterior = eval.posterior();
        update_durations(&mut params, &posterior, &dur, &mut trace, iteration);
        update_coefficients(&mut params, &posterior, data, config, &mut trace, iteration);

        eval = Evaluation::new(&params, x, &dur);
        let next = eval.neg_log_likelihood()? + penalty(&params, config);
        trace.n_iters = iteration;
        if next > objective + DESCENT_SLACK {
            return Err(FitError::DescentViolation {
                iteration,
                previous: objective,
                current: next,
                alphas: describe_durations(&params.durations),
                intercepts: params.intercepts.clone(),
            });
        }
        trace.objective_history.push(next);
        let change = (objective - next).abs() / objective.abs().max(f64::MIN_POSITIVE);
        objective = next;
        if change < config.rel_tol {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        warn!("EM stopped after {} iterations without reaching rel_tol", trace.n_iters);
    }
    debug!("fit finished: {} iterations, objective {objective}", trace.n_iters);
    Ok((params, trace))
}

fn describe_durations(d: &DurationParams) -> Vec<f64> {
    match d {
        DurationParams::Geometric(a) => a.clone(),
        DurationParams::Weibull { phi, mu } => vec![*phi, mu[0], mu[1]],
    }
}

fn update_durations(
    params: &mut CmixParams,
    posterior: &Posterior,
    dur: &DiscreteDurations,
    trace: &mut FitTrace,
    iteration: usize,
) {
    match &mut params.durations {
        DurationParams::Geometric(alphas) => {
            let update = m_step_geometric(posterior, dur, alphas, params.cure_mode);
            for k in &update.empty_classes {
                trace.flags.push(format!("iteration {iteration}: class {k} is empty, rate kept"));
            }
            *alphas = update.alphas;
        }
        DurationParams::Weibull { phi, mu } => {
            let update = m_step_weibull(posterior, dur, &WeibullParams { phi: *phi, mu: *mu });
            if update.failed {
                trace.flags.push(format!("iteration {iteration}: Weibull M-step failed, parameters kept"));
            }
            *phi = update.params.phi;
            *mu = update.params.mu;
        }
    }
}

/// Sequentially updates each class's coefficients, holding the others at
/// their latest values.
fn update_coefficients(
    params: &mut CmixParams,
    posterior: &Posterior,
    data: &SurvivalDataset,
    config: &FitConfig,
    trace: &mut FitTrace,
    iteration: usize,
) {
    let x = data.x();
    let k = params.n_classes();
    for class in 1..k {
        let offsets = if k > 2 {
            let eta = logits(params, x);
            let others: Vec<f64> = (0..x.nrows())
                .map(|i| {
                    let row: Vec<f64> = (0..k).filter(|&r| r != class).map(|r| eta[[i, r]]).collect();
                    log_sum_exp(&row)
                })
                .collect();
            Some(others)
        } else {
            None
        };
        let result = beta_subproblem(
            x,
            posterior.class(class),
            offsets.as_deref(),
            params.betas[class - 1].view(),
            params.intercepts[class - 1],
            config.gamma_for(class),
            config.eta,
            &config.solver,
        );
        if result.status == SolverStatus::LineSearchFailed {
            trace.flags.push(format!(
                "iteration {iteration}: class {class} sub-problem line search failed, best iterate kept"
            ));
        }
        params.betas[class - 1] = result.beta;
        params.intercepts[class - 1] = result.intercept;
    }
}

/// Coefficients of the highest-risk class, the natural selection vector when `K = 2`.
pub fn selection_coefficients(params: &CmixParams) -> Array1<f64> {
    params.betas.last().cloned().unwrap_or_else(|| Array1::zeros(0))
}
