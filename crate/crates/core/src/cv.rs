//! Penalty selection by V-fold cross-validation.
//!
//! The grid runs from `γ_max`, where every coefficient is zero, down four
//! decades on a log scale. Each fold fits the whole path with warm starts and
//! scores the held-out IPCW C-index; the chosen penalty is the largest one
//! whose mean score is within one standard error of the best mean.

use log::debug;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, SurvivalDataset};
use crate::metrics::{c_index_ipcw, default_tau, MetricsError};
use crate::qnem::{fit_from, initialize, predict_scores, CmixParams, FitConfig, FitError, FitTrace};

pub const DEFAULT_GRID_POINTS: usize = 50;
/// Ratio between the smallest and largest grid values.
pub const GRID_SPAN: f64 = 1e-4;
const FOLD_ATTEMPTS: usize = 10;

#[derive(Debug, Error)]
pub enum CvError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("could not build {folds} folds that each hold an event after {attempts} attempts")]
    NoEventsInFold { folds: usize, attempts: usize },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Smallest penalty at which every coefficient of the sub-problem is zero,
/// `max_j Σ_i |x_ij| / (2 n (1 - η))`.
pub fn gamma_max(x: &Array2<f64>, eta: f64) -> Result<f64, CvError> {
    if !(0.0..1.0).contains(&eta) {
        return Err(CvError::InvalidArgument(format!(
            "gamma_max needs eta in [0, 1), got {eta}; supply an explicit grid for pure ridge"
        )));
    }
    let n = x.nrows() as f64;
    let col_max = x
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(col_max / (2.0 * n * (1.0 - eta)))
}

/// `n_points` log-spaced values from `gamma_max` down to `gamma_max · 1e-4`, both exact.
pub fn make_grid(gamma_max: f64, n_points: usize) -> Result<Vec<f64>, CvError> {
    if n_points < 2 {
        return Err(CvError::InvalidArgument("the grid needs at least two points".into()));
    }
    if !(gamma_max > 0.0 && gamma_max.is_finite()) {
        return Err(CvError::InvalidArgument(format!("gamma_max must be positive, got {gamma_max}")));
    }
    let lo = gamma_max * GRID_SPAN;
    let step = GRID_SPAN.ln() / (n_points - 1) as f64;
    let mut grid: Vec<f64> = (0..n_points).map(|i| gamma_max * (step * i as f64).exp()).collect();
    grid[0] = gamma_max;
    grid[n_points - 1] = lo;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub v_folds: usize,
    /// Decreasing penalties; `None` builds the default grid from the data.
    pub grid: Option<Vec<f64>>,
    pub n_grid: usize,
    /// Follow-up horizon for the C-index; defaults to the 95th percentile of `y`.
    pub tau: Option<f64>,
    /// Explicit fold label per row, overriding the seeded stratified assignment.
    pub folds: Option<Vec<usize>>,
    /// Run folds on the rayon pool.
    pub parallel: bool,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            v_folds: 5,
            grid: None,
            n_grid: DEFAULT_GRID_POINTS,
            tau: None,
            folds: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub gammas: Vec<f64>,
    /// Mean held-out C-index per penalty.
    pub mean: Vec<f64>,
    /// Standard error of the mean across folds.
    pub se: Vec<f64>,
    /// `fold_scores[g][v]`, missing when the fold had no comparable pairs.
    pub fold_scores: Vec<Vec<Option<f64>>>,
    pub best_index: usize,
    pub chosen_index: usize,
    pub chosen_gamma: f64,
    pub folds: Vec<usize>,
    pub tau: f64,
}

/// Fold labels stratified by the event indicator: events and censored rows
/// are shuffled separately and dealt round-robin.
pub fn stratified_folds(delta: &[bool], v: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut events: Vec<usize> = (0..delta.len()).filter(|&i| delta[i]).collect();
    let mut censored: Vec<usize> = (0..delta.len()).filter(|&i| !delta[i]).collect();
    events.shuffle(rng);
    censored.shuffle(rng);
    let mut folds = vec![0; delta.len()];
    for (pos, &i) in events.iter().chain(censored.iter()).enumerate() {
        folds[i] = pos % v;
    }
    folds
}

fn folds_have_events(folds: &[usize], delta: &[bool], v: usize) -> bool {
    (0..v).all(|f| (0..delta.len()).any(|i| folds[i] == f && delta[i]))
}

fn assign_folds(data: &SurvivalDataset, plan: &CvPlan, seed: u64) -> Result<Vec<usize>, CvError> {
    let v = plan.v_folds;
    if let Some(f) = &plan.folds {
        if f.len() != data.n() || f.iter().any(|&l| l >= v) {
            return Err(CvError::InvalidArgument("explicit folds must label every row with 0..v_folds".into()));
        }
        if !folds_have_events(f, data.delta(), v) {
            return Err(CvError::NoEventsInFold { folds: v, attempts: 1 });
        }
        return Ok(f.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..FOLD_ATTEMPTS {
        let folds = stratified_folds(data.delta(), v, &mut rng);
        if folds_have_events(&folds, data.delta(), v) {
            return Ok(folds);
        }
    }
    Err(CvError::NoEventsInFold {
        folds: v,
        attempts: FOLD_ATTEMPTS,
    })
}

/// Grid for `data`, from the plan or from `γ_max`.
pub fn plan_grid(data: &SurvivalDataset, plan: &CvPlan, eta: f64) -> Result<Vec<f64>, CvError> {
    let grid = match &plan.grid {
        Some(g) => g.clone(),
        None => make_grid(gamma_max(data.x(), eta)?, plan.n_grid)?,
    };
    if grid.is_empty() || grid.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
        return Err(CvError::InvalidArgument("grid values must be finite and non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] > w[0]) {
        return Err(CvError::InvalidArgument("grid must be decreasing".into()));
    }
    Ok(grid)
}

/// Fits along `grid` with warm starts, calling `visit` after each fit.
/// Stops early when `visit` returns `false`.
pub fn fit_path<F>(data: &SurvivalDataset, template: &FitConfig, grid: &[f64], mut visit: F) -> Result<(), CvError>
where
    F: FnMut(usize, &CmixParams, &FitTrace) -> Result<bool, CvError>,
{
    let mut current = initialize(data, template.n_classes, template.parameterization, template.cure_mode)?;
    for (g, &gamma) in grid.iter().enumerate() {
        let config = FitConfig {
            gamma,
            class_gammas: None,
            ..template.clone()
        };
        let (params, trace) = fit_from(data, &config, current)?;
        let keep_going = visit(g, &params, &trace)?;
        current = params;
        if !keep_going {
            break;
        }
    }
    Ok(())
}

fn fold_path(
    data: &SurvivalDataset,
    folds: &[usize],
    fold: usize,
    template: &FitConfig,
    grid: &[f64],
    tau: f64,
) -> Result<Vec<Option<f64>>, CvError> {
    let train: Vec<usize> = (0..data.n()).filter(|&i| folds[i] != fold).collect();
    let test: Vec<usize> = (0..data.n()).filter(|&i| folds[i] == fold).collect();
    let train = data.subset(&train)?;
    let test = data.subset(&test)?;
    let mut scores = Vec::with_capacity(grid.len());
    fit_path(&train, template, grid, |_, params, _| {
        let m = predict_scores(params, test.x())?;
        scores.push(c_index_ipcw(test.y(), test.delta(), m.as_slice(), tau).ok());
        Ok(true)
    })?;
    Ok(scores)
}

/// Index of the largest penalty whose mean is within one standard error of the best.
pub fn one_se_rule(mean: &[f64], se: &[f64]) -> (usize, usize) {
    let mut best = 0;
    for i in 1..mean.len() {
        if mean[i] > mean[best] {
            best = i;
        }
    }
    let threshold = mean[best] - se[best];
    let chosen = (0..mean.len()).find(|&i| mean[i] >= threshold).unwrap_or(best);
    (best, chosen)
}

pub fn cross_validate(data: &SurvivalDataset, plan: &CvPlan, template: &FitConfig, seed: u64) -> Result<CvResult, CvError> {
    if plan.v_folds < 2 || plan.v_folds > data.n() {
        return Err(CvError::InvalidArgument(format!(
            "v_folds must lie in 2..={}, got {}",
            data.n(),
            plan.v_folds
        )));
    }
    template.validate()?;
    let grid = plan_grid(data, plan, template.eta)?;
    let folds = assign_folds(data, plan, seed)?;
    let tau = plan.tau.unwrap_or_else(|| default_tau(data.y()));
    if !(tau > 0.0) {
        return Err(CvError::InvalidArgument(format!("tau must be positive, got {tau}")));
    }

    let run = |v: usize| fold_path(data, &folds, v, template, &grid, tau);
    let per_fold: Vec<Vec<Option<f64>>> = if plan.parallel {
        (0..plan.v_folds).into_par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        (0..plan.v_folds).map(run).collect::<Result<_, _>>()?
    };

    let mut mean = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    let mut fold_scores = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let row: Vec<Option<f64>> = per_fold.iter().map(|f| f[g]).collect();
        let vals: Vec<f64> = row.iter().flatten().copied().collect();
        let (m, s) = mean_and_se(&vals);
        mean.push(m);
        se.push(s);
        fold_scores.push(row);
    }
    let (best_index, chosen_index) = one_se_rule(&mean, &se);
    debug!(
        "cv: best gamma {} (C = {:.4}), chosen {} (C = {:.4})",
        grid[best_index], mean[best_index], grid[chosen_index], mean[chosen_index]
    );
    Ok(CvResult {
        chosen_gamma: grid[chosen_index],
        gammas: grid,
        mean,
        se,
        fold_scores,
        best_index,
        chosen_index,
        folds,
        tau,
    })
}

fn mean_and_se(vals: &[f64]) -> (f64, f64) {
    match vals.len() {
        0 => (f64::NEG_INFINITY, 0.0),
        1 => (vals[0], 0.0),
        m => {
            let mean = vals.iter().sum::<f64>() / m as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            (mean, (var / m as f64).sqrt())
        }
    }
}

/// Cross-validates, then refits on all of `data` along the path down to the chosen penalty.
pub fn fit_with_cv(
    data: &SurvivalDataset,
    plan: &CvPlan,
    template: &FitConfig,
    seed: u64,
) -> Result<(CvResult, CmixParams, FitTrace), CvError> {
    let cv = cross_validate(data, plan, template, seed)?;
    let mut out = None;
    fit_path(data, template, &cv.gammas[..=cv.chosen_index], |g, params, trace| {
        if g == cv.chosen_index {
            out = Some((params.clone(), trace.clone()));
        }
        Ok(true)
    })?;
    let (params, trace) = out.expect("path reaches the chosen penalty");
    Ok((cv, params, trace))
}
