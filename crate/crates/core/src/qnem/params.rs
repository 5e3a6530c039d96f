use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::solver::SolverOptions;
use crate::data::DataError;

/// Upper and lower clamp for geometric rates, so that `ln α` and `ln(1-α)`
/// stay finite.
pub const ALPHA_MIN: f64 = 1e-10;
pub const ALPHA_MAX: f64 = 1.0 - 1e-10;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("expected {expected} covariates, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite likelihood contribution at row {row}")]
    NonFinite { row: usize },
    #[error(
        "objective increased at iteration {iteration}: {previous:e} -> {current:e} \
         (alphas {alphas:?}, intercepts {intercepts:?})"
    )]
    DescentViolation {
        iteration: usize,
        previous: f64,
        current: f64,
        alphas: Vec<f64>,
        intercepts: Vec<f64>,
    },
    #[error("{0}")]
    Unsupported(String),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FitError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, FitError::NonFinite { .. } | FitError::DescentViolation { .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    #[default]
    Geometric,
    Weibull,
}

impl std::str::FromStr for Parameterization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geometric" => Ok(Self::Geometric),
            "weibull" => Ok(Self::Weibull),
            other => Err(format!("unknown parameterization '{other}' (expected geometric or weibull)")),
        }
    }
}

impl std::fmt::Display for Parameterization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Geometric => "geometric",
            Self::Weibull => "weibull",
        })
    }
}

/// Class-conditional duration parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DurationParams {
    /// One rate per class; `alphas[0] = 0` marks a cured class.
    Geometric(Vec<f64>),
    /// Two classes sharing the scale `phi`, with shapes `mu[0]`, `mu[1]`.
    Weibull { phi: f64, mu: [f64; 2] },
}

/// Mixture parameters. Class 0 is the reference class (`β_0 = 0`, no intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct CmixParams {
    pub durations: DurationParams,
    /// `betas[k-1]` holds the coefficients of class `k`.
    pub betas: Vec<Array1<f64>>,
    pub intercepts: Vec<f64>,
    pub cure_mode: bool,
}

impl CmixParams {
    pub fn n_classes(&self) -> usize {
        self.betas.len() + 1
    }

    pub fn d(&self) -> usize {
        self.betas.first().map_or(0, |b| b.len())
    }

    pub fn parameterization(&self) -> Parameterization {
        match self.durations {
            DurationParams::Geometric(_) => Parameterization::Geometric,
            DurationParams::Weibull { .. } => Parameterization::Weibull,
        }
    }

    /// Geometric rates, or `None` for the Weibull parameterization.
    pub fn alphas(&self) -> Option<&[f64]> {
        match &self.durations {
            DurationParams::Geometric(a) => Some(a),
            DurationParams::Weibull { .. } => None,
        }
    }

    /// Parameters with all coefficients and intercepts at zero.
    pub fn with_zero_coefficients(durations: DurationParams, k: usize, d: usize, cure_mode: bool) -> Self {
        Self {
            durations,
            betas: vec![Array1::zeros(d); k - 1],
            intercepts: vec![0.0; k - 1],
            cure_mode,
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let k = self.n_classes();
        if k < 2 {
            return Err(FitError::InvalidParams("at least two classes are required".into()));
        }
        if self.intercepts.len() != k - 1 {
            return Err(FitError::InvalidParams(format!(
                "{} coefficient vectors but {} intercepts",
                k - 1,
                self.intercepts.len()
            )));
        }
        let d = self.d();
        if self.betas.iter().any(|b| b.len() != d) {
            return Err(FitError::InvalidParams("coefficient vectors differ in length".into()));
        }
        let finite = self.betas.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.intercepts.iter().all(|v| v.is_finite());
        if !finite {
            return Err(FitError::InvalidParams("non-finite coefficient".into()));
        }
        match &self.durations {
            DurationParams::Geometric(alphas) => {
                if alphas.len() != k {
                    return Err(FitError::InvalidParams(format!("{} rates for {k} classes", alphas.len())));
                }
                for (j, &a) in alphas.iter().enumerate() {
                    let cured = self.cure_mode && j == 0;
                    let ok = if cured { a == 0.0 } else { a > 0.0 && a < 1.0 };
                    if !ok {
                        return Err(FitError::InvalidParams(format!("alpha[{j}] = {a} out of range")));
                    }
                }
            }
            DurationParams::Weibull { phi, mu } => {
                if k != 2 {
                    return Err(FitError::InvalidParams("the Weibull parameterization needs K = 2".into()));
                }
                if self.cure_mode {
                    return Err(FitError::InvalidParams("cure mode requires geometric durations".into()));
                }
                if !(*phi > 0.0 && *phi < 1.0) || mu.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
                    return Err(FitError::InvalidParams(format!("phi = {phi}, mu = {mu:?} out of range")));
                }
            }
        }
        Ok(())
    }

    /// Mixture weights for one covariate row.
    pub fn weights(&self, x: ArrayView1<f64>) -> Vec<f64> {
        mixture_weights(&self.betas, &self.intercepts, x)
    }
}

/// Softmax over `{0, xᵀβ_1 + c_1, ..., xᵀβ_{K-1} + c_{K-1}}`.
pub fn mixture_weights(betas: &[Array1<f64>], intercepts: &[f64], x: ArrayView1<f64>) -> Vec<f64> {
    let mut logits = Vec::with_capacity(betas.len() + 1);
    logits.push(0.0);
    for (b, c) in betas.iter().zip(intercepts) {
        logits.push(x.dot(b) + c);
    }
    softmax_in_place(&mut logits);
    logits
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for e in v.iter_mut() {
        *e = (*e - m).exp();
        total += *e;
    }
    for e in v.iter_mut() {
        *e /= total;
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|e| (e - m).exp()).sum::<f64>().ln()
}

/// `ln(e^a + e^b)`.
#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (-(a - b).abs()).exp().ln_1p()
}

/// Estimation controls.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Elastic-Net mix: 0 is pure ridge, 1 pure lasso.
    pub eta: f64,
    /// Penalty strength shared by every non-reference class.
    pub gamma: f64,
    /// Optional per-class strengths (length `K-1`) overriding `gamma`.
    pub class_gammas: Option<Vec<f64>>,
    pub n_classes: usize,
    pub max_iter: usize,
    /// Relative change of the penalized objective that stops the EM loop.
    pub rel_tol: f64,
    pub parameterization: Parameterization,
    pub cure_mode: bool,
    /// Controls for each coefficient sub-problem.
    pub solver: SolverOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            gamma: 0.0,
            class_gammas: None,
            n_classes: 2,
            max_iter: 500,
            rel_tol: 1e-6,
            parameterization: Parameterization::Geometric,
            cure_mode: false,
            solver: SolverOptions::default(),
        }
    }
}

impl FitConfig {
    /// Penalty strength of class `k >= 1`.
    pub fn gamma_for(&self, k: usize) -> f64 {
        match &self.class_gammas {
            Some(g) => g[k - 1],
            None => self.gamma,
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(FitError::InvalidConfig(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(FitError::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if let Some(g) = &self.class_gammas {
            if g.len() != self.n_classes.saturating_sub(1) {
                return Err(FitError::InvalidConfig(format!(
                    "{} class penalties given for {} penalized classes",
                    g.len(),
                    self.n_classes.saturating_sub(1)
                )));
            }
            if g.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(FitError::InvalidConfig("class penalties must be >= 0".into()));
            }
        }
        if self.n_classes < 2 {
            return Err(FitError::InvalidConfig("n_classes must be at least 2".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(FitError::InvalidConfig(format!("rel_tol must be > 0, got {}", self.rel_tol)));
        }
        if self.max_iter == 0 {
            return Err(FitError::InvalidConfig("max_iter must be positive".into()));
        }
        if self.parameterization == Parameterization::Weibull {
            if self.n_classes != 2 {
                return Err(FitError::Unsupported("the Weibull parameterization supports K = 2 only".into()));
            }
            if self.cure_mode {
                return Err(FitError::Unsupported("cure mode requires the geometric parameterization".into()));
            }
        }
        Ok(())
    }
}

/// Per-iteration record of a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Penalized objective at the initial point and after every iteration.
    pub objective_history: Vec<f64>,
    pub n_iters: usize,
    pub converged: bool,
    /// Non-fatal events: empty classes, sub-solver line-search failures, ...
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl FitTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.objective_history.last().copied()
    }
}

/// Posterior class responsibilities, one row per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub q: Array2<f64>,
}

impl Posterior {
    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.q.ncols()
    }

    pub fn class(&self, k: usize) -> ArrayView1<'_, f64> {
        self.q.column(k)
    }
}
