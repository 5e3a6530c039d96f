//! Penalized mixture estimation.
//!
//! The penalized objective is
//!
//! ```text
//! -n⁻¹ Σ_i ln Σ_k π_k(x_i) f_k(y_i)^δ_i F̄_k(y_i)^(1-δ_i)
//!     + Σ_k γ_k ((1-η)‖β_k‖₁ + η/2 ‖β_k‖₂²)
//! ```
//!
//! with `π` a softmax whose class 0 is the reference. [`fit`] alternates an
//! E-step, the duration M-step (closed form for geometric classes, a small
//! bounded quasi-Newton solve for the Weibull pair) and one Elastic-Net
//! logistic sub-problem per non-reference class. Every step is a generalized
//! EM step, so the objective never increases; the loop checks this and
//! aborts with a diagnostic if it ever does.

mod fit;
mod init;
mod likelihood;
mod model_file;
mod mstep;
mod params;
mod predict;
pub mod solver;
mod subproblem;

pub use fit::{fit, fit_from, selection_coefficients, DESCENT_SLACK};
pub use init::{initial_durations, initialize};
pub use likelihood::{e_step, neg_log_likelihood, penalized_objective, penalty, DiscreteDurations};
pub use model_file::{ClassDuration, ModelFile, MODEL_SCHEMA_VERSION};
pub use mstep::{
    m_step_geometric, m_step_weibull, m_step_weibull_fixed_shape, weibull_q_gradient, weibull_q_value, AlphaUpdate,
    WeibullParams, WeibullUpdate,
};
pub use params::{
    mixture_weights, CmixParams, DurationParams, FitConfig, FitError, FitTrace, Parameterization, Posterior, ALPHA_MAX,
    ALPHA_MIN,
};
pub use predict::{predict_scores, predict_survival, subgroup_curves, SubgroupCurves};
pub use subproblem::{beta_subproblem, elastic_net, kkt_residual, SoftLabelLoss, SubproblemResult};
