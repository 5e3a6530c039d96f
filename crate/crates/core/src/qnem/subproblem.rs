//! Coefficient update for one non-reference class.
//!
//! With the other classes held fixed, the soft-label multinomial loss
//! `-n⁻¹ Σ_i Σ_r q_ir ln π_r(x_i)` depends on `(β_k, c_k)` only through
//!
//! ```text
//! L(β, c) = -n⁻¹ Σ_i [ q_ik η_i - ln(e^{o_i} + e^{η_i}) ],   η_i = x_iᵀβ + c,
//! ```
//!
//! where `o_i` is the log-sum-exp of the other classes' linear predictors
//! (zero when `K = 2`). The Elastic-Net penalty is made smooth by writing
//! `β = β⁺ - β⁻` with both parts non-negative, giving a box-constrained
//! problem for the bounded L-BFGS solver.

use ndarray::{Array1, Array2, ArrayView1};

use super::params::log_add_exp;
use super::solver::{minimize_bounded, Bounds, SolverOptions, SolverStatus};

/// The smooth part of the coefficient sub-problem for one class.
pub struct SoftLabelLoss<'a> {
    x: &'a Array2<f64>,
    q: ArrayView1<'a, f64>,
    offsets: Option<&'a [f64]>,
}

impl<'a> SoftLabelLoss<'a> {
    /// `offsets = None` means a single competing class with linear predictor 0.
    pub fn new(x: &'a Array2<f64>, q: ArrayView1<'a, f64>, offsets: Option<&'a [f64]>) -> Self {
        assert_eq!(x.nrows(), q.len());
        if let Some(o) = offsets {
            assert_eq!(o.len(), q.len());
        }
        Self { x, q, offsets }
    }

    fn offset(&self, i: usize) -> f64 {
        self.offsets.map_or(0.0, |o| o[i])
    }

    /// Value, gradient in `β` and derivative in the intercept.
    pub fn value_and_gradient(&self, beta: ArrayView1<f64>, intercept: f64) -> (f64, Array1<f64>, f64) {
        let n = self.x.nrows();
        let eta = self.x.dot(&beta);
        let mut value = 0.0;
        let mut residual = Array1::zeros(n);
        for i in 0..n {
            let e = eta[i] + intercept;
            let o = self.offset(i);
            let lse = log_add_exp(o, e);
            value -= self.q[i] * e - lse;
            let pi = (e - lse).exp();
            residual[i] = -(self.q[i] - pi);
        }
        let inv_n = 1.0 / n as f64;
        let grad = self.x.t().dot(&residual) * inv_n;
        (value * inv_n, grad, residual.sum() * inv_n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub beta: Array1<f64>,
    pub intercept: f64,
    /// Penalized sub-objective at the returned point and at the warm start.
    pub objective: f64,
    pub initial_objective: f64,
    /// Infinity norm of the Elastic-Net optimality conditions.
    pub kkt_residual: f64,
    pub status: SolverStatus,
    pub iterations: usize,
}

/// Elastic-Net penalty `γ((1-η)‖β‖₁ + η/2 ‖β‖₂²)`.
pub fn elastic_net(beta: ArrayView1<f64>, gamma: f64, eta: f64) -> f64 {
    let l1: f64 = beta.iter().map(|v| v.abs()).sum();
    let l2: f64 = beta.iter().map(|v| v * v).sum();
    gamma * ((1.0 - eta) * l1 + 0.5 * eta * l2)
}

/// Infinity norm of the subgradient optimality conditions of
/// `L(β, c) + γ((1-η)‖β‖₁ + η/2‖β‖²)`.
pub fn kkt_residual(loss: &SoftLabelLoss, beta: ArrayView1<f64>, intercept: f64, gamma: f64, eta: f64) -> f64 {
    let (_, grad, grad_c) = loss.value_and_gradient(beta, intercept);
    let l1 = gamma * (1.0 - eta);
    let mut worst = grad_c.abs();
    for j in 0..beta.len() {
        let g = grad[j] + gamma * eta * beta[j];
        let r = if beta[j] != 0.0 {
            (g + l1 * beta[j].signum()).abs()
        } else {
            (g.abs() - l1).max(0.0)
        };
        worst = worst.max(r);
    }
    worst
}

/// Minimizes the penalized soft-label loss for class `k` starting from
/// `(beta_init, intercept_init)`. The returned point is never worse than the start.
#[allow(clippy::too_many_arguments)]
pub fn beta_subproblem(
    x: &Array2<f64>,
    q_k: ArrayView1<f64>,
    offsets: Option<&[f64]>,
    beta_init: ArrayView1<f64>,
    intercept_init: f64,
    gamma: f64,
    eta: f64,
    options: &SolverOptions,
) -> SubproblemResult {
    let d = x.ncols();
    let loss = SoftLabelLoss::new(x, q_k, offsets);
    let l1 = gamma * (1.0 - eta);
    let l2 = gamma * eta;

    let mut z0 = vec![0.0; 2 * d + 1];
    for j in 0..d {
        z0[j] = beta_init[j].max(0.0);
        z0[d + j] = (-beta_init[j]).max(0.0);
    }
    z0[2 * d] = intercept_init;
    let mut lower = vec![0.0; 2 * d + 1];
    lower[2 * d] = f64::NEG_INFINITY;
    let bounds = Bounds {
        lower,
        upper: vec![f64::INFINITY; 2 * d + 1],
    };

    let objective = |z: &[f64], g: &mut [f64]| -> f64 {
        let beta: Array1<f64> = (0..d).map(|j| z[j] - z[d + j]).collect();
        let (value, grad, grad_c) = loss.value_and_gradient(beta.view(), z[2 * d]);
        let mut pen = 0.0;
        for j in 0..d {
            pen += l1 * (z[j] + z[d + j]) + 0.5 * l2 * beta[j] * beta[j];
            let smooth = grad[j] + l2 * beta[j];
            g[j] = smooth + l1;
            g[d + j] = -smooth + l1;
        }
        g[2 * d] = grad_c;
        value + pen
    };
    let out = minimize_bounded(objective, &z0, &bounds, options);
    let beta: Array1<f64> = (0..d).map(|j| out.x[j] - out.x[d + j]).collect();
    let intercept = out.x[2 * d];
    let kkt = kkt_residual(&loss, beta.view(), intercept, gamma, eta);
    SubproblemResult {
        objective: out.f,
        initial_objective: out.f_initial,
        beta,
        intercept,
        kkt_residual: kkt,
        status: out.status,
        iterations: out.iterations,
    }
}
