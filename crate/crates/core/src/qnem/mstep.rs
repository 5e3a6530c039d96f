use super::likelihood::DiscreteDurations;
use super::params::{Posterior, ALPHA_MAX, ALPHA_MIN};
use super::solver::{minimize_bounded, Bounds, SolverOptions};

/// Result of the geometric rate update.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaUpdate {
    pub alphas: Vec<f64>,
    /// Classes whose denominator vanished; their previous rate was kept.
    pub empty_classes: Vec<usize>,
}

/// Closed-form maximizer `α_k = Σ δ_i q_ik / Σ q_ik t_i`, clamped to
/// `[1e-10, 1-1e-10]`. In cure mode class 0 stays at zero.
pub fn m_step_geometric(
    posterior: &Posterior,
    dur: &DiscreteDurations,
    previous: &[f64],
    cure_mode: bool,
) -> AlphaUpdate {
    let k = posterior.n_classes();
    let mut alphas = previous.to_vec();
    let mut empty_classes = Vec::new();
    for r in 0..k {
        if cure_mode && r == 0 {
            alphas[0] = 0.0;
            continue;
        }
        let q = posterior.class(r);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..dur.len() {
            if dur.delta[i] {
                num += q[i];
            }
            den += q[i] * dur.t[i] as f64;
        }
        if den > 0.0 {
            alphas[r] = (num / den).clamp(ALPHA_MIN, ALPHA_MAX);
        } else {
            empty_classes.push(r);
        }
    }
    AlphaUpdate { alphas, empty_classes }
}

/// Shared-scale Weibull parameters `(φ, μ_0, μ_1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullParams {
    pub phi: f64,
    pub mu: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullUpdate {
    pub params: WeibullParams,
    /// Value of the duration part of the expected complete negative log-likelihood.
    pub objective: f64,
    pub previous_objective: f64,
    /// The solver could not improve on `current`, which is returned unchanged.
    pub failed: bool,
}

const LOGIT_BOUND: f64 = 30.0;
const LOG_MU_BOUND: f64 = 3.0;

/// `σ(p)` and `ln(1 - σ(p)) = -softplus(p)`.
fn scale_from_logit(p: f64) -> (f64, f64) {
    let phi = 1.0 / (1.0 + (-p).exp());
    let softplus = p.max(0.0) + (-p.abs()).exp().ln_1p();
    (phi, -softplus)
}

fn logit(phi: f64) -> f64 {
    (phi / (1.0 - phi)).ln()
}

/// Weighted Weibull negative log-likelihood in the unconstrained coordinates
/// `z = (logit φ, ln μ_0, ln μ_1)` and its gradient.
fn weibull_objective(posterior: &Posterior, dur: &DiscreteDurations, z: &[f64], grad: &mut [f64]) -> f64 {
    let (phi, a) = scale_from_logit(z[0]);
    let mu = [z[1].exp(), z[2].exp()];
    let n = dur.len() as f64;
    let (mut value, mut d_a) = (0.0, 0.0);
    let mut d_mu = [0.0, 0.0];
    for i in 0..dur.len() {
        let t = dur.t[i] as f64;
        let ln_t = if t > 0.0 { t.ln() } else { 0.0 };
        let ln_t1 = (t + 1.0).ln();
        for k in 0..2 {
            let q = posterior.q[[i, k]];
            if q == 0.0 {
                continue;
            }
            let u = t.powf(mu[k]);
            let du = u * ln_t;
            if dur.delta[i] {
                let v = (t + 1.0).powf(mu[k]);
                let dv = v * ln_t1;
                let gap = v - u;
                let em = (-a * gap).exp_m1();
                value += q * (a * u + (-(a * gap).exp_m1()).ln());
                d_a += q * (u - gap / em);
                d_mu[k] += q * (a * du - a * (dv - du) / em);
            } else {
                value += q * a * u;
                d_a += q * u;
                d_mu[k] += q * a * du;
            }
        }
    }
    grad[0] = -d_a * (-phi) / n;
    grad[1] = -d_mu[0] * mu[0] / n;
    grad[2] = -d_mu[1] * mu[1] / n;
    -value / n
}

/// Duration part of the expected complete negative log-likelihood for Weibull classes.
pub fn weibull_q_value(posterior: &Posterior, dur: &DiscreteDurations, params: &WeibullParams) -> f64 {
    let z = [logit(params.phi), params.mu[0].ln(), params.mu[1].ln()];
    weibull_objective(posterior, dur, &z, &mut [0.0; 3])
}

/// Gradient of [`weibull_q_value`] in `(logit φ, ln μ_0, ln μ_1)`.
pub fn weibull_q_gradient(posterior: &Posterior, dur: &DiscreteDurations, params: &WeibullParams) -> [f64; 3] {
    let z = [logit(params.phi), params.mu[0].ln(), params.mu[1].ln()];
    let mut g = [0.0; 3];
    weibull_objective(posterior, dur, &z, &mut g);
    g
}

/// Improves `(φ, μ_0, μ_1)` by minimizing the weighted negative
/// log-likelihood over the unconstrained coordinates, never returning a
/// point worse than `current`.
pub fn m_step_weibull(posterior: &Posterior, dur: &DiscreteDurations, current: &WeibullParams) -> WeibullUpdate {
    weibull_step(posterior, dur, current, None)
}

/// Same as [`m_step_weibull`] with both shapes held at `mu`.
pub fn m_step_weibull_fixed_shape(
    posterior: &Posterior,
    dur: &DiscreteDurations,
    current: &WeibullParams,
    mu: [f64; 2],
) -> WeibullUpdate {
    weibull_step(posterior, dur, current, Some(mu))
}

fn weibull_step(
    posterior: &Posterior,
    dur: &DiscreteDurations,
    current: &WeibullParams,
    fixed_mu: Option<[f64; 2]>,
) -> WeibullUpdate {
    assert_eq!(posterior.n_classes(), 2, "the Weibull M-step needs two classes");
    let start = WeibullParams {
        phi: current.phi,
        mu: fixed_mu.unwrap_or(current.mu),
    };
    let previous_objective = weibull_q_value(posterior, dur, current);
    let z0 = [logit(start.phi), start.mu[0].ln(), start.mu[1].ln()];
    let bounds = match fixed_mu {
        Some(mu) => Bounds {
            lower: vec![-LOGIT_BOUND, mu[0].ln(), mu[1].ln()],
            upper: vec![LOGIT_BOUND, mu[0].ln(), mu[1].ln()],
        },
        None => Bounds {
            lower: vec![-LOGIT_BOUND, -LOG_MU_BOUND, -LOG_MU_BOUND],
            upper: vec![LOGIT_BOUND, LOG_MU_BOUND, LOG_MU_BOUND],
        },
    };
    let options = SolverOptions {
        max_iter: 200,
        pgtol: 1e-10,
        ftol: 1e-15,
        ..SolverOptions::default()
    };
    let out = minimize_bounded(|z, g| weibull_objective(posterior, dur, z, g), &z0, &bounds, &options);
    let candidate = WeibullParams {
        phi: scale_from_logit(out.x[0]).0,
        mu: [out.x[1].exp(), out.x[2].exp()],
    };
    // Compare in the reported parameterization so the GEM check is exact.
    let objective = weibull_q_value(posterior, dur, &candidate);
    let valid = candidate.phi > 0.0 && candidate.phi < 1.0 && objective.is_finite();
    if valid && objective <= previous_objective {
        WeibullUpdate {
            params: candidate,
            objective,
            previous_objective,
            failed: false,
        }
    } else {
        WeibullUpdate {
            params: *current,
            objective: previous_objective,
            previous_objective,
            failed: !valid,
        }
    }
}
