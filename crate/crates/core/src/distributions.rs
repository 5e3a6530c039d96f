//! Discrete duration laws and the Kaplan-Meier product-limit estimator.
//!
//! Two parameterizations are supported for the class-conditional durations:
//!
//! * geometric, `f(t) = α(1-α)^(t-1)` on `t = 1, 2, ...`, with the censored
//!   factor taken as the strict survival `(1-α)^t`;
//! * discrete Weibull, `f(t) = (1-φ)^(t^μ) - (1-φ)^((t+1)^μ)` on `t = 0, 1, ...`,
//!   with survival `(1-φ)^(t^μ)`.
//!
//! The two supports differ by one on purpose; with `μ = 1` the Weibull law is
//! the geometric law shifted to start at zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("geometric pmf is supported on t >= 1, got t = {0}")]
    Domain(u64),
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Round an observed duration to the integer day used by the discrete likelihoods.
///
/// Halves round up and the result is never below one.
pub fn round_duration(y: f64) -> u64 {
    let r = (y + 0.5).floor();
    if r < 1.0 {
        1
    } else {
        r as u64
    }
}

/// Geometric duration law on `{1, 2, ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricDist {
    alpha: f64,
}

impl GeometricDist {
    pub fn new(alpha: f64) -> Result<Self, DistError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(DistError::InvalidParameter {
                name: "alpha",
                value: alpha,
                reason: "must lie in (0, 1)",
            });
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pmf(&self, t: u64) -> Result<f64, DistError> {
        geom_pmf(self.alpha, t)
    }

    /// `P(T > t)`.
    pub fn surv_strict(&self, t: u64) -> f64 {
        geom_surv_strict(self.alpha, t)
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.alpha
    }
}

pub fn geom_pmf(alpha: f64, t: u64) -> Result<f64, DistError> {
    if t < 1 {
        return Err(DistError::Domain(t));
    }
    Ok(geom_ln_pmf(alpha, t).exp())
}

/// Strict survival `P(T > t) = (1-α)^t`.
pub fn geom_surv_strict(alpha: f64, t: u64) -> f64 {
    geom_ln_surv(alpha, t).exp()
}

/// `ln f(t)` for `t >= 1`. Accepts `α = 0` (a class that never fails) and
/// returns `-inf` there.
#[inline]
pub(crate) fn geom_ln_pmf(alpha: f64, t: u64) -> f64 {
    let tail = (t - 1) as f64;
    let ln_q = (-alpha).ln_1p();
    if tail == 0.0 {
        alpha.ln()
    } else {
        alpha.ln() + tail * ln_q
    }
}

#[inline]
pub(crate) fn geom_ln_surv(alpha: f64, t: u64) -> f64 {
    if t == 0 {
        0.0
    } else {
        t as f64 * (-alpha).ln_1p()
    }
}

/// Discrete Weibull law on `{0, 1, ...}` with scale `φ` and shape `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWeibullDist {
    phi: f64,
    mu: f64,
}

impl DiscreteWeibullDist {
    pub fn new(phi: f64, mu: f64) -> Result<Self, DistError> {
        if !(phi > 0.0 && phi < 1.0) {
            return Err(DistError::InvalidParameter {
                name: "phi",
                value: phi,
                reason: "must lie in (0, 1)",
            });
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(DistError::InvalidParameter {
                name: "mu",
                value: mu,
                reason: "must be positive",
            });
        }
        Ok(Self { phi, mu })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn pmf(&self, t: u64) -> f64 {
        dweibull_pmf(self.phi, self.mu, t)
    }

    /// `P(T >= t) = (1-φ)^(t^μ)`.
    pub fn surv(&self, t: u64) -> f64 {
        dweibull_surv(self.phi, self.mu, t)
    }
}

pub fn dweibull_pmf(phi: f64, mu: f64, t: u64) -> f64 {
    dweibull_ln_pmf((-phi).ln_1p(), mu, t).exp()
}

pub fn dweibull_surv(phi: f64, mu: f64, t: u64) -> f64 {
    dweibull_ln_surv((-phi).ln_1p(), mu, t).exp()
}

/// `ln f(t)` written in terms of `a = ln(1-φ) < 0`:
/// `a t^μ + ln(1 - exp(a ((t+1)^μ - t^μ)))`.
#[inline]
pub(crate) fn dweibull_ln_pmf(ln_q: f64, mu: f64, t: u64) -> f64 {
    let t = t as f64;
    let u = t.powf(mu);
    let v = (t + 1.0).powf(mu);
    ln_q * u + (-(ln_q * (v - u)).exp_m1()).ln()
}

#[inline]
pub(crate) fn dweibull_ln_surv(ln_q: f64, mu: f64, t: u64) -> f64 {
    ln_q * (t as f64).powf(mu)
}

/// Which indicator the product-limit estimator treats as the "event".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KmTarget {
    /// Survival of the durations, `S(t)`.
    Event,
    /// Survival of the censoring times, `G(t)`.
    Censoring,
}

/// Right-continuous step function produced by [`kaplan_meier`].
///
/// `survival[i]` is the value on `[times[i], times[i+1])`; the curve equals one
/// before `times[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeierCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

impl KaplanMeierCurve {
    /// `S(t)`.
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }

    /// `S(t-)`, the value just before `t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s < t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

const Z_975: f64 = 1.959_963_984_540_054;

/// Product-limit estimator over the distinct observed times.
///
/// At tied times events are processed before censorings, so for the
/// [`KmTarget::Censoring`] curve subjects failing at `t` have already left the
/// risk set when the censorings at `t` are counted.
pub fn kaplan_meier(y: &[f64], delta: &[bool], target: KmTarget) -> KaplanMeierCurve {
    assert_eq!(y.len(), delta.len(), "y and delta must have equal length");
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));

    let mut times = Vec::new();
    let mut survival = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();

    let mut remaining = y.len();
    let mut s = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = y[order[i]];
        let mut n_event = 0usize;
        let mut n_cens = 0usize;
        let mut j = i;
        while j < order.len() && y[order[j]] == t {
            if delta[order[j]] {
                n_event += 1;
            } else {
                n_cens += 1;
            }
            j += 1;
        }
        let (d, at_risk) = match target {
            KmTarget::Event => (n_event, remaining),
            KmTarget::Censoring => (n_cens, remaining - n_event),
        };
        if d > 0 && at_risk > 0 {
            let (d, r) = (d as f64, at_risk as f64);
            s *= 1.0 - d / r;
            if at_risk > d as usize {
                greenwood += d / (r * (r - d));
            } else {
                greenwood = f64::INFINITY;
            }
        }
        let (lo, hi) = loglog_band(s, greenwood);
        times.push(t);
        survival.push(s);
        lower.push(lo);
        upper.push(hi);
        remaining -= n_event + n_cens;
        i = j;
    }

    KaplanMeierCurve {
        times,
        survival,
        lower: Some(lower),
        upper: Some(upper),
    }
}

fn loglog_band(s: f64, greenwood: f64) -> (f64, f64) {
    if s <= 0.0 || s >= 1.0 || !greenwood.is_finite() {
        return (s, s);
    }
    let se = greenwood.sqrt() / s.ln().abs();
    (s.powf((Z_975 * se).exp()), s.powf((-Z_975 * se).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn geometric_closed_forms() {
        assert_eq!(geom_pmf(0.5, 1).unwrap(), 0.5);
        assert_abs_diff_eq!(geom_pmf(0.5, 3).unwrap(), 0.125, epsilon = 1e-15);
        assert_eq!(geom_pmf(0.5, 0), Err(DistError::Domain(0)));
        assert_eq!(geom_surv_strict(0.3, 0), 1.0);
        assert_abs_diff_eq!(geom_surv_strict(0.5, 2), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn geometric_pmf_normalizes() {
        let total: f64 = (1..=1_000_000u64).map(|t| geom_pmf(0.01, t).unwrap()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn geometric_strict_survival_is_tail_sum() {
        let alpha = 0.3;
        let mut cumulative = 0.0;
        for t in 1..=50u64 {
            cumulative += geom_pmf(alpha, t).unwrap();
            assert_abs_diff_eq!(1.0 - cumulative, geom_surv_strict(alpha, t), epsilon = 1e-13);
        }
        for t in 0..=100u64 {
            let tail: f64 = (t + 1..t + 3000).map(|u| geom_pmf(alpha, u).unwrap()).sum();
            assert_abs_diff_eq!(tail, geom_surv_strict(alpha, t), epsilon = 1e-14);
        }
    }

    #[test]
    fn weibull_with_unit_shape_is_shifted_geometric() {
        let phi: f64 = 0.2;
        for t in 0..40u64 {
            let expected = phi * (1.0 - phi).powi(t as i32);
            assert_abs_diff_eq!(dweibull_pmf(phi, 1.0, t), expected, epsilon = 1e-14);
            assert_abs_diff_eq!(dweibull_pmf(phi, 1.0, t), geom_pmf(phi, t + 1).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn weibull_pmf_normalizes() {
        let total: f64 = (0..=100_000u64).map(|t| dweibull_pmf(0.05, 1.5, t)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn weibull_shape_ordering() {
        // A larger shape moves mass towards early times: the survival is
        // smaller everywhere past t = 1, and the pmf is smaller from t = 3 on.
        // At t = 1, 2 the order is reversed (0.21 < 0.46 at t = 1).
        for t in 2..=100u64 {
            assert!(dweibull_surv(0.3, 1.0, t) > dweibull_surv(0.3, 2.0, t), "t = {t}");
        }
        for t in 3..=100u64 {
            assert!(dweibull_pmf(0.3, 1.0, t) > dweibull_pmf(0.3, 2.0, t), "t = {t}");
        }
        assert_abs_diff_eq!(dweibull_pmf(0.3, 1.0, 1), 0.21, epsilon = 1e-15);
        assert_abs_diff_eq!(dweibull_pmf(0.3, 2.0, 1), 0.7 - 0.7f64.powi(4), epsilon = 1e-15);
        assert!(dweibull_pmf(0.3, 1.0, 1) < dweibull_pmf(0.3, 2.0, 1));
    }

    #[test]
    fn weibull_pmf_telescopes_survival() {
        let (phi, mu) = (0.1, 0.7);
        for t in 0..60u64 {
            let diff = dweibull_surv(phi, mu, t) - dweibull_surv(phi, mu, t + 1);
            assert_abs_diff_eq!(dweibull_pmf(phi, mu, t), diff, epsilon = 1e-14);
            assert!(dweibull_surv(phi, mu, t + 1) <= dweibull_surv(phi, mu, t));
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(GeometricDist::new(0.0).is_err());
        assert!(GeometricDist::new(1.0).is_err());
        assert!(DiscreteWeibullDist::new(0.5, 0.0).is_err());
        assert!(DiscreteWeibullDist::new(1.5, 1.0).is_err());
        let w = DiscreteWeibullDist::new(0.5, 2.0).unwrap();
        assert_eq!(w.surv(0), 1.0);
    }

    #[test]
    fn rounding_convention() {
        assert_eq!(round_duration(0.2), 1);
        assert_eq!(round_duration(1.5), 2);
        assert_eq!(round_duration(2.49), 2);
        assert_eq!(round_duration(7.0), 7);
    }

    #[test]
    fn km_textbook_case() {
        let km = kaplan_meier(&[1.0, 2.0, 3.0], &[true, true, true], KmTarget::Event);
        assert_eq!(km.times, vec![1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(km.survival[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(km.survival[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(km.survival[2], 0.0);
        assert_eq!(km.at(0.5), 1.0);
        assert_eq!(km.left_limit(2.0), km.survival[0]);
    }

    #[test]
    fn km_without_events_stays_at_one() {
        let km = kaplan_meier(&[3.0, 1.0, 2.0], &[false, false, false], KmTarget::Event);
        assert!(km.survival.iter().all(|&s| s == 1.0));
        let g = kaplan_meier(&[3.0, 1.0, 2.0], &[false, false, false], KmTarget::Censoring);
        assert_eq!(g.survival.last(), Some(&0.0));
    }

    #[test]
    fn km_events_precede_censorings_at_ties() {
        // At t = 2 one event and one censoring are tied.
        let y = [1.0, 2.0, 2.0, 3.0];
        let d = [false, true, false, true];
        let g = kaplan_meier(&y, &d, KmTarget::Censoring);
        // G: drop at 1 (1/4), at 2 the event leaves first so 1 of 2 remaining.
        assert_abs_diff_eq!(g.at(1.0), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(g.at(2.0), 0.375, epsilon = 1e-15);
    }

    /// Independent product-limit evaluation straight from the definition.
    fn brute_force_km(y: &[f64], delta: &[bool], t: f64) -> f64 {
        let mut distinct: Vec<f64> = y.iter().copied().filter(|&s| s <= t).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        distinct
            .iter()
            .map(|&s| {
                let at_risk = y.iter().filter(|&&v| v >= s).count() as f64;
                let deaths = y.iter().zip(delta).filter(|(&v, &e)| v == s && e).count() as f64;
                1.0 - deaths / at_risk
            })
            .product()
    }

    #[test]
    fn km_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(1..20) as f64).collect();
        let d: Vec<bool> = (0..50).map(|_| rng.random_bool(0.6)).collect();
        let km = kaplan_meier(&y, &d, KmTarget::Event);
        for t in 0..25 {
            let t = t as f64 + 0.5;
            assert_abs_diff_eq!(km.at(t), brute_force_km(&y, &d, t), epsilon = 1e-12);
        }
        assert!(km.survival.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn km_bands_bracket_estimate() {
        let y: Vec<f64> = (1..=30).map(f64::from).collect();
        let d: Vec<bool> = (0..30).map(|i| i % 3 != 0).collect();
        let km = kaplan_meier(&y, &d, KmTarget::Event);
        let (lo, hi) = (km.lower.as_ref().unwrap(), km.upper.as_ref().unwrap());
        for i in 0..km.times.len() {
            assert!(lo[i] <= km.survival[i] + 1e-15 && km.survival[i] <= hi[i] + 1e-15);
        }
    }
}
