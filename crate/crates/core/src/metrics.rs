//! Risk-prediction metrics for right-censored outcomes.
//!
//! Every estimator here depends on the marker only through pairwise
//! comparisons, so any strictly increasing transform of the scores leaves the
//! results unchanged bit for bit. Ties in the marker always count one half.
//!
//! Censoring is handled by inverse probability of censoring weighting (IPCW)
//! with the Kaplan-Meier estimate `Ĝ` of the censoring survival, evaluated as
//! a left limit `Ĝ(y-)` at event times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{kaplan_meier, KaplanMeierCurve, KmTarget};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("input lengths differ: {0}")]
    LengthMismatch(String),
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("horizon tau must be positive, got {0}")]
    InvalidTau(f64),
    #[error("evaluation time {t} is not strictly inside the follow-up range ({min}, {max})")]
    TimeOutOfRange { t: f64, min: f64, max: f64 },
    #[error("only one class present among the labels")]
    SingleClass,
    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Per-subject marker `M`; larger means higher risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScores {
    pub m: Vec<f64>,
}

impl RiskScores {
    pub fn new(m: Vec<f64>) -> Result<Self, MetricsError> {
        if let Some(i) = m.iter().position(|v| !v.is_finite()) {
            return Err(MetricsError::NonFiniteScore(i));
        }
        Ok(Self { m })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.m
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Time-dependent AUC on a grid. `None` marks times with no cases or no controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucCurve {
    pub times: Vec<f64>,
    pub auc: Vec<Option<f64>>,
}

/// Detailed output of [`concordance_ipcw`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concordance {
    pub c_index: f64,
    pub comparable_pairs: usize,
    /// Events skipped because the censoring survival had already reached zero.
    pub zero_weight_events: usize,
}

/// Smallest observed value whose empirical CDF reaches `p`.
pub fn empirical_quantile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Default follow-up horizon: the 95th percentile of the observed durations.
pub fn default_tau(y: &[f64]) -> f64 {
    empirical_quantile(y, 0.95)
}

fn check_lengths(y: &[f64], delta: &[bool], scores: &[f64]) -> Result<(), MetricsError> {
    if y.len() != delta.len() || y.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "y: {}, delta: {}, scores: {}",
            y.len(),
            delta.len(),
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    Ok(())
}

#[inline]
fn concordance_credit(mi: f64, mj: f64) -> f64 {
    if mi > mj {
        1.0
    } else if mi == mj {
        0.5
    } else {
        0.0
    }
}

/// Uno-type IPCW estimate of `P[M_i > M_j | Y_i < Y_j, Y_i < τ]`.
pub fn concordance_ipcw(y: &[f64], delta: &[bool], scores: &[f64], tau: f64) -> Result<Concordance, MetricsError> {
    check_lengths(y, delta, scores)?;
    if !(tau > 0.0) {
        return Err(MetricsError::InvalidTau(tau));
    }
    let g = kaplan_meier(y, delta, KmTarget::Censoring);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut pairs = 0usize;
    let mut zero_weight = 0usize;
    for i in 0..y.len() {
        if !delta[i] || y[i] >= tau {
            continue;
        }
        let gi = g.left_limit(y[i]);
        if gi <= 0.0 {
            zero_weight += 1;
            continue;
        }
        let w = 1.0 / (gi * gi);
        for j in 0..y.len() {
            if y[i] < y[j] {
                pairs += 1;
                den += w;
                num += w * concordance_credit(scores[i], scores[j]);
            }
        }
    }
    if pairs == 0 || den <= 0.0 {
        return Err(MetricsError::NoComparablePairs);
    }
    Ok(Concordance {
        c_index: num / den,
        comparable_pairs: pairs,
        zero_weight_events: zero_weight,
    })
}

pub fn c_index_ipcw(y: &[f64], delta: &[bool], scores: &[f64], tau: f64) -> Result<f64, MetricsError> {
    concordance_ipcw(y, delta, scores, tau).map(|c| c.c_index)
}

/// Twenty quantiles of the event times at levels `k/21`, kept only when
/// strictly inside the observed follow-up range.
pub fn default_auc_times(y: &[f64], delta: &[bool]) -> Vec<f64> {
    let events: Vec<f64> = y.iter().zip(delta).filter(|(_, &e)| e).map(|(&v, _)| v).collect();
    if events.is_empty() {
        return Vec::new();
    }
    let (lo, hi) = follow_up_range(y);
    let mut times: Vec<f64> = (1..=20)
        .map(|k| empirical_quantile(&events, k as f64 / 21.0))
        .filter(|&t| t > lo && t < hi)
        .collect();
    times.dedup();
    times
}

fn follow_up_range(y: &[f64]) -> (f64, f64) {
    y.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Cumulative/dynamic AUC(t) with IPCW weights.
///
/// Cases at `t` are events with `y_i <= t`, weighted by `1/Ĝ(y_i-)`; controls
/// are subjects still under observation (`y_j > t`), all sharing the weight
/// `1/Ĝ(t)` which therefore cancels.
pub fn auc_t(y: &[f64], delta: &[bool], scores: &[f64], times: &[f64]) -> Result<AucCurve, MetricsError> {
    check_lengths(y, delta, scores)?;
    if y.is_empty() {
        return Err(MetricsError::InvalidArgument("empty sample".into()));
    }
    let (lo, hi) = follow_up_range(y);
    if let Some(&t) = times.iter().find(|&&t| !(t > lo && t < hi)) {
        return Err(MetricsError::TimeOutOfRange { t, min: lo, max: hi });
    }
    let g = kaplan_meier(y, delta, KmTarget::Censoring);
    let auc = times.iter().map(|&t| auc_at(y, delta, scores, &g, t)).collect();
    Ok(AucCurve {
        times: times.to_vec(),
        auc,
    })
}

fn auc_at(y: &[f64], delta: &[bool], scores: &[f64], g: &KaplanMeierCurve, t: f64) -> Option<f64> {
    let controls: Vec<usize> = (0..y.len()).filter(|&j| y[j] > t).collect();
    if controls.is_empty() {
        return None;
    }
    let mut num = 0.0;
    let mut case_weight = 0.0;
    for i in 0..y.len() {
        if !(delta[i] && y[i] <= t) {
            continue;
        }
        let gi = g.left_limit(y[i]);
        if gi <= 0.0 {
            continue;
        }
        let w = 1.0 / gi;
        case_weight += w;
        let wins: f64 = controls.iter().map(|&j| concordance_credit(scores[i], scores[j])).sum();
        num += w * wins;
    }
    if case_weight <= 0.0 {
        return None;
    }
    Some(num / (case_weight * controls.len() as f64))
}

/// Mann-Whitney estimate of `P(score_pos > score_neg)` with ties counting 1/2.
pub fn binary_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "scores: {}, labels: {}",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut negatives_below = 0usize;
    let mut credit = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        credit += pos as f64 * (negatives_below as f64 + 0.5 * neg as f64);
        negatives_below += neg;
        i = j;
    }
    Ok(credit / (n_pos as f64 * n_neg as f64))
}

/// AUC of the predicted survival `Ŝ_i(ε)` for the label `T_i > ε`.
///
/// Subjects censored at or before `ε` have an unknown label and are dropped.
pub fn horizon_survival_auc(
    predicted_survival: &[f64],
    y: &[f64],
    delta: &[bool],
    epsilon: f64,
) -> Result<f64, MetricsError> {
    check_lengths(y, delta, predicted_survival)?;
    let mut scores = Vec::with_capacity(y.len());
    let mut labels = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        if y[i] > epsilon {
            scores.push(predicted_survival[i]);
            labels.push(true);
        } else if delta[i] {
            scores.push(predicted_survival[i]);
            labels.push(false);
        }
    }
    binary_auc(&scores, &labels)
}

/// Variable-selection AUC: `|β̂_j| / max|β̂|` as a score for "β_j is active".
///
/// A coefficient is active in the truth when it is nonzero. An all-zero
/// estimate ties every coordinate and scores 1/2.
pub fn selection_auc(beta_hat: &[f64], beta_true: &[f64]) -> Result<f64, MetricsError> {
    if beta_hat.len() != beta_true.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "beta_hat: {}, beta_true: {}",
            beta_hat.len(),
            beta_true.len()
        )));
    }
    let labels: Vec<bool> = beta_true.iter().map(|&b| b != 0.0).collect();
    let max_abs = beta_hat.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let scores: Vec<f64> = if max_abs > 0.0 {
        beta_hat.iter().map(|b| b.abs() / max_abs).collect()
    } else {
        vec![0.0; beta_hat.len()]
    };
    binary_auc(&scores, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_binary_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    num += concordance_credit(scores[i], scores[j]);
                }
            }
        }
        num / den
    }

    #[test]
    fn quantile_definition() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(empirical_quantile(&v, 0.5), 3.0);
        assert_eq!(empirical_quantile(&v, 0.95), 5.0);
        assert_eq!(empirical_quantile(&v, 0.0), 1.0);
        let doubled: Vec<f64> = v.iter().chain(v.iter()).copied().collect();
        assert_eq!(empirical_quantile(&doubled, 0.95), empirical_quantile(&v, 0.95));
    }

    #[test]
    fn concordance_extremes() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let d = [true; 5];
        let perfect: Vec<f64> = y.iter().map(|v| -v).collect();
        assert_eq!(c_index_ipcw(&y, &d, &perfect, 10.0).unwrap(), 1.0);
        assert_eq!(c_index_ipcw(&y, &d, &[0.3; 5], 10.0).unwrap(), 0.5);
        assert_eq!(c_index_ipcw(&y, &d, &y, 10.0).unwrap(), 0.0);
        assert_eq!(
            c_index_ipcw(&y, &[false; 5], &y, 10.0),
            Err(MetricsError::NoComparablePairs)
        );
        assert!(matches!(c_index_ipcw(&y, &d, &y, 0.0), Err(MetricsError::InvalidTau(_))));
    }

    #[test]
    fn binary_auc_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = 25;
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..6) as f64) / 5.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            assert_abs_diff_eq!(binary_auc(&scores, &labels).unwrap(), brute_binary_auc(&scores, &labels), epsilon = 1e-12);
        }
        assert_eq!(binary_auc(&[1.0, 2.0], &[true, true]), Err(MetricsError::SingleClass));
    }

    #[test]
    fn horizon_auc_cases() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let d = [true, false, true, true, false, true];
        let eps = 3.5;
        let truth: Vec<f64> = y.iter().map(|&v| if v > eps { 1.0 } else { 0.0 }).collect();
        assert_eq!(horizon_survival_auc(&truth, &y, &d, eps).unwrap(), 1.0);
        assert_eq!(horizon_survival_auc(&[0.4; 6], &y, &d, eps).unwrap(), 0.5);
        assert_eq!(
            horizon_survival_auc(&[0.4; 6], &y, &d, 0.5),
            Err(MetricsError::SingleClass)
        );
    }

    #[test]
    fn horizon_auc_matches_mann_whitney() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 25;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(1..30) as f64).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let eps = 12.0;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            if y[i] > eps || d[i] {
                scores.push(s[i]);
                labels.push(y[i] > eps);
            }
        }
        assert_abs_diff_eq!(
            horizon_survival_auc(&s, &y, &d, eps).unwrap(),
            brute_binary_auc(&scores, &labels),
            epsilon = 1e-12
        );
    }

    #[test]
    fn selection_auc_cases() {
        assert_eq!(selection_auc(&[0.5, 1.0, 0.0], &[1.0, 1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(selection_auc(&[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(selection_auc(&[-2.0, 0.1, 0.5], &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(selection_auc(&[1.0, 1.0], &[1.0, 1.0]), Err(MetricsError::SingleClass));
        assert_eq!(selection_auc(&[1.0, 1.0], &[0.0, 0.0]), Err(MetricsError::SingleClass));
    }

    #[test]
    fn auc_t_rejects_out_of_range_times() {
        let y = [1.0, 2.0, 3.0];
        let d = [true; 3];
        assert!(matches!(
            auc_t(&y, &d, &[0.0; 3], &[3.0]),
            Err(MetricsError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn default_grid_is_interior() {
        let y: Vec<f64> = (1..=100).map(f64::from).collect();
        let d = vec![true; 100];
        let times = default_auc_times(&y, &d);
        assert_eq!(times.len(), 20);
        assert!(times.iter().all(|&t| t > 1.0 && t < 100.0));
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }
}
