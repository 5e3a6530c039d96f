use log::warn;
use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DataError, SurvivalDataset};
use crate::metrics::{c_index_ipcw, default_tau};

const MAX_NEWTON_ITERS: usize = 100;
const BETA_CAP: f64 = 20.0;
const SCORE_TOL: f64 = 1e-8;

/// One-covariate Cox fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivariateCox {
    pub beta: f64,
    /// Score (first derivative of the partial log-likelihood) at `beta`.
    pub score: f64,
    pub iterations: usize,
    /// The likelihood kept increasing towards the `|β| = 20` cap (separation).
    pub capped: bool,
}

/// Columns ranked by univariate C-index, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    #[serde(rename = "ranked")]
    pub ranked_columns: Vec<usize>,
    /// `scores[i]` belongs to `ranked_columns[i]`.
    pub scores: Vec<f64>,
    /// Columns whose fit failed and were given the uninformative score 0.5.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<usize>,
}

/// Breslow partial log-likelihood, score and information for one covariate.
fn breslow(order: &[usize], y: &[f64], delta: &[bool], x: ArrayView1<f64>, beta: f64) -> (f64, f64, f64) {
    // `order` sorts subjects by decreasing duration, so risk sets grow as we walk it.
    let shift = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v * beta));
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let (mut loglik, mut score, mut info) = (0.0, 0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let t = y[order[k]];
        let mut end = k;
        while end < order.len() && y[order[end]] == t {
            let i = order[end];
            let w = (x[i] * beta - shift).exp();
            s0 += w;
            s1 += w * x[i];
            s2 += w * x[i] * x[i];
            end += 1;
        }
        let mean = s1 / s0;
        for &i in &order[k..end] {
            if delta[i] {
                loglik += x[i] * beta - shift - s0.ln();
                score += x[i] - mean;
                info += s2 / s0 - mean * mean;
            }
        }
        k = end;
    }
    (loglik, score, info)
}

fn descending_order(y: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    order
}

/// Breslow partial log-likelihood of a single covariate at `beta`.
pub fn partial_log_likelihood(y: &[f64], delta: &[bool], xj: ArrayView1<f64>, beta: f64) -> f64 {
    breslow(&descending_order(y), y, delta, xj, beta).0
}

/// Maximizes the one-dimensional Breslow partial likelihood by Newton steps
/// from zero, halving each step until the likelihood does not decrease.
pub fn fit_univariate_cox(y: &[f64], delta: &[bool], xj: ArrayView1<f64>) -> Result<UnivariateCox, DataError> {
    if y.len() != delta.len() || y.len() != xj.len() {
        return Err(DataError::Shape("y, delta and the column differ in length".into()));
    }
    if !delta.iter().any(|&e| e) {
        return Err(DataError::NoEvents);
    }
    let first = xj[0];
    if xj.iter().all(|&v| v == first) {
        return Err(DataError::ConstantColumn(0));
    }
    let order = descending_order(y);
    let mut beta = 0.0;
    let (mut loglik, mut score, mut info) = breslow(&order, y, delta, xj, beta);
    let mut capped = false;
    let mut iterations = 0;
    while iterations < MAX_NEWTON_ITERS && score.abs() > SCORE_TOL {
        iterations += 1;
        let mut step = if info > 0.0 { score / info } else { score.signum() };
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = (beta + step).clamp(-BETA_CAP, BETA_CAP);
            let (l, s, i) = breslow(&order, y, delta, xj, candidate);
            if l >= loglik {
                let moved = candidate != beta;
                beta = candidate;
                (loglik, score, info) = (l, s, i);
                accepted = moved;
                break;
            }
            step *= 0.5;
        }
        if beta.abs() >= BETA_CAP && score * beta > 0.0 {
            capped = true;
            break;
        }
        if !accepted {
            break;
        }
    }
    if capped {
        warn!("univariate Cox fit hit the |beta| = {BETA_CAP} cap (monotone likelihood)");
    }
    Ok(UnivariateCox {
        beta,
        score,
        iterations,
        capped,
    })
}

/// Ranks columns by the in-sample C-index of their univariate Cox marker and
/// keeps the best `top`.
///
/// The marker `exp(x_j β_j)` is scored through the linear predictor `x_j β_j`,
/// which orders subjects identically. Columns that cannot be fitted get 0.5.
pub fn screen_top_d(data: &SurvivalDataset, top: usize, tau: Option<f64>) -> Result<ScreeningResult, DataError> {
    if top == 0 || top > data.d() {
        return Err(DataError::InvalidArgument(format!(
            "top must lie in 1..={}, got {top}",
            data.d()
        )));
    }
    let tau = tau.unwrap_or_else(|| default_tau(data.y()));
    let per_column: Vec<(f64, bool)> = (0..data.d())
        .into_par_iter()
        .map(|j| {
            let col = data.x().column(j);
            let fitted = fit_univariate_cox(data.y(), data.delta(), col).ok().and_then(|fit| {
                let marker: Vec<f64> = col.iter().map(|&v| v * fit.beta).collect();
                c_index_ipcw(data.y(), data.delta(), &marker, tau).ok()
            });
            match fitted {
                Some(c) => (c, false),
                None => (0.5, true),
            }
        })
        .collect();

    let mut ranked: Vec<usize> = (0..data.d()).collect();
    ranked.sort_by(|&a, &b| per_column[b].0.total_cmp(&per_column[a].0).then(a.cmp(&b)));
    ranked.truncate(top);
    let scores = ranked.iter().map(|&j| per_column[j].0).collect();
    let flagged = (0..data.d()).filter(|&j| per_column[j].1).collect();
    Ok(ScreeningResult {
        ranked_columns: ranked,
        scores,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_column_is_rejected() {
        let x = Array1::from(vec![2.0; 4]);
        let err = fit_univariate_cox(&[1.0, 2.0, 3.0, 4.0], &[true; 4], x.view()).unwrap_err();
        assert!(matches!(err, DataError::ConstantColumn(_)));
        let x = array![1.0, 2.0];
        assert!(matches!(
            fit_univariate_cox(&[1.0, 2.0], &[false, false], x.view()),
            Err(DataError::NoEvents)
        ));
    }

    #[test]
    fn reversed_ranks_give_negative_coefficient() {
        // Larger covariate, later event: protective effect.
        let y = [1.0, 2.0, 3.0, 4.0];
        let x = array![1.0, 2.0, 4.0, 3.0];
        let fit = fit_univariate_cox(&y, &[true; 4], x.view()).unwrap();
        assert!(fit.beta < 0.0, "{fit:?}");
        assert!(fit.score.abs() <= 1e-8);
    }

    #[test]
    fn separation_is_capped() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let x = array![4.0, 3.0, 2.0, 1.0];
        let fit = fit_univariate_cox(&y, &[true; 4], x.view()).unwrap();
        assert!(fit.capped);
        assert_eq!(fit.beta, 20.0);
    }

    #[test]
    fn newton_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 20;
        let x: Array1<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| ((-rng.random::<f64>().ln()) * (-0.8 * x[i]).exp() * 10.0).ceil())
            .collect();
        let delta: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        let fit = fit_univariate_cox(&y, &delta, x.view()).unwrap();

        // Coarse then fine grid over [-20, 20].
        let pll = |b: f64| partial_log_likelihood(&y, &delta, x.view(), b);
        let coarse = (0..=40_000)
            .map(|k| -20.0 + k as f64 * 1e-3)
            .max_by(|a, b| pll(*a).total_cmp(&pll(*b)))
            .unwrap();
        let fine = (0..=4_000)
            .map(|k| coarse - 2e-3 + k as f64 * 1e-6)
            .max_by(|a, b| pll(*a).total_cmp(&pll(*b)))
            .unwrap();
        assert!((fit.beta - fine).abs() < 1e-4, "newton {} grid {}", fit.beta, fine);
    }

    #[test]
    fn screening_ranks_informative_column_first() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<f64> = (1..=n).map(|v| v as f64).collect();
        let mut x = Array2::<f64>::zeros((n, 4));
        for i in 0..n {
            x[[i, 0]] = rng.random::<f64>();
            x[[i, 1]] = y[i];
            x[[i, 2]] = rng.random::<f64>();
            x[[i, 3]] = 1.0;
        }
        let data = SurvivalDataset::from_parts(x, y, vec![true; n]).unwrap();
        let res = screen_top_d(&data, 4, None).unwrap();
        assert_eq!(res.ranked_columns[0], 1);
        assert!(res.scores.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(res.flagged, vec![3]);
        let mut all = res.ranked_columns.clone();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(screen_top_d(&data, 0, None).is_err());
        assert_eq!(screen_top_d(&data, 2, None).unwrap().ranked_columns.len(), 2);
    }

    #[test]
    fn screening_json_shape() {
        let r = ScreeningResult {
            ranked_columns: vec![2, 0],
            scores: vec![0.8, 0.6],
            flagged: vec![],
        };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"ranked":[2,0],"scores":[0.8,0.6]}"#);
    }
}
