use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{CmixParams, FitError};
use crate::data::SurvivalDataset;
use crate::distributions::{kaplan_meier, KaplanMeierCurve, KmTarget};
use crate::metrics::RiskScores;

/// Probability of the highest-risk class for each row of `x`.
pub fn predict_scores(params: &CmixParams, x: &Array2<f64>) -> Result<RiskScores, FitError> {
    if x.ncols() != params.d() {
        return Err(FitError::DimensionMismatch {
            expected: params.d(),
            found: x.ncols(),
        });
    }
    let top = params.n_classes() - 1;
    let m = x.rows().into_iter().map(|row| params.weights(row)[top]).collect();
    RiskScores::new(m).map_err(|e| FitError::InvalidParams(e.to_string()))
}

/// Kaplan-Meier curves of the training subjects split at `π(x) = 0.5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCurves {
    pub low: KaplanMeierCurve,
    pub high: KaplanMeierCurve,
}

/// Subjects with a high-risk probability above 0.5 form the high-risk
/// subgroup. An empty subgroup yields a curve that stays at one.
pub fn subgroup_curves(params: &CmixParams, data: &SurvivalDataset) -> Result<SubgroupCurves, FitError> {
    let scores = predict_scores(params, data.x())?;
    let (mut low, mut high) = ((Vec::new(), Vec::new()), (Vec::new(), Vec::new()));
    for (i, &m) in scores.as_slice().iter().enumerate() {
        let group = if m > 0.5 { &mut high } else { &mut low };
        group.0.push(data.y()[i]);
        group.1.push(data.delta()[i]);
    }
    Ok(SubgroupCurves {
        low: kaplan_meier(&low.0, &low.1, KmTarget::Event),
        high: kaplan_meier(&high.0, &high.1, KmTarget::Event),
    })
}

/// `π(x_i) Ŝ_high(t) + (1 - π(x_i)) Ŝ_low(t)` for every row of `x`.
pub fn predict_survival(
    params: &CmixParams,
    x: &Array2<f64>,
    km_low: &KaplanMeierCurve,
    km_high: &KaplanMeierCurve,
    t: f64,
) -> Result<Vec<f64>, FitError> {
    if !(t >= 0.0) {
        return Err(FitError::InvalidConfig(format!("prediction time must be >= 0, got {t}")));
    }
    let scores = predict_scores(params, x)?;
    let (s_low, s_high) = (km_low.at(t), km_high.at(t));
    Ok(scores
        .as_slice()
        .iter()
        .map(|&p| if p == 1.0 { s_high } else { p * s_high + (1.0 - p) * s_low })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnem::params::DurationParams;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params_with(beta: Array1<f64>, c: f64) -> CmixParams {
        CmixParams {
            durations: DurationParams::Geometric(vec![0.1, 0.5]),
            betas: vec![beta],
            intercepts: vec![c],
            cure_mode: false,
        }
    }

    #[test]
    fn zero_coefficients_score_half() {
        let p = params_with(Array1::zeros(2), 0.0);
        let s = predict_scores(&p, &Array2::ones((3, 2))).unwrap();
        assert_eq!(s.as_slice(), &[0.5, 0.5, 0.5]);
        assert!(matches!(
            predict_scores(&p, &Array2::ones((3, 3))),
            Err(FitError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scores_follow_linear_predictor_and_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = params_with(array![0.7, -1.3], 0.2);
        let x = Array2::from_shape_fn((200, 2), |_| rng.random_range(-3.0..3.0));
        let s = predict_scores(&p, &x).unwrap();
        let lin: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&p.betas[0])).collect();
        for i in 0..200 {
            assert!((s.as_slice()[i] - p.weights(x.row(i))[1]).abs() <= 1e-15);
            for j in 0..200 {
                if lin[i] < lin[j] {
                    assert!(s.as_slice()[i] <= s.as_slice()[j]);
                }
            }
        }
    }

    #[test]
    fn survival_is_a_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let low = kaplan_meier(&[2.0, 5.0, 9.0, 12.0], &[true, true, false, true], KmTarget::Event);
        let high = kaplan_meier(&[1.0, 2.0, 3.0], &[true, true, true], KmTarget::Event);
        let p = params_with(array![2.0], 0.0);
        let x = Array2::from_shape_fn((50, 1), |_| rng.random_range(-2.0..2.0));
        assert!(predict_survival(&p, &x, &low, &high, 0.0).unwrap().iter().all(|&v| v == 1.0));
        for t in [0.5, 1.0, 2.5, 4.0, 10.0, 20.0] {
            let (a, b) = (low.at(t), high.at(t));
            for v in predict_survival(&p, &x, &low, &high, t).unwrap() {
                assert!(v >= a.min(b) - 1e-15 && v <= a.max(b) + 1e-15);
            }
        }
        assert!(predict_survival(&p, &x, &low, &high, -1.0).is_err());
        // A subject certain to be high risk gets the high-risk curve exactly.
        let certain = params_with(array![1.0], 1e4);
        let v = predict_survival(&certain, &array![[0.0]], &low, &high, 2.5).unwrap();
        assert_eq!(v[0], high.at(2.5));
    }

    #[test]
    fn subgroups_split_at_one_half() {
        let x = array![[-1.0], [-2.0], [1.0], [2.0]];
        let data = SurvivalDataset::from_parts(x, vec![10.0, 12.0, 1.0, 2.0], vec![true; 4]).unwrap();
        let curves = subgroup_curves(&params_with(array![1.0], 0.0), &data).unwrap();
        assert_eq!(curves.high.times, vec![1.0, 2.0]);
        assert_eq!(curves.low.times, vec![10.0, 12.0]);
    }
}
