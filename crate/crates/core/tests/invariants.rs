use cmix_core::cv::{one_se_rule, stratified_folds};
use cmix_core::distributions::kaplan_meier;
use cmix_core::metrics::{auc_t, c_index_ipcw, selection_auc};
use cmix_core::qnem::{e_step, predict_survival, DurationParams};
use cmix_core::{CmixParams, DiscreteWeibullDist, GeometricDist, KmTarget, SurvivalDataset};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Survival data with integer durations, a few ties, and at least one event.
fn survival_data(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>)> {
    (4..max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(1u32..25, n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(-3.0..3.0f64, n),
        )
            .prop_map(|(y, mut delta, m)| {
                delta[0] = true;
                (y.into_iter().map(f64::from).collect(), delta, m)
            })
    })
}

fn brute_concordance(y: &[f64], m: &[f64], tau: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] < y[j] && y[i] < tau {
                den += 1.0;
                num += if m[i] > m[j] { 1.0 } else if m[i] == m[j] { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_lie_in_the_unit_interval((y, delta, m) in survival_data(40)) {
        if let Ok(c) = c_index_ipcw(&y, &delta, &m, 20.0) {
            prop_assert!((0.0..=1.0).contains(&c));
        }
        if let Ok(curve) = auc_t(&y, &delta, &m, &[5.0, 10.0]) {
            for a in curve.auc.into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }
    }

    #[test]
    fn uncensored_c_index_is_plain_concordance((y, _, m) in survival_data(30)) {
        let delta = vec![true; y.len()];
        let tau = 1e9;
        if let Ok(c) = c_index_ipcw(&y, &delta, &m, tau) {
            prop_assert!((c - brute_concordance(&y, &m, tau)).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_depend_on_score_order_only((y, delta, m) in survival_data(40)) {
        let warped: Vec<f64> = m.iter().map(|v| v * v * v + v).collect();
        prop_assert_eq!(c_index_ipcw(&y, &delta, &m, 15.0).ok(), c_index_ipcw(&y, &delta, &warped, 15.0).ok());
        prop_assert_eq!(
            auc_t(&y, &delta, &m, &[4.0, 8.0]).ok(),
            auc_t(&y, &delta, &warped, &[4.0, 8.0]).ok()
        );
    }

    #[test]
    fn selection_auc_is_scale_free(beta in prop::collection::vec(-2.0..2.0f64, 6), k in 0.1..10.0f64) {
        let truth = [1.0, -1.0, 0.0, 0.0, 2.0, 0.0];
        let scaled: Vec<f64> = beta.iter().map(|b| b * k).collect();
        let a = selection_auc(&beta, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a, selection_auc(&scaled, &truth).unwrap());
    }

    #[test]
    fn kaplan_meier_is_a_non_increasing_step((y, delta, _) in survival_data(40)) {
        for target in [KmTarget::Event, KmTarget::Censoring] {
            let km = kaplan_meier(&y, &delta, target);
            prop_assert!(km.survival.iter().all(|s| (0.0..=1.0).contains(s)));
            prop_assert!(km.survival.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(km.left_limit(0.5), 1.0);
        }
    }

    #[test]
    fn discrete_laws_are_proper(alpha in 0.01..0.99f64, phi in 0.01..0.99f64, mu in 0.2..3.0f64) {
        let g = GeometricDist::new(alpha).unwrap();
        let w = DiscreteWeibullDist::new(phi, mu).unwrap();
        for t in 1..60u64 {
            prop_assert!(g.pmf(t).unwrap() >= 0.0 && w.pmf(t) >= 0.0);
            prop_assert!(g.surv_strict(t) <= g.surv_strict(t - 1));
            prop_assert!(w.surv(t) <= w.surv(t - 1));
        }
    }

    #[test]
    fn posterior_rows_are_distributions(
        seed in any::<u64>(),
        n in 3..25usize,
        d in 1..5usize,
        cure in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(1..30) as f64).collect();
        let delta: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let data = SurvivalDataset::from_parts(x, y, delta.clone()).unwrap();
        let a0 = if cure { 0.0 } else { rng.random_range(0.01..0.2) };
        let mut params = CmixParams::with_zero_coefficients(
            DurationParams::Geometric(vec![a0, rng.random_range(0.3..0.9)]), 2, d, cure);
        params.betas[0] = Array1::from_shape_fn(d, |_| rng.random_range(-3.0..3.0));
        params.intercepts[0] = rng.random_range(-1.0..1.0);
        let post = e_step(&params, &data).unwrap();
        for (i, row) in post.q.rows().into_iter().enumerate() {
            prop_assert!(row.iter().all(|q| (0.0..=1.0).contains(q)));
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            if cure && delta[i] {
                prop_assert_eq!(row[0], 0.0);
            }
        }
    }

    #[test]
    fn survival_predictions_stay_between_the_curves(
        seed in any::<u64>(),
        t in 0.0..40.0f64,
        (y, delta, _) in survival_data(30),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = y.len() / 2;
        let low = kaplan_meier(&y[..half], &delta[..half], KmTarget::Event);
        let high = kaplan_meier(&y[half..], &delta[half..], KmTarget::Event);
        let mut params = CmixParams::with_zero_coefficients(DurationParams::Geometric(vec![0.1, 0.5]), 2, 2, false);
        params.betas[0] = Array1::from_shape_fn(2, |_| rng.random_range(-4.0..4.0));
        let x = Array2::from_shape_fn((10, 2), |_| rng.random_range(-2.0..2.0));
        let s = predict_survival(&params, &x, &low, &high, t).unwrap();
        let (a, b) = (low.at(t), high.at(t));
        for v in s {
            prop_assert!(v >= a.min(b) - 1e-15 && v <= a.max(b) + 1e-15);
        }
    }

    #[test]
    fn folds_partition_every_index(delta in prop::collection::vec(any::<bool>(), 5..80), seed in any::<u64>(), v in 2..6usize) {
        let folds = stratified_folds(&delta, v, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(folds.len(), delta.len());
        prop_assert!(folds.iter().all(|&f| f < v));
        let events: Vec<usize> = (0..v).map(|f| (0..delta.len()).filter(|&i| folds[i] == f && delta[i]).count()).collect();
        prop_assert!(events.iter().max().unwrap() - events.iter().min().unwrap() <= 1);
    }

    #[test]
    fn one_se_choice_is_within_one_se(
        rows in prop::collection::vec((0.4..0.9f64, 0.0..0.05f64), 2..30),
    ) {
        let (mean, se): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let (best, chosen) = one_se_rule(&mean, &se);
        prop_assert!(mean.iter().all(|&m| m <= mean[best]));
        prop_assert!(mean[chosen] >= mean[best] - se[best]);
        prop_assert!(chosen <= best);
    }
}
