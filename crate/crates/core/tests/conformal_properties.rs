use ccke_core::conformal::{
    ccke_prediction_set, compute_score, compute_weight_probabilities, nccke_prediction_set,
    quantile_threshold, weighted_quantile, CalibrationScores, CorrectionQuantile, IntervalSet,
    KpiInterval, PredictionSet, WeightProbabilities, WeightedScoreDistribution, MASS_TOLERANCE,
};
use proptest::prelude::*;

/// Exhaustive reading of the indicator formula: for every candidate
/// `s ∈ scores ∪ {+inf}`, sum the masses at or below `s` from scratch and
/// keep the smallest candidate reaching the threshold.
fn brute_force_quantile(scores: &[f64], probs: &[f64], p_inf: f64, alpha: f64) -> CorrectionQuantile {
    let threshold = (1.0 - alpha) * (scores.len() as f64 + 1.0) / scores.len() as f64;
    let mut best: Option<f64> = None;
    for &candidate in scores {
        let mut mass = 0.0;
        for (s, p) in scores.iter().zip(probs) {
            if *s <= candidate {
                mass += p;
            }
        }
        if mass >= threshold - MASS_TOLERANCE && best.is_none_or(|b| candidate < b) {
            best = Some(candidate);
        }
    }
    match best {
        Some(s) => CorrectionQuantile::Finite(s),
        None => {
            let total: f64 = probs.iter().sum::<f64>() + p_inf;
            assert!(total >= threshold - MASS_TOLERANCE);
            CorrectionQuantile::Infinite
        }
    }
}

/// The order-statistic reading: the ceil((1 - alpha)(N + 1))-th smallest score.
fn order_statistic_quantile(scores: &[f64], alpha: f64) -> CorrectionQuantile {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((1.0 - alpha) * (scores.len() as f64 + 1.0) - 1e-9).ceil() as usize;
    if rank > sorted.len() {
        CorrectionQuantile::Infinite
    } else {
        CorrectionQuantile::Finite(sorted[rank - 1])
    }
}

fn normalize(weights: &[f64], test: f64) -> WeightProbabilities {
    let idx: Vec<usize> = (0..=weights.len()).collect();
    let n = weights.len();
    compute_weight_probabilities(
        |&i: &usize| if i < n { weights[i] } else { test },
        &idx[..n],
        &n,
    )
    .unwrap()
}

#[test]
fn frozen_oracle_values() {
    let scores: Vec<f64> = (1..=9).map(f64::from).collect();
    assert_eq!(
        brute_force_quantile(&scores, &[0.1; 9], 0.1, 0.2),
        CorrectionQuantile::Finite(9.0)
    );
    // p_1 = 0.9, p_inf = 0.1, alpha = 0.5: threshold 1.0 only met at +inf.
    assert_eq!(
        brute_force_quantile(&[5.0], &[0.9], 0.1, 0.5),
        CorrectionQuantile::Infinite
    );
    assert_eq!(
        brute_force_quantile(&[3.0], &[0.0], 1.0, 0.5),
        CorrectionQuantile::Infinite
    );
}

#[test]
fn indicator_and_order_statistic_readings_differ_by_one_rank() {
    // N = 9, alpha = 0.2: the indicator formula needs mass 0.889, reached at the
    // 9th smallest score; the order-statistic reading picks the 8th.
    let scores: Vec<f64> = (1..=9).map(f64::from).collect();
    let dist = WeightedScoreDistribution::new(scores.clone(), WeightProbabilities::uniform(9).unwrap()).unwrap();
    assert_eq!(weighted_quantile(&dist, 0.2).unwrap(), CorrectionQuantile::Finite(9.0));
    assert_eq!(order_statistic_quantile(&scores, 0.2), CorrectionQuantile::Finite(8.0));
}

fn weights_strategy(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..4.0], n),
            prop_oneof![Just(0.0), 0.01f64..4.0],
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn weighted_quantile_matches_brute_force(
        (scores, weights, test_w) in weights_strategy(12),
        alpha_frac in 0.0f64..1.0,
        ties in any::<bool>(),
    ) {
        let n = scores.len();
        let scores: Vec<f64> = if ties { scores.iter().map(|s| s.round()).collect() } else { scores };
        prop_assume!(weights.iter().sum::<f64>() + test_w > 0.0);
        let min_alpha = 1.0 / (n as f64 + 1.0);
        let alpha = min_alpha + alpha_frac * (0.999 - min_alpha);
        let probs = normalize(&weights, test_w);
        let oracle = brute_force_quantile(&scores, &probs.point_probs, probs.infinity_prob, alpha);
        let dist = WeightedScoreDistribution::new(scores, probs).unwrap();
        prop_assert_eq!(weighted_quantile(&dist, alpha).unwrap(), oracle);
    }

    #[test]
    fn probabilities_are_normalized((_, weights, test_w) in weights_strategy(40)) {
        prop_assume!(weights.iter().sum::<f64>() + test_w > 0.0);
        let p = normalize(&weights, test_w);
        let total: f64 = p.point_probs.iter().sum::<f64>() + p.infinity_prob;
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(p.point_probs.iter().all(|&q| q >= 0.0) && p.infinity_prob >= 0.0);
    }

    #[test]
    fn quantile_is_monotone_in_coverage(
        (scores, weights, test_w) in weights_strategy(12),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        prop_assume!(weights.iter().sum::<f64>() + test_w > 0.0);
        let n = scores.len();
        let min_alpha = 1.0 / (n as f64 + 1.0);
        let lerp = |t: f64| min_alpha + t * (0.999 - min_alpha);
        let (lo_alpha, hi_alpha) = (lerp(a.min(b)), lerp(a.max(b)));
        let dist = WeightedScoreDistribution::new(scores, normalize(&weights, test_w)).unwrap();
        // Smaller alpha = higher coverage level = larger (or equal) correction.
        let strict = weighted_quantile(&dist, lo_alpha).unwrap().as_f64();
        let loose = weighted_quantile(&dist, hi_alpha).unwrap().as_f64();
        prop_assert!(strict >= loose);
    }

    #[test]
    fn unit_weights_reduce_to_unweighted_calibration(
        scores in prop::collection::vec(-5.0f64..5.0, 4..30),
        lo in prop::collection::vec(-3.0f64..3.0, 1..4),
        spread in 0.0f64..2.0,
    ) {
        let hi: Vec<f64> = lo.iter().map(|l| l + spread).collect();
        let naive = IntervalSet::new(lo, hi).unwrap();
        let n = scores.len();
        let cal = CalibrationScores::new(scores, (0..n).collect()).unwrap();
        let weighted = ccke_prediction_set(&naive, &cal, |_| 1.0, &n, 0.2).unwrap();
        let uniform = nccke_prediction_set(&naive, &cal, 0.2).unwrap();
        prop_assert_eq!(weighted, uniform);
    }

    #[test]
    fn wider_correction_nests_intervals(
        lo in prop::collection::vec(-3.0f64..3.0, 1..5),
        spread in -1.0f64..2.0,
        q in 0.0f64..3.0,
        extra in 0.0f64..3.0,
    ) {
        let hi: Vec<f64> = lo.iter().map(|l| l + spread).collect();
        let naive = IntervalSet::new(lo, hi).unwrap();
        let small = PredictionSet::widen(&naive, CorrectionQuantile::Finite(q));
        let large = PredictionSet::widen(&naive, CorrectionQuantile::Finite(q + extra));
        for (s, l) in small.intervals().unwrap().iter().zip(large.intervals().unwrap()) {
            match (*s, *l) {
                (KpiInterval::Empty, _) => {}
                (KpiInterval::Closed { lo: a, hi: b }, KpiInterval::Closed { lo: c, hi: d }) => {
                    prop_assert!(c <= a && b <= d);
                }
                (KpiInterval::Closed { .. }, KpiInterval::Empty) => prop_assert!(false, "larger set lost an interval"),
            }
        }
    }

    #[test]
    fn score_and_coverage_are_dual(
        lo in prop::collection::vec(-3.0f64..3.0, 1..5),
        spread in -1.0f64..2.0,
        y_off in prop::collection::vec(-4.0f64..4.0, 5),
        q in -1.0f64..3.0,
    ) {
        let k = lo.len();
        let hi: Vec<f64> = lo.iter().map(|l| l + spread).collect();
        let y: Vec<f64> = lo.iter().zip(&y_off).map(|(l, o)| l + o).collect();
        let naive = IntervalSet::new(lo, hi).unwrap();
        let set = PredictionSet::widen(&naive, CorrectionQuantile::Finite(q));
        let score = compute_score(&naive, &y[..k]).unwrap();
        prop_assert_eq!(set.covers(&y[..k]).unwrap(), score <= q);
    }
}

#[test]
fn threshold_matches_closed_form() {
    assert!((quantile_threshold(0.2, 9) - 0.8 * 10.0 / 9.0).abs() < 1e-15);
    assert!((quantile_threshold(0.2, 50) - 0.8 * 51.0 / 50.0).abs() < 1e-15);
}

#[test]
fn uniform_fifty_point_calibration_uses_the_42nd_score() {
    // 0.8 * 51 / 50 = 0.816 of mass; k/51 >= 0.816 first at k = 42.
    let scores: Vec<f64> = (1..=50).map(f64::from).collect();
    let dist = WeightedScoreDistribution::new(scores, WeightProbabilities::uniform(50).unwrap()).unwrap();
    assert_eq!(weighted_quantile(&dist, 0.2).unwrap(), CorrectionQuantile::Finite(42.0));
}
