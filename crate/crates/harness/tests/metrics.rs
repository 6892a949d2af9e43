use ccke_core::conformal::{CorrectionQuantile, IntervalSet, PredictionSet};
use ccke_harness::metrics::{evaluate_coverage, evaluate_inefficiency};
use ccke_harness::HarnessError;
use proptest::prelude::*;

fn set(lo: &[f64], hi: &[f64], q: f64) -> PredictionSet {
    PredictionSet::widen(&IntervalSet::new(lo.to_vec(), hi.to_vec()).unwrap(), CorrectionQuantile::Finite(q))
}

fn unbounded(k: usize) -> PredictionSet {
    PredictionSet::widen(&IntervalSet::new(vec![0.0; k], vec![1.0; k]).unwrap(), CorrectionQuantile::Infinite)
}

#[test]
fn unbounded_sets_cover_everything() {
    let sets = vec![unbounded(3); 5];
    let truths = vec![vec![1e9, -1e9, 0.0]; 5];
    assert_eq!(evaluate_coverage(&sets, &truths).unwrap(), 1.0);
}

#[test]
fn empty_sets_cover_nothing() {
    let sets = vec![set(&[2.0], &[1.0], 0.0); 4];
    assert!(sets[0].intervals().unwrap()[0] == ccke_core::conformal::KpiInterval::Empty);
    let truths = vec![vec![1.5]; 4];
    assert_eq!(evaluate_coverage(&sets, &truths).unwrap(), 0.0);
}

#[test]
fn coverage_needs_every_kpi() {
    let sets = vec![set(&[0.0, 0.0], &[1.0, 1.0], 0.0); 6];
    let truths = vec![vec![0.5, 3.0]; 6];
    assert_eq!(evaluate_coverage(&sets, &truths).unwrap(), 0.0);
    let mixed = vec![vec![0.5, 0.5], vec![0.5, 3.0], vec![0.5, 0.5], vec![2.0, 0.5]];
    assert_eq!(evaluate_coverage(&sets[..4], &mixed).unwrap(), 0.5);
}

#[test]
fn coverage_rejects_mismatched_lengths() {
    let sets = vec![set(&[0.0], &[1.0], 0.0); 2];
    assert!(matches!(
        evaluate_coverage(&sets, &[vec![0.5]]),
        Err(HarnessError::LengthMismatch { .. })
    ));
    assert!(evaluate_coverage(&sets, &[vec![0.5, 0.5], vec![0.5]]).is_err());
}

#[test]
fn zero_widths_give_zero_inefficiency() {
    let sets = vec![set(&[3.0, 4.0], &[3.0, 4.0], 0.0); 3];
    let ineff = evaluate_inefficiency(&sets, &[1.0; 3], &[(0.0, 10.0); 3]).unwrap();
    assert_eq!((ineff.raw, ineff.clipped, ineff.n_unbounded), (0.0, 0.0, 0));
}

#[test]
fn single_kpi_width_four_over_two() {
    let ineff = evaluate_inefficiency(&[set(&[1.0], &[5.0], 0.0)], &[2.0], &[(0.0, 10.0)]).unwrap();
    assert_eq!(ineff.raw, 2.0);
    assert_eq!(ineff.clipped, 2.0);
}

#[test]
fn unbounded_sets_are_counted_and_clipped_to_the_domain() {
    let sets = vec![set(&[0.0], &[2.0], 0.0), unbounded(1)];
    let ineff = evaluate_inefficiency(&sets, &[1.0, 2.0], &[(0.0, 10.0), (1.0, 9.0)]).unwrap();
    assert_eq!(ineff.n_unbounded, 1);
    assert_eq!(ineff.raw, 2.0);
    assert_eq!(ineff.clipped, (2.0 + 8.0 / 2.0) / 2.0);
    let all = evaluate_inefficiency(&[unbounded(2)], &[1.0], &[(0.0, 1.0)]).unwrap();
    assert!(all.raw.is_nan());
    assert_eq!(all.clipped, 1.0);
}

#[test]
fn bounded_intervals_past_the_domain_are_clipped() {
    let ineff = evaluate_inefficiency(&[set(&[-5.0], &[20.0], 0.0)], &[10.0], &[(0.0, 10.0)]).unwrap();
    assert_eq!(ineff.raw, 2.5);
    assert_eq!(ineff.clipped, 1.0);
    assert_eq!(ineff.n_unbounded, 0);
}

#[test]
fn empty_intervals_have_zero_width() {
    let ineff = evaluate_inefficiency(&[set(&[0.0, 5.0], &[4.0, 1.0], 0.5)], &[1.0], &[(0.0, 9.0)]).unwrap();
    assert_eq!(ineff.raw, 5.0 / 2.0);
}

#[test]
fn nonpositive_normalizers_are_rejected() {
    for bad in [0.0, -1.0, f64::NAN] {
        let r = evaluate_inefficiency(&[set(&[0.0], &[1.0], 0.0)], &[bad], &[(0.0, 1.0)]);
        assert!(matches!(r, Err(HarnessError::InvalidNormalizer { index: 0, .. })));
    }
}

proptest! {
    #[test]
    fn doubling_normalizers_halves_inefficiency(
        rows in prop::collection::vec((-50.0f64..50.0, 0.0f64..40.0, 0.1f64..100.0, any::<bool>()), 1..30),
    ) {
        let sets: Vec<_> = rows.iter().map(|&(lo, w, _, inf)| if inf { unbounded(1) } else { set(&[lo], &[lo + w], 0.0) }).collect();
        let eps: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let doubled: Vec<f64> = eps.iter().map(|e| 2.0 * e).collect();
        let domains = vec![(-100.0, 100.0); rows.len()];
        let a = evaluate_inefficiency(&sets, &eps, &domains).unwrap();
        let b = evaluate_inefficiency(&sets, &doubled, &domains).unwrap();
        prop_assert!((b.clipped - a.clipped / 2.0).abs() <= 1e-12 * a.clipped.max(1.0));
        if !a.raw.is_nan() {
            prop_assert!((b.raw - a.raw / 2.0).abs() <= 1e-12 * a.raw.max(1.0));
        }
    }
}
