use osteo::eval::{binary_scores, confusion, metrics, Averaging};
use proptest::prelude::*;

fn labels(k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..60).prop_flat_map(move |n| (prop::collection::vec(0..k, n), prop::collection::vec(0..k, n)))
}

/// Per-class precision and recall counted directly from label pairs.
fn oracle(truth: &[usize], pred: &[usize], c: usize) -> (f64, f64) {
    let pairs = || truth.iter().zip(pred);
    let tp = pairs().filter(|(&t, &p)| t == c && p == c).count() as f64;
    let predicted = pairs().filter(|(_, &p)| p == c).count() as f64;
    let actual = pairs().filter(|(&t, _)| t == c).count() as f64;
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    (div(tp, predicted), div(tp, actual))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn scores_are_bounded_and_counts_conserved((truth, pred) in labels(4)) {
        let cm = confusion(&truth, &pred, 4).unwrap();
        prop_assert_eq!(cm.total() as usize, truth.len());
        for c in 0..4 {
            let b = cm.one_vs_rest(c);
            prop_assert_eq!((b.tp + b.fp + b.fn_ + b.tn) as usize, truth.len());
        }
        let s = metrics(&cm, Averaging::Macro).unwrap();
        for v in [s.accuracy, s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(s.per_class.iter().map(|c| c.support).sum::<u64>() as usize, truth.len());
    }

    #[test]
    fn f1_is_the_harmonic_mean((truth, pred) in labels(3)) {
        let cm = confusion(&truth, &pred, 3).unwrap();
        for c in 0..3 {
            let (p, r, f1) = binary_scores(cm.one_vs_rest(c));
            if p + r > 0.0 {
                prop_assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
                prop_assert!(f1 <= p.max(r) + 1e-12 && f1 >= p.min(r) - 1e-12);
            } else {
                prop_assert_eq!(f1, 0.0);
            }
        }
    }

    #[test]
    fn sample_order_does_not_matter((truth, pred) in labels(4), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..truth.len()).collect();
        osteo::Rng::new(seed).shuffle(&mut order);
        let t2: Vec<usize> = order.iter().map(|&i| truth[i]).collect();
        let p2: Vec<usize> = order.iter().map(|&i| pred[i]).collect();
        let a = metrics(&confusion(&truth, &pred, 4).unwrap(), Averaging::Macro).unwrap();
        let b = metrics(&confusion(&t2, &p2, 4).unwrap(), Averaging::Macro).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn macro_and_positive_match_the_oracle((truth, pred) in labels(2)) {
        let cm = confusion(&truth, &pred, 2).unwrap();
        let m = metrics(&cm, Averaging::Macro).unwrap();
        let per: Vec<(f64, f64)> = (0..2).map(|c| oracle(&truth, &pred, c)).collect();
        prop_assert!((m.precision - (per[0].0 + per[1].0) / 2.0).abs() < 1e-9);
        prop_assert!((m.recall - (per[0].1 + per[1].1) / 2.0).abs() < 1e-9);
        let acc = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64 / truth.len() as f64;
        prop_assert!((m.accuracy - acc).abs() < 1e-12);
        let pos = metrics(&cm, Averaging::Positive(1)).unwrap();
        prop_assert!((pos.precision - per[1].0).abs() < 1e-9 && (pos.recall - per[1].1).abs() < 1e-9);
    }
}

#[test]
fn mismatched_or_out_of_range_labels_are_rejected() {
    assert!(confusion(&[0, 1], &[0], 2).is_err());
    assert!(confusion(&[0, 2], &[0, 1], 2).is_err());
    assert!(metrics(&confusion(&[], &[], 2).unwrap(), Averaging::Macro).is_err());
    assert!(metrics(&confusion(&[0], &[0], 2).unwrap(), Averaging::Positive(2)).is_err());
}
