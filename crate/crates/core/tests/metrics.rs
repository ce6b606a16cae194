use polylab::fitter::MarginModel;
use polylab::geometry::HPolytope;
use polylab::metrics::{facet_error_histogram, facet_records, iou, log_edges, matching_error};
use proptest::prelude::*;

fn boxed() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-3.0..0.0f64, 3), prop::collection::vec(0.5..3.0f64, 3))
        .prop_map(|(lo, w)| (lo.clone(), lo.iter().zip(&w).map(|(a, b)| a + b + 0.5).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matching_ignores_row_scale_and_order(
        (lo, hi) in boxed(),
        scales in prop::collection::vec(0.01..100.0f64, 6),
        rot in 0usize..6,
    ) {
        let truth = HPolytope::bounding_box(&lo, &hi);
        let mut est = MarginModel::from_polytope(&truth);
        for (row, s) in est.a.iter_mut().zip(&scales) {
            row.iter_mut().for_each(|v| *v *= s);
        }
        est.a.rotate_left(rot);
        est.b.rotate_left(rot);
        prop_assert_eq!(matching_error(&truth, &est).error, 0.0);
    }

    #[test]
    fn iou_is_symmetric_and_bounded((lo, hi) in boxed(), shift in prop::collection::vec(-2.0..2.0f64, 3)) {
        let p = HPolytope::bounding_box(&lo, &hi);
        let q = p.translated(&shift);
        let a = iou(&p, &q).unwrap();
        let b = iou(&q, &p).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&a));
        // Boxes have a closed form.
        let inter: f64 = lo.iter().zip(&hi).zip(&shift)
            .map(|((l, h), s)| ((h.min(h + s) - l.max(l + s)).max(0.0)))
            .product();
        let vol: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).product();
        prop_assert!((a - inter / (2.0 * vol - inter)).abs() < 1e-9);
    }

    #[test]
    fn histogram_preserves_totals((lo, hi) in boxed(), drop in 0usize..6) {
        let truth = HPolytope::bounding_box(&lo, &hi);
        let mut est = MarginModel::from_polytope(&truth);
        est.a.remove(drop);
        est.b.remove(drop);
        let report = matching_error(&truth, &est);
        let records = facet_records(&truth, &report).unwrap();
        let bins = facet_error_histogram(&records, &log_edges(0.5, 5.0, 5));
        prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 6);
        prop_assert_eq!(bins.iter().map(|b| b.errors).sum::<usize>(), 1);
    }
}
