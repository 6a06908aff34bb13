use affectgan_core::affect_metrics::{
    affect_loss, ccc, class_weights, evaluate, make_folds, pearson_cor, AffectEstimate, AffectSeries, ClassWeighting,
    Dimension, LossKind, WeightingMode,
};
use proptest::prelude::*;

fn series(p: &[f64], t: &[f64]) -> AffectSeries {
    AffectSeries::new(p.to_vec(), t.to_vec(), Dimension::Arousal).unwrap()
}

fn paired(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-1.0f64..1.0, len), prop::collection::vec(-1.0f64..1.0, len))
}

proptest! {
    #[test]
    fn ccc_is_bounded_by_cor((p, t) in (3usize..60).prop_flat_map(paired)) {
        let s = series(&p, &t);
        let (r, c) = (pearson_cor(&s).unwrap(), ccc(&s).unwrap());
        prop_assume!(!r.degenerate);
        prop_assert!(c.value.abs() <= r.value.abs() + 1e-12);
    }

    #[test]
    fn cor_ignores_positive_affine_maps((p, t) in (3usize..60).prop_flat_map(paired), a in 0.1f64..5.0, b in -2.0f64..2.0) {
        let moved: Vec<f64> = p.iter().map(|v| a * v + b).collect();
        let r0 = pearson_cor(&series(&p, &t)).unwrap();
        prop_assume!(!r0.degenerate);
        let r1 = pearson_cor(&series(&moved, &t)).unwrap();
        prop_assert!((r0.value - r1.value).abs() < 1e-9);
    }

    #[test]
    fn ccc_is_symmetric((p, t) in (2usize..60).prop_flat_map(paired)) {
        let a = ccc(&series(&p, &t)).unwrap().value;
        let b = ccc(&series(&t, &p)).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn composite_loss_is_nonnegative((p, t) in (2usize..40).prop_flat_map(paired)) {
        let pred: Vec<AffectEstimate> = p.iter().zip(&t).map(|(&a, &b)| AffectEstimate::new(a, b)).collect();
        let tgt: Vec<AffectEstimate> = t.iter().zip(&p).map(|(&a, &b)| AffectEstimate::new(a, b * 0.5)).collect();
        let w = class_weights(&t, 8, WeightingMode::Inverse).unwrap();
        let l = affect_loss(&pred, &tgt, [&w, &w], LossKind::Composite).unwrap();
        prop_assert!(l.value >= 0.0 && l.value.is_finite());
    }
}

#[test]
fn report_matches_individual_metrics() {
    let pred = [(0.1, 0.3), (-0.4, 0.2), (0.3, -0.1), (0.8, 0.0)].map(|(v, a)| AffectEstimate::new(v, a));
    let tgt = [(0.0, 0.5), (-0.5, 0.1), (0.5, -0.3), (0.6, 0.2)].map(|(v, a)| AffectEstimate::new(v, a));
    let r = evaluate(&pred, &tgt).unwrap();
    for dim in Dimension::BOTH {
        let s = AffectSeries::from_estimates(&pred, &tgt, dim).unwrap();
        let m = r.dimension(dim);
        assert_eq!(m.cor, pearson_cor(&s).unwrap().value);
        assert_eq!(m.ccc, ccc(&s).unwrap().value);
    }
    assert_eq!(r.mean_ccc(), (r.valence_ccc + r.arousal_ccc) / 2.0);
}

#[test]
fn lin_hand_example() {
    let c = ccc(&series(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])).unwrap();
    assert!((c.value - 8.0 / 22.0).abs() < 1e-12);
}

#[test]
fn perfect_predictions_cost_nothing_under_any_weighting() {
    let t: Vec<AffectEstimate> = (0..12).map(|i| AffectEstimate::new(i as f64 / 12.0 - 0.5, 0.4 - i as f64 / 20.0)).collect();
    let labels: Vec<f64> = t.iter().map(|e| e.valence).collect();
    for mode in [WeightingMode::Literal, WeightingMode::Inverse, WeightingMode::Uniform] {
        let w = class_weights(&labels, 20, mode).unwrap();
        let l = affect_loss(&t, &t, [&w, &w], LossKind::Composite).unwrap();
        assert!(l.value.abs() < 1e-12, "{mode}: {}", l.value);
    }
    let single = ClassWeighting::single_bin();
    assert!(affect_loss(&t, &t, [&single, &single], LossKind::MseOnly).unwrap().value == 0.0);
}

#[test]
fn folds_cover_subjects_once() {
    let subjects: Vec<String> = (0..11).map(|i| format!("s{i:02}")).collect();
    let folds = make_folds(&subjects, 5, 3).unwrap();
    let mut sizes: Vec<usize> = folds.iter().map(|f| f.test_subjects.len()).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, [2, 2, 2, 2, 3]);
    let mut seen: Vec<&String> = folds.iter().flat_map(|f| &f.test_subjects).collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 11);
    assert!(folds.iter().all(|f| f.train_subjects.is_disjoint(&f.test_subjects)));
}
