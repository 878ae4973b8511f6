mod support;

use proptest::prelude::*;
use support::{loss_points, worst_fd_errors, FAMILIES};
use triboost::losses::{eval_loss, SCORE_CLAMP};
use triboost::{LossFamily, LossSpec};

#[test]
fn gradients_and_hessians_match_finite_differences() {
    for (i, family) in FAMILIES.iter().enumerate() {
        let points = loss_points(*family, 200, 1000 + i as u64);
        let (regular, near) = worst_fd_errors(&points);
        assert!(regular <= 1e-6, "{family:?}: worst relative error {regular:e}");
        assert!(near <= 1e-5, "{family:?}: worst near-threshold error {near:e}");
    }
}

#[test]
fn tobit_far_tails_stay_accurate() {
    // z well past the erfc switch on both censored branches
    let spec = LossSpec::tobit(1.0, 0.0, 1.0).unwrap();
    for f in [10.0, 20.0, 35.0] {
        let t = eval_loss(&spec, 0.0, &[f]).unwrap();
        let fd = support::fd_gradient(&spec, 0.0, &[f], 0);
        assert!(support::rel_err(t.gradient[0], fd) < 1e-6, "f={f}");
        assert!(t.hessian[0] > 0.0 && t.hessian[0] <= 1.0);
        let t = eval_loss(&spec, 1.0, &[1.0 - f]).unwrap();
        assert!(t.gradient[0] < 0.0 && t.loss.is_finite());
    }
}

fn point() -> impl Strategy<Value = (LossSpec, f64, Vec<f64>)> {
    let score = -SCORE_CLAMP..SCORE_CLAMP;
    prop_oneof![
        (0u8..2, score.clone()).prop_map(|(y, f)| (LossSpec::binary_logistic(), f64::from(y), vec![f])),
        (2usize..6).prop_flat_map(move |k| {
            (0..k, prop::collection::vec(-SCORE_CLAMP..SCORE_CLAMP, k))
                .prop_map(move |(y, s)| (LossSpec::multiclass(k).unwrap(), y as f64, s))
        }),
        (0u32..1000, score.clone()).prop_map(|(y, f)| (LossSpec::poisson(), f64::from(y), vec![f])),
        (1e-3f64..1e3, score.clone()).prop_map(|(y, f)| (LossSpec::gamma(10.0).unwrap(), y, vec![f])),
        (-5.0f64..5.0, score)
            .prop_map(|(y, f)| (LossSpec::tobit(1.0, -1.0, 1.0).unwrap(), y.clamp(-1.0, 1.0), vec![f])),
        // r^2 exp(-2 F2) itself leaves the f64 range once F2 < -355
        (-100.0f64..100.0, -50.0f64..50.0, -300.0f64..300.0)
            .prop_map(|(y, f1, f2)| (LossSpec::mean_scale(), y, vec![f1, f2])),
    ]
}

proptest! {
    #[test]
    fn hessians_are_nonnegative_and_outputs_finite((spec, y, scores) in point()) {
        let t = eval_loss(&spec, y, &scores).unwrap();
        prop_assert!(t.loss.is_finite());
        prop_assert!(t.gradient.iter().all(|g| g.is_finite()));
        prop_assert!(t.hessian.iter().all(|h| *h >= 0.0 && h.is_finite()), "{:?}", t.hessian);
    }

    #[test]
    fn two_class_softmax_reduces_to_logistic(f in -50.0f64..50.0, y in 0u8..2) {
        let soft = eval_loss(&LossSpec::multiclass(2).unwrap(), f64::from(1 - y), &[f, 0.0]).unwrap();
        let bin = eval_loss(&LossSpec::binary_logistic(), f64::from(y), &[f]).unwrap();
        prop_assert!((soft.gradient[0] - bin.gradient[0]).abs() <= 1e-12);
        prop_assert!((soft.hessian[0] - bin.hessian[0]).abs() <= 1e-12);
        prop_assert!((soft.loss - bin.loss).abs() <= 1e-12 * bin.loss.max(1.0));
    }

    #[test]
    fn softmax_gradient_sums_to_zero(scores in prop::collection::vec(-30.0f64..30.0, 2..8), pick in 0usize..8) {
        let k = scores.len();
        let t = eval_loss(&LossSpec::multiclass(k).unwrap(), (pick % k) as f64, &scores).unwrap();
        prop_assert!(t.gradient.iter().sum::<f64>().abs() < 1e-12);
    }
}

#[test]
fn classification_flag() {
    assert!(LossFamily::BinaryLogistic.is_classification());
    assert!(LossFamily::MulticlassSoftmax.is_classification());
    assert!(!LossFamily::Tobit.is_classification());
}
