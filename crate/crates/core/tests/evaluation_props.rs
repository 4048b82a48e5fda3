use prnu_core::evaluation::{auc, mann_whitney, roc, tpr_at_fpr, Label, LabeledScore};
use prnu_core::fingerprint::estimate_prnu_from_images;
use prnu_core::imaging::{FrameSet, ResidualConfig};
use prnu_core::ImagePlane;
use proptest::prelude::*;

fn labeled(raw: &[(i32, bool)]) -> Vec<LabeledScore> {
    raw.iter()
        .enumerate()
        .map(|(i, &(s, pos))| LabeledScore {
            score: s as f64,
            label: if pos { Label::Positive } else { Label::Negative },
            query_id: format!("q{i}"),
            camera_id: "c".into(),
        })
        .collect()
}

fn two_classes() -> impl Strategy<Value = Vec<(i32, bool)>> {
    prop::collection::vec((-20i32..20, any::<bool>()), 2..60)
        .prop_filter("both labels", |v| v.iter().any(|x| x.1) && v.iter().any(|x| !x.1))
}

proptest! {
    #[test]
    fn auc_is_the_rank_statistic(raw in two_classes()) {
        let s = labeled(&raw);
        prop_assert!((auc(&roc(&s).unwrap()) - mann_whitney(&s)).abs() <= 1e-12);
    }

    #[test]
    fn monotone_transforms_keep_the_curve(raw in two_classes(), gain in 0.1f64..10.0, offset in -5.0f64..5.0) {
        let s = labeled(&raw);
        let t: Vec<LabeledScore> = s
            .iter()
            .map(|x| LabeledScore { score: (gain * x.score + offset).exp().ln_1p(), ..x.clone() })
            .collect();
        let (a, b) = (roc(&s).unwrap(), roc(&t).unwrap());
        prop_assert_eq!(&a.points, &b.points);
        prop_assert_eq!(tpr_at_fpr(&a, 0.1), tpr_at_fpr(&b, 0.1));
    }

    #[test]
    fn curve_ignores_input_order(raw in two_classes(), rot in 0usize..60) {
        let s = labeled(&raw);
        let mut r = s.clone();
        let k = rot % r.len();
        r.rotate_left(k);
        r.reverse();
        prop_assert_eq!(roc(&s).unwrap(), roc(&r).unwrap());
    }

    #[test]
    fn estimator_ignores_frame_order(seed in any::<u64>(), rot in 1usize..5) {
        let frames: Vec<ImagePlane> = (0..5u64)
            .map(|f| ImagePlane::from_fn(16, 16, |r, c| {
                let h = (seed ^ (f * 7919 + (r * 16 + c) as u64)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                60.0 + (h >> 40) as f64 / (1u64 << 24) as f64 * 120.0
            }))
            .collect();
        let mut shuffled = frames.clone();
        shuffled.rotate_left(rot);
        let cfg = ResidualConfig::default();
        let a = estimate_prnu_from_images(&FrameSet::from_sequence(frames, "a").unwrap(), &cfg).unwrap();
        let b = estimate_prnu_from_images(&FrameSet::from_sequence(shuffled, "b").unwrap(), &cfg).unwrap();
        for (x, y) in a.plane.data().iter().zip(b.plane.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}
