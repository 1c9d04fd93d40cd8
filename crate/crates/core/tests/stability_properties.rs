use proptest::prelude::*;
use randact::stability::{boundary_2d, boundary_4d_paired, threshold_2d};
use randact::{classify_default, threshold_r, Decision, GainSpectrum, StabilityCase};

fn spec(v: Vec<f64>) -> GainSpectrum<f64> {
    GainSpectrum::new(v).unwrap()
}

#[test]
fn two_dimensional_thresholds_agree_on_grid() {
    for i in 0..50 {
        for j in 0..50 {
            let l1 = 1.01 + 3.0 * i as f64 / 49.0;
            let l2 = 1.01 + 3.0 * j as f64 / 49.0;
            let r = threshold_r(&spec(vec![l1, l2]));
            let r2: f64 = threshold_2d(l1, l2);
            assert_eq!((r - 1.0).signum(), (r2 - 1.0).signum(), "{l1} {l2}");
        }
    }
}

#[test]
fn case_1b_implies_r_above_one() {
    for i in 0..40 {
        for j in 0..40 {
            let l = vec![1.01 + 0.1 * i as f64, 1.01 + 0.1 * j as f64, 2.5];
            let v = classify_default(&spec(l));
            if v.case == StabilityCase::Case1b {
                assert!(v.r > 1.0);
                assert_eq!(v.decision, Decision::Unstabilizable);
            }
        }
    }
}

#[test]
fn single_unstable_mode_is_always_stabilizable() {
    for l in [1.5, 10.0, 1e3] {
        let v = classify_default(&spec(vec![l, 0.3, -0.9]));
        assert_eq!(v.r, 0.0);
        assert_eq!(v.decision, Decision::Stabilizable);
    }
}

#[test]
fn paired_four_dimensional_boundary() {
    for k in 1..20 {
        let l1 = 1.0 + (2f64.sqrt() - 1.0) * k as f64 / 20.0;
        let b: f64 = boundary_4d_paired(l1);
        let below = classify_default(&spec(vec![l1, l1, b * 0.99, b * 0.99]));
        let above = classify_default(&spec(vec![l1, l1, b * 1.01, b * 1.01]));
        assert_eq!(below.decision, Decision::Stabilizable, "l1={l1}");
        assert_eq!(above.decision, Decision::Unstabilizable, "l1={l1}");
    }
    for l in [1.42, 1.6, 3.0] {
        for other in [0.2, 0.9, 1.2, 2.0] {
            let v = classify_default(&spec(vec![l, l, other, other]));
            assert_eq!(v.decision, Decision::Unstabilizable, "{l} {other}");
        }
    }
}

#[test]
fn two_dimensional_boundary_flips_decision() {
    for k in 1..30 {
        let l1 = 1.05 + 0.1 * k as f64;
        let b: f64 = boundary_2d(l1);
        assert_eq!(classify_default(&spec(vec![l1, b * 0.99])).decision, Decision::Stabilizable);
        assert_eq!(classify_default(&spec(vec![l1, b * 1.01])).decision, Decision::Unstabilizable);
    }
}

proptest! {
    #[test]
    fn r_is_monotone_in_unstable_magnitudes(
        l in proptest::collection::vec(1.01f64..4.0, 2..6),
        idx in 0usize..6,
        bump in 1.0f64..2.0,
    ) {
        let i = idx % l.len();
        let mut up = l.clone();
        up[i] *= bump;
        prop_assert!(threshold_r(&spec(up)) >= threshold_r(&spec(l)));
    }

    #[test]
    fn classification_is_sign_invariant(l in proptest::collection::vec(0.05f64..4.0, 1..6), flips in proptest::collection::vec(any::<bool>(), 6)) {
        let s = spec(l.clone());
        let flipped = spec(l.iter().zip(&flips).map(|(&x, &f)| if f { -x } else { x }).collect());
        let a = classify_default(&s);
        let b = classify_default(&flipped);
        prop_assert_eq!(a.r, b.r);
        prop_assert_eq!(a.case, b.case);
        prop_assert_eq!(a.decision, b.decision);
    }
}
