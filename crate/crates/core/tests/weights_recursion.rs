use proptest::prelude::*;
use rand::Rng;
use randact::weights::{measured_decay_rate, stationary_rate};
use randact::{
    ratio_expectation_all, riccati_sequence, riccati_step, solve_weight_fixed_point, stationary_weights,
    target_fractions, GainSpectrum, SeededRng, WeightMatrix,
};

fn spec(v: Vec<f64>) -> GainSpectrum<f64> {
    GainSpectrum::new(v).unwrap()
}

/// Random spectrum with every target fraction positive at survival `q`.
fn case_1a_spectrum(rng: &mut SeededRng, d: usize, q: f64) -> GainSpectrum<f64> {
    loop {
        let l: Vec<f64> = (0..d).map(|_| rng.random_range(1.1..3.0)).collect();
        let s = spec(l);
        if target_fractions(&s, q).unwrap().all_positive() {
            return s;
        }
    }
}

#[test]
fn stationary_weights_give_constant_ratio() {
    let mut rng = SeededRng::new(1, 0);
    for q in [1.0, 0.7, 0.3] {
        for d in 2..=5usize {
            let s = case_1a_spectrum(&mut rng, d, q);
            let p = stationary_weights(&s, q, 1e-12).unwrap().weights;
            let w = riccati_step(&p, &s, q).unwrap();
            let r = stationary_rate(&s, q);
            for i in 0..d {
                let ratio = w.get(i) / p.get(i);
                assert!((ratio / r - 1.0).abs() < 1e-8, "q={q} d={d} i={i}: {ratio} vs {r}");
            }
        }
    }
}

#[test]
fn explicit_two_dimensional_weights() {
    let mut rng = SeededRng::new(2, 0);
    for _ in 0..10 {
        let (l1, l2): (f64, f64) = (rng.random_range(0.2..4.0), rng.random_range(0.2..4.0));
        let s = spec(vec![l1, l2]);
        let p = WeightMatrix::new(vec![l1.powi(4), l2.powi(4)]).unwrap();
        let trace = riccati_sequence(&p, &s, 30, 1.0).unwrap();
        let rate = 1.0 / (l1.powi(-2) + l2.powi(-2));
        for r in trace.ratios().iter().flatten() {
            assert!((r / rate - 1.0).abs() < 1e-10, "{l1} {l2}");
        }
        let dr = measured_decay_rate(&trace);
        assert!((dr.rate / rate - 1.0).abs() < 1e-10);
    }
}

#[test]
fn fixed_point_residual_for_random_targets() {
    let mut rng = SeededRng::new(3, 0);
    for k in 0..100 {
        let d = 2 + k % 4;
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let v: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let p = solve_weight_fixed_point(&v, 1e-10).unwrap();
        assert_eq!(p.get(0), 1.0);
        let m = ratio_expectation_all(&p).values;
        for i in 0..d {
            assert!((m[i] - v[i]).abs() <= 1e-10, "v={v:?} i={i}: {}", m[i]);
        }
    }
}

#[test]
fn solved_ratio_increases_with_target() {
    let base = [0.2, 0.3, 0.5];
    let p0 = solve_weight_fixed_point(&base, 1e-11).unwrap();
    for delta in [0.01, 0.05, 0.1] {
        let v = [base[0] + delta, base[1] - delta, base[2]];
        let p = solve_weight_fixed_point(&v, 1e-11).unwrap();
        assert!(p.get(0) / p.get(1) > p0.get(0) / p0.get(1), "delta={delta}");
    }
}

#[test]
fn sign_flip_leaves_recursion_unchanged() {
    let s = spec(vec![1.3, -2.0, 1.7]);
    let p = WeightMatrix::new(vec![1.0, 2.0, 0.5]).unwrap();
    let a = riccati_step(&p, &s, 0.8).unwrap();
    let b = riccati_step(&p, &s.negated(), 0.8).unwrap();
    assert_eq!(a, b);
    assert_eq!(target_fractions(&s, 1.0).unwrap(), target_fractions(&s.negated(), 1.0).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn riccati_step_preserves_positivity(
        l in proptest::collection::vec(0.1f64..5.0, 2..6),
        w in proptest::collection::vec(1e-3f64..1e3, 6),
        q in 0.01f64..=1.0,
    ) {
        let d = l.len();
        let out = riccati_step(&WeightMatrix::new(w[..d].to_vec()).unwrap(), &spec(l), q).unwrap();
        prop_assert!(out.weights().iter().all(|&x| x > 0.0 && x.is_finite()));
    }
}
