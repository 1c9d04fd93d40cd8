//! Fast self-checks against independent oracles. Each completes in well
//! under a second and the Monte Carlo ones use 5σ bands, so the outcome does
//! not depend on the seed.

use rand::Rng;

use crate::controller::drop_threshold;
use crate::expectation::ratio_expectation_all;
use crate::model::{GainSpectrum, WeightMatrix};
use crate::sphere::{sample_uniform_into, SeededRng};
use crate::weights::{riccati_sequence, stationary_weights};

/// Expectation routine under test: `p ↦ (E[M_11], …, E[M_dd])`.
pub type ExpectationFn<'a> = &'a (dyn Fn(&WeightMatrix<f64>) -> Vec<f64> + Sync);

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, worst: f64, limit: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst <= limit,
        detail: format!("worst {worst:.3e} (limit {limit:.1e})"),
    }
}

fn quadrature(p: &WeightMatrix<f64>) -> Vec<f64> {
    ratio_expectation_all(p).values
}

/// All checks with the library's quadrature.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    run_checks_with(seed, &quadrature)
}

/// All checks, with `expectation` standing in for the quadrature in the
/// trace and closed-form checks.
pub fn run_checks_with(seed: u64, expectation: ExpectationFn<'_>) -> Vec<CheckOutcome> {
    vec![
        trace_identity(seed, expectation),
        closed_form_2d(expectation),
        geometric_weights(),
        sphere_moments(seed),
        drop_calibration(seed),
    ]
}

fn trace_identity(seed: u64, expectation: ExpectationFn<'_>) -> CheckOutcome {
    let mut rng = SeededRng::new(seed, 0);
    let mut worst = 0.0f64;
    for k in 0..40 {
        let d = 2 + k % 5;
        let p: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect();
        let p = WeightMatrix::new(p).expect("positive weights");
        let sum: f64 = expectation(&p).iter().sum();
        worst = worst.max((sum - 1.0).abs());
    }
    outcome("trace identity", worst, 1e-10)
}

fn closed_form_2d(expectation: ExpectationFn<'_>) -> CheckOutcome {
    let mut worst = 0.0f64;
    for k in 0..25 {
        let alpha = 10f64.powf(-4.0 + 8.0 * k as f64 / 24.0);
        let p = WeightMatrix::new(vec![1.0, alpha]).expect("positive weights");
        let e = expectation(&p)[0];
        worst = worst.max((e - 1.0 / (alpha.sqrt() + 1.0)).abs());
    }
    outcome("2d closed form", worst, 1e-8)
}

fn geometric_weights() -> CheckOutcome {
    let mut worst = 0.0f64;
    for (l1, l2) in [(1.5f64, 2.0f64), (1.2, 3.5), (2.7, 1.1)] {
        let spec = GainSpectrum::new(vec![l1, l2]).expect("nonzero");
        let p = WeightMatrix::new(vec![l1.powi(4), l2.powi(4)]).expect("positive");
        let rate = l1 * l1 * l2 * l2 / (l1 * l1 + l2 * l2);
        let trace = riccati_sequence(&p, &spec, 20, 1.0).expect("valid");
        for r in trace.ratios().iter().flatten() {
            worst = worst.max((r / rate - 1.0).abs());
        }
    }
    let spec = GainSpectrum::new(vec![1.3f64, 1.6, 2.0]).expect("nonzero");
    let p = stationary_weights(&spec, 1.0, 1e-12).expect("case 1a").weights;
    let rate = 2.0 / spec.inverse_square_sum();
    let trace = riccati_sequence(&p, &spec, 20, 1.0).expect("valid");
    for r in trace.ratios().iter().flatten() {
        worst = worst.max((r / rate - 1.0).abs());
    }
    outcome("geometric weights", worst, 1e-7)
}

fn sphere_moments(seed: u64) -> CheckOutcome {
    const N: usize = 100_000;
    let mut rng = SeededRng::new(seed, 1);
    let mut worst = 0.0f64;
    for d in [2usize, 3, 5] {
        let mut b = vec![0.0f64; d];
        let (mut s2, mut s4) = (0.0, 0.0);
        for _ in 0..N {
            sample_uniform_into(&mut b, &mut rng);
            s2 += b[0] * b[0];
            s4 += b[0].powi(4);
        }
        let df = d as f64;
        let m2 = 1.0 / df;
        let m4 = 3.0 / (df * (df + 2.0));
        let m8 = 105.0 / (df * (df + 2.0) * (df + 4.0) * (df + 6.0));
        let se2 = ((m4 - m2 * m2) / N as f64).sqrt();
        let se4 = ((m8 - m4 * m4) / N as f64).sqrt();
        worst = worst
            .max((s2 / N as f64 - m2).abs() / se2)
            .max((s4 / N as f64 - m4).abs() / se4);
    }
    outcome("uniform sphere moments (sigmas)", worst, 5.0)
}

fn drop_calibration(seed: u64) -> CheckOutcome {
    const N: usize = 100_000;
    let mut rng = SeededRng::new(seed, 2);
    let mut worst = 0.0f64;
    for (d, m, q) in [(2usize, 1usize, 0.5), (4, 2, 0.8), (5, 3, 0.3)] {
        let h: f64 = drop_threshold(d, m, q).expect("valid range");
        let mut b = vec![0.0f64; d];
        let mut drops = 0usize;
        for _ in 0..N {
            sample_uniform_into(&mut b, &mut rng);
            let t: f64 = b[..m].iter().map(|x| x * x).sum::<f64>().sqrt();
            if t * h <= 1.0 {
                drops += 1;
            }
        }
        let se = (q * (1.0 - q) / N as f64).sqrt();
        worst = worst.max((drops as f64 / N as f64 - (1.0 - q)).abs() / se);
    }
    outcome("drop calibration (sigmas)", worst, 5.0)
}
