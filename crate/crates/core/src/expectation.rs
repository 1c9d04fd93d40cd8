//! Expectations of the quadratic-form ratios `p_i b_i² / Σ_k p_k b_k²` for a
//! direction `b` uniform on the sphere.
//!
//! These are the diagonal entries of `E[M]`, where
//! `M = W B Bᵀ / (Bᵀ W B)`; the off-diagonal entries vanish because each is an
//! odd function of a single coordinate of `B`.
//!
//! The ratio is scale free, so `b` may be replaced by a standard Gaussian
//! vector `z`. Writing `1/S = ∫_0^∞ e^{-tS} dt` and using the Gaussian moment
//! generating function gives
//!
//! ```text
//! E[p_i z_i² / Σ p_k z_k²] = ∫_0^∞ p_i (1 + 2t p_i)^{-3/2} ∏_{k≠i} (1 + 2t p_k)^{-1/2} dt
//! ```
//!
//! which is integrated adaptively after mapping `t = s / (1 - s)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::WeightMatrix;
use crate::quadrature::integrate_adaptive;
use crate::scalar::Scalar;
use crate::sphere::sample_uniform_into;

/// Default Monte Carlo sample count.
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

const QUAD_ABS_TOL: f64 = 1e-14;
const QUAD_MAX_INTERVALS: usize = 4000;

/// How a [`RatioExpectationReport`] was computed.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpectationMethod<T = f64> {
    /// Adaptive quadrature; `error_bound` is the largest per-entry estimate.
    Quadrature { error_bound: T },
    /// Sample means with their standard errors.
    MonteCarlo { n_samples: usize, std_errors: Vec<T> },
}

/// `E[M_ii]` for every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioExpectationReport<T = f64> {
    pub values: Vec<T>,
    pub method: ExpectationMethod<T>,
}

impl<T: Scalar> RatioExpectationReport<T> {
    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }
}

fn quad_tol<T: Scalar>() -> T {
    T::of(QUAD_ABS_TOL).max(T::epsilon() * T::of(64.0))
}

/// Integral for one coordinate with weights already scaled so `max p = 1`.
fn ratio_integral<T: Scalar>(p: &[T], i: usize) -> (T, T) {
    let d = p.len();
    if d == 1 {
        return (T::one(), T::zero());
    }
    let two = T::of(2.0);
    let half_dim_minus_one = T::of(d as f64 / 2.0 - 1.0);
    let pi = p[i];
    // dt/ds folded in: p_i/(1-s+2s p_i) · (1-s)^{d/2-1} · ∏ (1-s+2s p_k)^{-1/2}
    let integrand = |s: T| {
        let one_minus = T::one() - s;
        let mut prod = T::one();
        for &pk in p {
            prod = prod * (one_minus + two * s * pk);
        }
        let tail = if d == 2 {
            T::one()
        } else {
            one_minus.powf(half_dim_minus_one)
        };
        pi / (one_minus + two * s * pi) * tail / prod.sqrt()
    };
    let r = integrate_adaptive(
        integrand,
        T::zero(),
        T::one(),
        quad_tol(),
        T::zero(),
        QUAD_MAX_INTERVALS,
    );
    (r.value, r.error)
}

fn normalized<T: Scalar>(p: &WeightMatrix<T>) -> Vec<T> {
    p.normalized_max().weights().to_vec()
}

/// `E[p_i b_i² / Σ_k p_k b_k²]` for `b` uniform on `S_d` (0-based `i`).
pub fn ratio_expectation<T: Scalar>(p: &WeightMatrix<T>, i: usize) -> Result<T> {
    if i >= p.dim() {
        return Err(Error::IndexOutOfRange {
            index: i,
            dim: p.dim(),
        });
    }
    Ok(ratio_integral(&normalized(p), i).0)
}

/// All `d` expectations by quadrature. They sum to one.
pub fn ratio_expectation_all<T: Scalar>(p: &WeightMatrix<T>) -> RatioExpectationReport<T> {
    let q = normalized(p);
    let mut values = Vec::with_capacity(q.len());
    let mut error_bound = T::zero();
    for i in 0..q.len() {
        let (v, e) = ratio_integral(&q, i);
        values.push(v);
        error_bound = error_bound.max(e);
    }
    RatioExpectationReport {
        values,
        method: ExpectationMethod::Quadrature { error_bound },
    }
}

/// Monte Carlo estimate of the same expectations from `n_samples` directions
/// drawn uniformly on the sphere.
pub fn ratio_expectation_mc<T: Scalar, R: Rng + ?Sized>(
    p: &WeightMatrix<T>,
    n_samples: usize,
    rng: &mut R,
) -> Result<RatioExpectationReport<T>> {
    if n_samples < 2 {
        return Err(Error::InvalidParameter {
            reason: "Monte Carlo needs at least two samples".into(),
        });
    }
    let d = p.dim();
    let w = p.weights();
    let mut b = vec![T::zero(); d];
    let mut mean = vec![T::zero(); d];
    let mut m2 = vec![T::zero(); d];
    for n in 1..=n_samples {
        sample_uniform_into(&mut b, rng);
        let denom: T = b.iter().zip(w).map(|(&bi, &wi)| wi * bi * bi).sum();
        let nf = T::of_usize(n);
        for i in 0..d {
            let x = w[i] * b[i] * b[i] / denom;
            let delta = x - mean[i];
            mean[i] = mean[i] + delta / nf;
            m2[i] = m2[i] + delta * (x - mean[i]);
        }
    }
    let nf = T::of_usize(n_samples);
    let std_errors = m2
        .iter()
        .map(|&s| (s / (nf - T::one())).sqrt() / nf.sqrt())
        .collect();
    Ok(RatioExpectationReport {
        values: mean,
        method: ExpectationMethod::MonteCarlo {
            n_samples,
            std_errors,
        },
    })
}

/// Diagonal of `E[M]` for `M = W B Bᵀ / (Bᵀ W B)`. The off-diagonal entries
/// are zero and not stored.
pub fn expected_m_matrix<T: Scalar>(w: &WeightMatrix<T>) -> Vec<T> {
    ratio_expectation_all(w).values
}

/// Monte Carlo estimate `(mean, std_error)` of a single entry `E[M_ij]`.
pub fn m_entry_mc<T: Scalar, R: Rng + ?Sized>(
    w: &WeightMatrix<T>,
    i: usize,
    j: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<(T, T)> {
    let d = w.dim();
    for idx in [i, j] {
        if idx >= d {
            return Err(Error::IndexOutOfRange { index: idx, dim: d });
        }
    }
    if n_samples < 2 {
        return Err(Error::InvalidParameter {
            reason: "Monte Carlo needs at least two samples".into(),
        });
    }
    let ws = w.weights();
    let mut b = vec![T::zero(); d];
    let mut mean = T::zero();
    let mut m2 = T::zero();
    for n in 1..=n_samples {
        sample_uniform_into(&mut b, rng);
        let denom: T = b.iter().zip(ws).map(|(&bi, &wi)| wi * bi * bi).sum();
        let x = ws[i] * b[i] * b[j] / denom;
        let delta = x - mean;
        mean = mean + delta / T::of_usize(n);
        m2 = m2 + delta * (x - mean);
    }
    let nf = T::of_usize(n_samples);
    Ok((mean, (m2 / (nf - T::one())).sqrt() / nf.sqrt()))
}
