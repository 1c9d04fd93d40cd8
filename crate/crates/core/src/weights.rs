//! The backward weight recursion
//!
//! ```text
//! W[n] = Aᵀ (W[n+1] − q E[M[n]] W[n+1]) A,   M[n] = W[n+1] B Bᵀ / (Bᵀ W[n+1] B)
//! ```
//!
//! its stationary weights, and the decay-rate readout.
//!
//! `q ∈ (0, 1]` is the probability that a control is actually applied
//! (survival probability); `q = 1` is the plain recursion. With diagonal
//! `W[n+1]` the step is coordinate-wise: `w_i ← λ_i² w_i (1 − q m_i)`.

use crate::error::{Error, Result};
use crate::expectation::ratio_expectation_all;
use crate::model::{GainSpectrum, WeightMatrix};
use crate::scalar::Scalar;

/// Default max-norm tolerance on `v − m(p)` for the fixed-point solver.
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-9;

/// Stationary targets `v_i = 1 − (d − q) λ_i⁻² / Σ_j λ_j⁻²`.
///
/// The entries sum to `q`. The weights that make the recursion geometric
/// satisfy `E[M_ii] = v_i / q`, see [`TargetFractions::solver_targets`].
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFractions<T = f64> {
    v: Vec<T>,
    q: T,
}

impl<T: Scalar> TargetFractions<T> {
    pub fn values(&self) -> &[T] {
        &self.v
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn sum(&self) -> T {
        self.v.iter().copied().sum()
    }

    pub fn all_positive(&self) -> bool {
        self.v.iter().all(|&v| v > T::zero())
    }

    /// `(index, value)` of every non-positive entry.
    pub fn nonpositive(&self) -> Vec<(usize, T)> {
        self.v
            .iter()
            .enumerate()
            .filter(|(_, &v)| v <= T::zero())
            .map(|(i, &v)| (i, v))
            .collect()
    }

    /// `v_i / q`: the values `E[M_ii]` must take for the recursion to be
    /// geometric with rate `(d − q) / Σ λ⁻²`. Sums to one.
    pub fn solver_targets(&self) -> Vec<T> {
        self.v.iter().map(|&v| v / self.q).collect()
    }
}

fn check_q<T: Scalar>(q: T, allow_zero: bool) -> Result<()> {
    let low_ok = if allow_zero { q >= T::zero() } else { q > T::zero() };
    if !(low_ok && q <= T::one()) {
        return Err(Error::InvalidParameter {
            reason: format!("survival probability q = {q} outside (0, 1]"),
        });
    }
    Ok(())
}

pub fn target_fractions<T: Scalar>(spec: &GainSpectrum<T>, q: T) -> Result<TargetFractions<T>> {
    check_q(q, false)?;
    let d = T::of_usize(spec.dim());
    let total = spec.inverse_square_sum();
    let v = spec
        .lambdas()
        .iter()
        .map(|&l| T::one() - (d - q) * (l * l).recip() / total)
        .collect();
    Ok(TargetFractions { v, q })
}

/// Tuning for [`solve_weight_fixed_point_with`].
#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions<T = f64> {
    /// Max-norm tolerance on `v − m(p)`.
    pub tol: T,
    /// Exponent `η` of the multiplicative update `p_i ← p_i (v_i / m_i)^η`.
    pub damping: T,
    pub max_sweeps: usize,
    /// Sweeps without halving the best residual before switching to bisection.
    pub stall_window: usize,
    /// Skip the multiplicative phase entirely.
    pub force_bisection: bool,
}

impl<T: Scalar> FixedPointOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self {
            tol,
            damping: T::of(0.5),
            max_sweeps: 10_000,
            stall_window: 200,
            force_bisection: false,
        }
    }
}

impl<T: Scalar> Default for FixedPointOptions<T> {
    fn default() -> Self {
        Self::with_tol(T::of(DEFAULT_FIXED_POINT_TOL))
    }
}

/// Result of the fixed-point solve with diagnostics.
#[derive(Debug, Clone)]
pub struct FixedPointSolution<T = f64> {
    /// Normalized so `p_1 = 1`.
    pub weights: WeightMatrix<T>,
    pub residual: T,
    pub sweeps: usize,
    pub used_bisection: bool,
}

fn validate_targets<T: Scalar>(v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::ZeroDimension);
    }
    if let Some((i, &x)) = v.iter().enumerate().find(|(_, &x)| !(x > T::zero())) {
        return Err(Error::InvalidTargets {
            reason: format!("v[{i}] = {x} is not positive"),
        });
    }
    let sum: T = v.iter().copied().sum();
    let sum_tol = T::of(1e-9).max(T::epsilon() * T::of_usize(16 * v.len()));
    if (sum - T::one()).abs() > sum_tol {
        return Err(Error::InvalidTargets {
            reason: format!("targets sum to {sum}, expected 1"),
        });
    }
    Ok(())
}

fn residual<T: Scalar>(v: &[T], m: &[T]) -> T {
    v.iter()
        .zip(m)
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), T::max)
}

fn weights_from_log<T: Scalar>(log_p: &[T]) -> WeightMatrix<T> {
    let top = log_p.iter().copied().fold(T::neg_infinity(), T::max);
    WeightMatrix::new(log_p.iter().map(|&l| (l - top).exp()).collect())
        .expect("exponentials are positive")
}

fn normalized_first<T: Scalar>(log_p: &mut [T]) {
    let first = log_p[0];
    for l in log_p.iter_mut() {
        *l = *l - first;
    }
}

/// Weights `p` (with `p_1 = 1`) such that `E[p_i b_i² / Σ p_k b_k²] = v_i`.
pub fn solve_weight_fixed_point<T: Scalar>(v: &[T], tol: T) -> Result<WeightMatrix<T>> {
    Ok(solve_weight_fixed_point_with(v, FixedPointOptions::with_tol(tol))?.weights)
}

/// Damped multiplicative iteration, falling back to coordinate-wise bisection
/// if the residual stalls.
///
/// Both phases rely on `E[M_ii]` increasing in `p_i` and decreasing in every
/// other `p_j`.
pub fn solve_weight_fixed_point_with<T: Scalar>(
    v: &[T],
    opts: FixedPointOptions<T>,
) -> Result<FixedPointSolution<T>> {
    validate_targets(v)?;
    let d = v.len();
    // p_i = v_i² is exact in two dimensions, where m_1 = √p_1 / (√p_1 + √p_2)
    let mut log_p: Vec<T> = v.iter().map(|&x| T::of(2.0) * x.ln()).collect();
    normalized_first(&mut log_p);

    let mut sweeps = 0;
    let mut best = T::infinity();
    let mut best_at = 0;

    if !opts.force_bisection {
        while sweeps < opts.max_sweeps {
            let m = ratio_expectation_all(&weights_from_log(&log_p)).values;
            let res = residual(v, &m);
            if res <= opts.tol {
                return Ok(FixedPointSolution {
                    weights: weights_from_log(&log_p).normalized_first(),
                    residual: res,
                    sweeps,
                    used_bisection: false,
                });
            }
            if res < best * T::of(0.5) {
                best = res;
                best_at = sweeps;
            } else if sweeps - best_at >= opts.stall_window {
                break;
            }
            for i in 0..d {
                log_p[i] = log_p[i] + opts.damping * (v[i].ln() - m[i].ln());
            }
            normalized_first(&mut log_p);
            sweeps += 1;
        }
    }

    // Nonlinear Gauss–Seidel: hold p_1 = 1, solve m_i(p) = v_i for each other
    // coordinate in turn by bisection on log p_i.
    while sweeps < opts.max_sweeps {
        let m = ratio_expectation_all(&weights_from_log(&log_p)).values;
        let res = residual(v, &m);
        if res <= opts.tol {
            return Ok(FixedPointSolution {
                weights: weights_from_log(&log_p).normalized_first(),
                residual: res,
                sweeps,
                used_bisection: true,
            });
        }
        for i in 1..d {
            log_p[i] = bisect_coordinate(&log_p, i, v[i], opts.tol);
        }
        sweeps += 1;
    }

    let m = ratio_expectation_all(&weights_from_log(&log_p)).values;
    Err(Error::NoConvergence {
        iterations: sweeps,
        residual: residual(v, &m).as_f64(),
    })
}

fn bisect_coordinate<T: Scalar>(log_p: &[T], i: usize, target: T, tol: T) -> T {
    let m_at = |x: T| {
        let mut trial = log_p.to_vec();
        trial[i] = x;
        crate::expectation::ratio_expectation(&weights_from_log(&trial), i)
            .expect("index in range")
    };
    let step = T::of(4.0);
    let mut lo = log_p[i] - step;
    let mut hi = log_p[i] + step;
    let limit = T::of(700.0);
    while m_at(lo) > target && lo > -limit {
        lo = lo - step;
    }
    while m_at(hi) < target && hi < limit {
        hi = hi + step;
    }
    let x_tol = (tol * T::of(1e-3)).max(T::epsilon() * T::of(8.0));
    for _ in 0..200 {
        let mid = (lo + hi) / T::of(2.0);
        if hi - lo <= x_tol {
            break;
        }
        if m_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / T::of(2.0)
}

fn check_dims<T: Scalar>(w: &WeightMatrix<T>, spec: &GainSpectrum<T>) -> Result<()> {
    if w.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            actual: w.dim(),
        });
    }
    Ok(())
}

/// One backward step `w_i = λ_i² w_next_i (1 − q m_i)`, `m = E[M](w_next)`.
///
/// `q = 0` is accepted and gives the uncontrolled `w_i = λ_i² w_next_i`.
pub fn riccati_step<T: Scalar>(
    w_next: &WeightMatrix<T>,
    spec: &GainSpectrum<T>,
    q: T,
) -> Result<WeightMatrix<T>> {
    check_dims(w_next, spec)?;
    check_q(q, true)?;
    let m = ratio_expectation_all(w_next).values;
    WeightMatrix::new(
        w_next
            .weights()
            .iter()
            .zip(spec.squares())
            .zip(&m)
            .map(|((&w, l2), &mi)| l2 * w * (T::one() - q * mi))
            .collect(),
    )
}

/// `{W[n]}` from `W[N] = p` back to `W[0]`, stored in log space.
#[derive(Debug, Clone)]
pub struct RiccatiTrace<T = f64> {
    // entry k holds ln W[N - k]
    log_weights: Vec<Vec<T>>,
    // entry k holds w_{N-k-1,i} / w_{N-k,i}
    ratios: Vec<Vec<T>>,
}

impl<T: Scalar> RiccatiTrace<T> {
    /// Builds a trace from explicit weights ordered `W[N], W[N-1], …, W[0]`.
    pub fn from_weights(weights: &[WeightMatrix<T>]) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidParameter {
                reason: "a trace needs at least two steps".into(),
            });
        }
        let d = weights[0].dim();
        if let Some(w) = weights.iter().find(|w| w.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: w.dim(),
            });
        }
        let log_weights: Vec<Vec<T>> = weights
            .iter()
            .map(|w| w.weights().iter().map(|x| x.ln()).collect())
            .collect();
        let ratios = log_weights
            .windows(2)
            .map(|pair| {
                pair[1]
                    .iter()
                    .zip(&pair[0])
                    .map(|(&a, &b)| (a - b).exp())
                    .collect()
            })
            .collect();
        Ok(Self {
            log_weights,
            ratios,
        })
    }

    /// Number of stored weight matrices (`n_steps + 1`).
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.ratios.len()
    }

    /// `ln W[N - k]`.
    pub fn log_weights(&self, k: usize) -> &[T] {
        &self.log_weights[k]
    }

    /// `W[N - k]`; fails if the entries over- or underflow.
    pub fn weight_matrix(&self, k: usize) -> Result<WeightMatrix<T>> {
        WeightMatrix::new(self.log_weights[k].iter().map(|l| l.exp()).collect())
    }

    /// `W[N - k]` rescaled so its largest entry is 1.
    pub fn normalized(&self, k: usize) -> WeightMatrix<T> {
        weights_from_log(&self.log_weights[k])
    }

    /// Per-step, per-coordinate ratios `w_{n,i} / w_{n+1,i}`, starting at `n = N − 1`.
    pub fn ratios(&self) -> &[Vec<T>] {
        &self.ratios
    }
}

/// Iterates [`riccati_step`] backwards `n_steps` times from `W[N] = p`.
pub fn riccati_sequence<T: Scalar>(
    p: &WeightMatrix<T>,
    spec: &GainSpectrum<T>,
    n_steps: usize,
    q: T,
) -> Result<RiccatiTrace<T>> {
    check_dims(p, spec)?;
    check_q(q, true)?;
    if n_steps == 0 {
        return Err(Error::InvalidParameter {
            reason: "n_steps must be at least 1".into(),
        });
    }
    let log_l2: Vec<T> = spec.squares().map(|l2| l2.ln()).collect();
    let mut current: Vec<T> = p.weights().iter().map(|w| w.ln()).collect();
    let mut log_weights = Vec::with_capacity(n_steps + 1);
    let mut ratios = Vec::with_capacity(n_steps);
    log_weights.push(current.clone());
    for _ in 0..n_steps {
        // E[M] only sees ratios of weights, so the normalized copy suffices
        let m = ratio_expectation_all(&weights_from_log(&current)).values;
        let log_ratio: Vec<T> = log_l2
            .iter()
            .zip(&m)
            .map(|(&ll, &mi)| ll + (T::one() - q * mi).ln())
            .collect();
        for (c, lr) in current.iter_mut().zip(&log_ratio) {
            *c = *c + *lr;
        }
        ratios.push(log_ratio.iter().map(|l| l.exp()).collect());
        log_weights.push(current.clone());
    }
    Ok(RiccatiTrace {
        log_weights,
        ratios,
    })
}

/// Geometric mean of all per-step ratios and the largest deviation of any
/// single ratio from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRate<T = f64> {
    pub rate: T,
    pub max_deviation: T,
}

pub fn measured_decay_rate<T: Scalar>(trace: &RiccatiTrace<T>) -> DecayRate<T> {
    let all = trace.ratios().iter().flatten();
    let count = T::of_usize(trace.ratios().iter().map(Vec::len).sum());
    let rate = (all.clone().map(|r| r.ln()).sum::<T>() / count).exp();
    let max_deviation = all.map(|&r| (r - rate).abs()).fold(T::zero(), T::max);
    DecayRate {
        rate,
        max_deviation,
    }
}

/// Weights that make the (possibly dropped-control) recursion exactly
/// geometric, `p_1 = 1`. Requires every target fraction to be positive.
pub fn stationary_weights<T: Scalar>(
    spec: &GainSpectrum<T>,
    q: T,
    tol: T,
) -> Result<FixedPointSolution<T>> {
    let targets = target_fractions(spec, q)?;
    if let Some(&(index, value)) = targets.nonpositive().first() {
        return Err(Error::NotCase1a {
            index,
            value: value.as_f64(),
        });
    }
    solve_weight_fixed_point_with(&targets.solver_targets(), FixedPointOptions::with_tol(tol))
}

/// `(d − q) / Σ λ⁻²`, the rate of the stationary recursion.
pub fn stationary_rate<T: Scalar>(spec: &GainSpectrum<T>, q: T) -> T {
    (T::of_usize(spec.dim()) - q) / spec.inverse_square_sum()
}
