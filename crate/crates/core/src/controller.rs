//! Control laws: the greedy weighted-norm minimizer, the stationary weights
//! that make it optimal, and the mixed strategy for spectra with both stable
//! and unstable modes.
//!
//! The mixed strategy runs the greedy law on the unstable coordinates only.
//! With `T` selecting those coordinates, it sees the direction `T b / ‖T b‖`
//! and scales its control by `1 / ‖T b‖` so that `T X` evolves exactly like
//! the embedded system. When `‖T b‖ ≤ 1/h` the control would be large and
//! mostly wasted on the stable modes, so it is dropped instead.

use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::model::{ActuationDirection, GainSpectrum, StateVector, WeightMatrix};
use crate::scalar::Scalar;
use crate::stability::{classify, StabilityCase, DEFAULT_EPSILON};
use crate::weights::{stationary_weights, DEFAULT_FIXED_POINT_TOL};

/// Lower clamp on the survival probability chosen by [`build_mixed_strategy`].
pub const MIN_SURVIVAL: f64 = 0.01;

/// Greedy control on raw slices: `−Σ w_i b_i λ_i x_i / Σ w_i b_i²`.
#[inline]
pub(crate) fn greedy_control_raw<T: Scalar>(w: &[T], lambdas: &[T], x: &[T], b: &[T]) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for i in 0..w.len() {
        let wb = w[i] * b[i];
        num = num + wb * lambdas[i] * x[i];
        den = den + wb * b[i];
    }
    -num / den
}

/// The `u` minimizing `(A x + b u)ᵀ W (A x + b u)`.
pub fn greedy_control<T: Scalar>(
    w_next: &WeightMatrix<T>,
    spec: &GainSpectrum<T>,
    x: &StateVector<T>,
    b: &ActuationDirection<T>,
) -> Result<T> {
    let d = spec.dim();
    for actual in [w_next.dim(), x.dim(), b.dim()] {
        if actual != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual,
            });
        }
    }
    Ok(greedy_control_raw(
        w_next.weights(),
        spec.lambdas(),
        x.as_slice(),
        b.as_slice(),
    ))
}

/// Weights under which the greedy law is optimal and the weight recursion is
/// exactly geometric, normalized to `p_1 = 1`.
///
/// In two dimensions these are proportional to `(λ1⁴, λ2⁴)`.
pub fn stationary_controller<T: Scalar>(spec: &GainSpectrum<T>) -> Result<WeightMatrix<T>> {
    Ok(stationary_weights(spec, T::one(), T::of(DEFAULT_FIXED_POINT_TOL))?.weights)
}

/// Smallest `x` in `[0, 1]` with `I_x(a, b) ≥ p`, by bisection.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `h > 1` with `P(‖T B‖ ≤ 1/h) = 1 − q` for `B` uniform on `S_d`, where `T`
/// keeps `m` coordinates.
///
/// `‖T B‖²` follows `Beta(m/2, (d − m)/2)`, so `1/h²` is its `(1 − q)` quantile.
pub fn drop_threshold<T: Scalar>(d: usize, m: usize, q: T) -> Result<T> {
    if m == 0 || m >= d {
        return Err(Error::InvalidRange {
            reason: format!("need 1 <= m < d, got m = {m}, d = {d}"),
        });
    }
    if !(q > T::zero() && q < T::one()) {
        return Err(Error::InvalidRange {
            reason: format!("survival probability q = {q} outside (0, 1)"),
        });
    }
    let x = beta_quantile(m as f64 / 2.0, (d - m) as f64 / 2.0, 1.0 - q.as_f64());
    Ok(T::of(1.0 / x.sqrt()))
}

/// Parameters of the mixed (drop-and-lift) strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategyParams<T = f64> {
    d: usize,
    unstable: Vec<usize>,
    sub_spectrum: GainSpectrum<T>,
    q: T,
    h: T,
    p_sub: WeightMatrix<T>,
    r_prime: T,
}

impl<T: Scalar> MixedStrategyParams<T> {
    /// Builds and validates the parameters for `spec` with survival
    /// probability `q`. `h` is calibrated by [`drop_threshold`] and `p_sub`
    /// solved for the dropped-control recursion of the unstable part.
    pub fn for_survival(spec: &GainSpectrum<T>, q: T, tol: T) -> Result<Self> {
        let unstable = spec.unstable_indices();
        let d = spec.dim();
        let m = unstable.len();
        if m == 0 || m == d {
            return Err(Error::NotCase2);
        }
        let sub_spectrum = spec.select(&unstable)?;
        let h = drop_threshold(d, m, q)?;
        let r_prime = (T::of_usize(m) - q) / sub_spectrum.inverse_square_sum();
        if !(r_prime < T::one()) {
            return Err(Error::NotStabilizable {
                r: r_prime.as_f64(),
            });
        }
        let p_sub = if m == 1 {
            WeightMatrix::new(vec![T::one()])?
        } else {
            stationary_weights(&sub_spectrum, q, tol)?.weights
        };
        Self::new(d, unstable, sub_spectrum, q, h, p_sub)
    }

    /// Direct construction; checks `0 < q < 1`, `h > 1`, `1 ≤ m < d`,
    /// matching dimensions and `r' < 1`.
    pub fn new(
        d: usize,
        unstable: Vec<usize>,
        sub_spectrum: GainSpectrum<T>,
        q: T,
        h: T,
        p_sub: WeightMatrix<T>,
    ) -> Result<Self> {
        let params = Self::manual(d, unstable, sub_spectrum, q, h, p_sub)?;
        if !(params.r_prime < T::one()) {
            return Err(Error::NotStabilizable {
                r: params.r_prime.as_f64(),
            });
        }
        Ok(params)
    }

    /// Like [`MixedStrategyParams::new`] but without the `r' < 1` check, for
    /// hand-picked parameters. Neither constructor checks that `h` is
    /// calibrated to `q`.
    pub fn manual(
        d: usize,
        unstable: Vec<usize>,
        sub_spectrum: GainSpectrum<T>,
        q: T,
        h: T,
        p_sub: WeightMatrix<T>,
    ) -> Result<Self> {
        let m = unstable.len();
        if m == 0 || m >= d {
            return Err(Error::InvalidRange {
                reason: format!("need 1 <= m < d, got m = {m}, d = {d}"),
            });
        }
        if let Some(&i) = unstable.iter().find(|&&i| i >= d) {
            return Err(Error::IndexOutOfRange { index: i, dim: d });
        }
        if !(q > T::zero() && q < T::one()) {
            return Err(Error::InvalidParameter {
                reason: format!("survival probability q = {q} outside (0, 1)"),
            });
        }
        if !(h > T::one()) {
            return Err(Error::InvalidParameter {
                reason: format!("drop threshold h = {h} must exceed 1"),
            });
        }
        for actual in [sub_spectrum.dim(), p_sub.dim()] {
            if actual != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual,
                });
            }
        }
        let r_prime = (T::of_usize(m) - q) / sub_spectrum.inverse_square_sum();
        Ok(Self {
            d,
            unstable,
            sub_spectrum,
            q,
            h,
            p_sub,
            r_prime,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Dimension of the unstable subspace.
    pub fn m(&self) -> usize {
        self.unstable.len()
    }

    pub fn unstable_indices(&self) -> &[usize] {
        &self.unstable
    }

    pub fn sub_spectrum(&self) -> &GainSpectrum<T> {
        &self.sub_spectrum
    }

    /// Survival probability of the control.
    pub fn q(&self) -> T {
        self.q
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn p_sub(&self) -> &WeightMatrix<T> {
        &self.p_sub
    }

    /// `(m − q) / Σ_{unstable} λ⁻²`.
    pub fn r_prime(&self) -> T {
        self.r_prime
    }
}

/// One decision of the mixed strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedAction<T = f64> {
    /// Control applied to the full system.
    pub u: T,
    /// Control seen by the embedded system, `u · ‖T b‖`.
    pub u_sub: T,
    pub dropped: bool,
    /// `‖T b‖`.
    pub projected_norm: T,
}

pub(crate) fn mixed_action_raw<T: Scalar>(
    params: &MixedStrategyParams<T>,
    w_sub: &[T],
    x: &[T],
    b: &[T],
    scratch_x: &mut [T],
    scratch_b: &mut [T],
) -> MixedAction<T> {
    let mut norm_sq = T::zero();
    for (k, &i) in params.unstable.iter().enumerate() {
        scratch_x[k] = x[i];
        scratch_b[k] = b[i];
        norm_sq = norm_sq + b[i] * b[i];
    }
    let norm = norm_sq.sqrt();
    // 1/‖Tb‖ ≥ h  ⇔  ‖Tb‖·h ≤ 1, which also covers ‖Tb‖ = 0
    if norm * params.h <= T::one() {
        return MixedAction {
            u: T::zero(),
            u_sub: T::zero(),
            dropped: true,
            projected_norm: norm,
        };
    }
    for v in scratch_b.iter_mut() {
        *v = *v / norm;
    }
    let u_sub = greedy_control_raw(w_sub, params.sub_spectrum.lambdas(), scratch_x, scratch_b);
    MixedAction {
        u: u_sub / norm,
        u_sub,
        dropped: false,
        projected_norm: norm,
    }
}

/// Full decision of the mixed strategy for state `x` and direction `b`.
pub fn mixed_control_action<T: Scalar>(
    params: &MixedStrategyParams<T>,
    w_next_sub: &WeightMatrix<T>,
    spec: &GainSpectrum<T>,
    x: &StateVector<T>,
    b: &ActuationDirection<T>,
) -> Result<MixedAction<T>> {
    let d = params.d;
    for actual in [spec.dim(), x.dim(), b.dim()] {
        if actual != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual,
            });
        }
    }
    if w_next_sub.dim() != params.m() {
        return Err(Error::DimensionMismatch {
            expected: params.m(),
            actual: w_next_sub.dim(),
        });
    }
    let m = params.m();
    let mut sx = vec![T::zero(); m];
    let mut sb = vec![T::zero(); m];
    Ok(mixed_action_raw(
        params,
        w_next_sub.weights(),
        x.as_slice(),
        b.as_slice(),
        &mut sx,
        &mut sb,
    ))
}

/// Control applied to the full system by the mixed strategy (0 when dropped).
pub fn mixed_control<T: Scalar>(
    params: &MixedStrategyParams<T>,
    w_next_sub: &WeightMatrix<T>,
    spec: &GainSpectrum<T>,
    x: &StateVector<T>,
    b: &ActuationDirection<T>,
) -> Result<T> {
    Ok(mixed_control_action(params, w_next_sub, spec, x, b)?.u)
}

/// Mixed strategy for a stabilizable spectrum with both stable and unstable
/// modes.
///
/// Picks `q` so the slackened rate `r' = (m − q)/Σ_{unstable} λ⁻²` sits at
/// `(1 + r)/2`, halfway between `r` and 1. Any `r < r' < 1` already forces
/// `q ∈ (0, 1)`; only the lower clamp at [`MIN_SURVIVAL`] is applied.
pub fn build_mixed_strategy<T: Scalar>(
    spec: &GainSpectrum<T>,
    tol: T,
) -> Result<MixedStrategyParams<T>> {
    let verdict = classify(spec, T::of(DEFAULT_EPSILON));
    if verdict.case != StabilityCase::Case2 {
        return Err(Error::NotCase2);
    }
    if !(verdict.r < T::one()) {
        return Err(Error::NotStabilizable {
            r: verdict.r.as_f64(),
        });
    }
    let sub = verdict.subsystem.as_ref().expect("case 2 has an unstable part");
    let m = T::of_usize(verdict.m);
    let target = (T::one() + verdict.r) / T::of(2.0);
    let q = (m - target * sub.inverse_square_sum()).max(T::of(MIN_SURVIVAL));
    MixedStrategyParams::for_survival(spec, q, tol)
}
