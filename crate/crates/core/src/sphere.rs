//! Uniform sampling on the unit hypersphere `S_d` and the two constructions
//! that move between dimensions: lifting a direction with a polar angle, and
//! projecting onto a leading coordinate block.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::ActuationDirection;
use crate::quadrature::GaussLegendre;
use crate::scalar::Scalar;

/// Grid size of the tabulated polar-angle CDF.
pub const THETA_TABLE_POINTS: usize = 4096;

/// Nodes of the Gauss–Legendre rule used for each factor of [`sphere_area`].
pub const AREA_QUADRATURE_NODES: usize = 256;

/// Deterministic random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with `stream_id` selecting the ChaCha stream, so the
/// sequence is the same on every platform and distinct streams never overlap.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// Fills `out` with a uniform direction: i.i.d. standard normals, normalized.
/// The all-zero draw is rejected and redrawn.
pub fn sample_uniform_into<T: Scalar, R: Rng + ?Sized>(out: &mut [T], rng: &mut R) {
    loop {
        let mut norm_sq = T::zero();
        for v in out.iter_mut() {
            *v = T::standard_normal(rng);
            norm_sq = norm_sq + *v * *v;
        }
        if norm_sq > T::min_positive_value() && norm_sq.is_finite() {
            let norm = norm_sq.sqrt();
            for v in out.iter_mut() {
                *v = *v / norm;
            }
            return;
        }
    }
}

/// A direction drawn uniformly from `S_d`.
pub fn sample_uniform<T: Scalar, R: Rng + ?Sized>(
    d: usize,
    rng: &mut R,
) -> Result<ActuationDirection<T>> {
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut b = vec![T::zero(); d];
    sample_uniform_into(&mut b, rng);
    Ok(ActuationDirection::from_vec_unchecked(b))
}

/// Inverse-CDF sampler for the polar angle density `∝ (sin θ)^{d-1}` on `[0, π)`.
///
/// The CDF is tabulated on [`THETA_TABLE_POINTS`] equally spaced angles and
/// inverted by linear interpolation, which keeps the map monotone.
#[derive(Debug, Clone)]
pub struct ThetaSampler<T = f64> {
    dim: usize,
    grid: Vec<T>,
    cdf: Vec<T>,
}

impl<T: Scalar> ThetaSampler<T> {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        let n = THETA_TABLE_POINTS;
        let pi = std::f64::consts::PI;
        let h = pi / (n - 1) as f64;
        let gl = GaussLegendre::<f64>::new(8);
        let power = (d - 1) as i32;
        let mut grid = Vec::with_capacity(n);
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        grid.push(0.0);
        cdf.push(0.0);
        for k in 1..n {
            let a = (k - 1) as f64 * h;
            let b = k as f64 * h;
            acc += gl.integrate(a, b, |t: f64| t.sin().powi(power));
            grid.push(b);
            cdf.push(acc);
        }
        let total = acc;
        Ok(Self {
            dim: d,
            grid: grid.into_iter().map(T::of).collect(),
            cdf: cdf.into_iter().map(|c| T::of(c / total)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Maps `u ∈ [0, 1)` to an angle in `[0, π)`.
    pub fn quantile(&self, u: T) -> T {
        let n = self.cdf.len();
        // first index with cdf > u
        let hi = self.cdf.partition_point(|&c| c <= u).clamp(1, n - 1);
        let lo = hi - 1;
        let span = self.cdf[hi] - self.cdf[lo];
        let frac = if span > T::zero() {
            (u - self.cdf[lo]) / span
        } else {
            T::zero()
        };
        let theta = self.grid[lo] + frac * (self.grid[hi] - self.grid[lo]);
        let pi = T::PI();
        if theta >= pi {
            // largest representable value below π
            pi - pi * T::epsilon()
        } else {
            theta.max(T::zero())
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.quantile(T::unit_uniform(rng))
    }
}

/// One draw of the polar angle `Θ` with density `∝ (sin θ)^{d-1}`.
///
/// Builds the CDF table on every call; reuse a [`ThetaSampler`] for many draws.
pub fn sample_theta<T: Scalar, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<T> {
    Ok(ThetaSampler::<T>::new(d)?.sample(rng))
}

/// Lifts `b ∈ S_d` to `(b sin θ, cos θ) ∈ S_{d+1}`.
///
/// With `b` uniform and `θ` from [`ThetaSampler`] for the same `d`, the result
/// is uniform on `S_{d+1}`.
pub fn expand<T: Scalar>(b: &ActuationDirection<T>, theta: T) -> Result<ActuationDirection<T>> {
    if !(theta >= T::zero() && theta < T::PI()) {
        return Err(Error::ThetaOutOfRange {
            theta: theta.as_f64(),
        });
    }
    let (s, c) = theta.sin_cos();
    let mut out: Vec<T> = b.as_slice().iter().map(|&v| v * s).collect();
    out.push(c);
    Ok(ActuationDirection::from_vec_unchecked(out))
}

/// Keeps the first `m` coordinates of `b` and renormalizes.
///
/// With `b` uniform on `S_d` the result is uniform on `S_m`.
pub fn project<T: Scalar>(b: &ActuationDirection<T>, m: usize) -> Result<ActuationDirection<T>> {
    if m == 0 || m > b.dim() {
        return Err(Error::InvalidRange {
            reason: format!("projection size {m} must lie in 1..={}", b.dim()),
        });
    }
    let head = &b.as_slice()[..m];
    let norm = head.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm <= T::of(1e-300) {
        return Err(Error::DegenerateProjection);
    }
    Ok(ActuationDirection::from_vec_unchecked(
        head.iter().map(|&v| v / norm).collect(),
    ))
}

/// Surface area of `S_d ⊂ ℝ^d`, evaluated as
/// `2π · ∏_{k=1}^{d-2} ∫_0^π (sin φ)^{d-k-1} dφ` with a 256-node
/// Gauss–Legendre rule per factor.
pub fn sphere_area<T: Scalar>(d: usize) -> Result<T> {
    if d < 2 {
        return Err(Error::InvalidRange {
            reason: format!("sphere_area needs d >= 2, got {d}"),
        });
    }
    let gl = GaussLegendre::<T>::new(AREA_QUADRATURE_NODES);
    let mut area = T::of(2.0) * T::PI();
    for k in 1..=d.saturating_sub(2) {
        let power = (d - k - 1) as i32;
        area = area * gl.integrate(T::zero(), T::PI(), |phi: T| phi.sin().powi(power));
    }
    Ok(area)
}
