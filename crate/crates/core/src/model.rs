//! Domain types shared by every module: the gain spectrum, diagonal weight
//! matrices, states, actuation directions and control policies.
//!
//! The system matrix `A` is symmetric, so it is diagonal in some orthonormal
//! basis; since the actuation direction is rotation invariant nothing is lost
//! by working in that basis. All types here are immutable values.

use nalgebra::{DMatrix, RealField};
use num_traits::Float;

use crate::controller::MixedStrategyParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default relative tolerance for unit-norm checks on actuation directions.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-12;

/// Default relative tolerance for the symmetry check in [`reduce_symmetric_gain`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigenvalues with `|λ| < SINGULAR_RATIO * max|λ|` are treated as zero.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Eigenvalues `λ_1..λ_d` of the diagonal gain matrix.
///
/// Entries keep the order they were given in. Every formula downstream uses
/// `λ_i²` only, so flipping the sign of any entry never changes a result.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSpectrum<T = f64> {
    lambdas: Vec<T>,
}

impl<T: Scalar> GainSpectrum<T> {
    pub fn new(lambdas: Vec<T>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::ZeroDimension);
        }
        for (index, &l) in lambdas.iter().enumerate() {
            if l == T::zero() || !l.is_finite() {
                return Err(Error::ZeroEigenvalue { index });
            }
        }
        Ok(Self { lambdas })
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    pub fn get(&self, i: usize) -> T {
        self.lambdas[i]
    }

    /// `λ_i²` for every entry.
    pub fn squares(&self) -> impl Iterator<Item = T> + '_ {
        self.lambdas.iter().map(|&l| l * l)
    }

    /// `Σ λ_i⁻²`.
    pub fn inverse_square_sum(&self) -> T {
        self.lambdas.iter().map(|&l| (l * l).recip()).sum()
    }

    /// Copy sorted by descending magnitude (stable for ties).
    pub fn sorted_by_magnitude(&self) -> Self {
        let mut lambdas = self.lambdas.clone();
        lambdas.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).expect("finite"));
        Self { lambdas }
    }

    /// Entrywise sign flip.
    pub fn negated(&self) -> Self {
        Self {
            lambdas: self.lambdas.iter().map(|&l| -l).collect(),
        }
    }

    /// Indices of the entries with `|λ| > 1`, in spectrum order.
    pub fn unstable_indices(&self) -> Vec<usize> {
        self.lambdas
            .iter()
            .enumerate()
            .filter(|(_, l)| l.abs() > T::one())
            .map(|(i, _)| i)
            .collect()
    }

    /// Sub-spectrum made of the given indices.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut lambdas = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.dim() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    dim: self.dim(),
                });
            }
            lambdas.push(self.lambdas[i]);
        }
        Self::new(lambdas)
    }
}

/// Diagonal, strictly positive weights `w_1..w_d` defining the norm `xᵀ W x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T = f64> {
    weights: Vec<T>,
}

impl<T: Scalar> WeightMatrix<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ZeroDimension);
        }
        for (index, &w) in weights.iter().enumerate() {
            if !(w > T::zero()) || !w.is_finite() {
                return Err(Error::NonPositiveWeight {
                    index,
                    value: w.as_f64(),
                });
            }
        }
        Ok(Self { weights })
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(vec![T::one(); d])
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn get(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn min(&self) -> T {
        self.weights.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.weights.iter().copied().fold(T::zero(), T::max)
    }

    /// Multiply every weight by `c > 0`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        Self::new(self.weights.iter().map(|&w| w * c).collect())
    }

    /// Rescaled so the largest weight is 1.
    pub fn normalized_max(&self) -> Self {
        let m = self.max();
        Self {
            weights: self.weights.iter().map(|&w| w / m).collect(),
        }
    }

    /// Rescaled so the first weight is 1.
    pub fn normalized_first(&self) -> Self {
        let f = self.weights[0];
        Self {
            weights: self.weights.iter().map(|&w| w / f).collect(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut weights = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.dim() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    dim: self.dim(),
                });
            }
            weights.push(self.weights[i]);
        }
        Self::new(weights)
    }
}

/// System state `X[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T = f64> {
    x: Vec<T>,
}

impl<T: Scalar> StateVector<T> {
    pub fn new(x: Vec<T>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { index });
        }
        Ok(Self { x })
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(vec![T::zero(); d])
    }

    /// Wraps a vector without the finiteness check; used on the hot path of
    /// the simulator, which tracks overflow itself.
    pub(crate) fn from_vec_unchecked(x: Vec<T>) -> Self {
        Self { x }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.x
    }

    pub fn into_vec(self) -> Vec<T> {
        self.x
    }

    pub fn norm_sq(&self) -> T {
        self.x.iter().map(|&v| v * v).sum()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.dim() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    dim: self.dim(),
                });
            }
            x.push(self.x[i]);
        }
        Self::new(x)
    }
}

/// A unit vector on the hypersphere `S_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationDirection<T = f64> {
    b: Vec<T>,
}

impl<T: Scalar> ActuationDirection<T> {
    /// Checks `|‖b‖ − 1| ≤ 1e-12` (or a few ulps at lower precision).
    pub fn new(b: Vec<T>) -> Result<Self> {
        let tol = T::of(UNIT_NORM_TOLERANCE).max(T::epsilon() * T::of(16.0));
        Self::with_tolerance(b, tol)
    }

    pub fn with_tolerance(b: Vec<T>, tol: T) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::ZeroDimension);
        }
        let norm = b.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !((norm - T::one()).abs() <= tol) {
            return Err(Error::NotUnit { norm: norm.as_f64() });
        }
        Ok(Self { b })
    }

    /// Normalizes `v`; fails when `v` is (numerically) zero.
    pub fn normalize(v: Vec<T>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::ZeroDimension);
        }
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if !(norm > T::min_positive_value()) || !norm.is_finite() {
            return Err(Error::DegenerateProjection);
        }
        Ok(Self {
            b: v.into_iter().map(|x| x / norm).collect(),
        })
    }

    pub(crate) fn from_vec_unchecked(b: Vec<T>) -> Self {
        Self { b }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.b
    }

    pub fn into_vec(self) -> Vec<T> {
        self.b
    }
}

/// How the controller picks `u[n]` from the observed state and direction.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlPolicy<T = f64> {
    /// `u[n] = 0` always.
    Zero,
    /// Minimizes `X[n+1]ᵀ W X[n+1]` for a fixed diagonal `W`.
    Greedy(WeightMatrix<T>),
    /// Greedy control of the unstable subsystem, lifted to the full system
    /// and dropped whenever the direction is nearly orthogonal to it.
    Mixed(MixedStrategyParams<T>),
}

/// `Σ p_i x_i²`.
pub fn weighted_norm_sq<T: Scalar>(x: &StateVector<T>, p: &WeightMatrix<T>) -> Result<T> {
    if x.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            actual: x.dim(),
        });
    }
    Ok(x.as_slice()
        .iter()
        .zip(p.weights())
        .map(|(&xi, &pi)| pi * xi * xi)
        .sum())
}

/// Eigen-decomposition `a = Q diag(λ) Qᵀ` of a symmetric gain matrix.
#[derive(Debug, Clone)]
pub struct SymmetricReduction<T: Scalar + RealField> {
    /// Eigenvalues sorted by descending magnitude.
    pub spectrum: GainSpectrum<T>,
    /// Orthonormal eigenvectors, column `j` paired with `spectrum.get(j)`.
    pub basis: DMatrix<T>,
}

impl<T: Scalar + RealField> SymmetricReduction<T> {
    /// `Q diag(λ) Qᵀ`.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            self.spectrum.lambdas(),
        ));
        &self.basis * diag * self.basis.transpose()
    }
}

/// Diagonalizes a symmetric, non-singular gain matrix.
pub fn reduce_symmetric_gain<T: Scalar + RealField>(a: &DMatrix<T>) -> Result<GainSpectrum<T>> {
    Ok(symmetric_eigen(a, <T as Scalar>::of(SYMMETRY_TOLERANCE))?.spectrum)
}

/// Like [`reduce_symmetric_gain`] but also returns the eigenbasis.
pub fn symmetric_eigen<T: Scalar + RealField>(
    a: &DMatrix<T>,
    symmetry_tol: T,
) -> Result<SymmetricReduction<T>> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(Error::ZeroDimension);
    }
    let scale = a
        .iter()
        .map(|v| Float::abs(*v))
        .fold(T::zero(), Float::max);
    for i in 0..rows {
        for j in (i + 1)..cols {
            let dev = Float::abs(a[(i, j)] - a[(j, i)]);
            if dev > symmetry_tol * scale {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    deviation: dev.as_f64(),
                });
            }
        }
    }

    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&x, &y| {
        Float::abs(eig.eigenvalues[y])
            .partial_cmp(&Float::abs(eig.eigenvalues[x]))
            .expect("finite eigenvalues")
    });

    let largest = Float::abs(eig.eigenvalues[order[0]]);
    let smallest = Float::abs(eig.eigenvalues[order[rows - 1]]);
    if !(largest > T::zero()) || smallest < <T as Scalar>::of(SINGULAR_RATIO) * largest {
        let ratio = if largest > T::zero() {
            (smallest / largest).as_f64()
        } else {
            0.0
        };
        return Err(Error::Singular { ratio });
    }

    let lambdas = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let basis = DMatrix::from_fn(rows, rows, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SymmetricReduction {
        spectrum: GainSpectrum::new(lambdas)?,
        basis,
    })
}
