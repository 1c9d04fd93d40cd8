//! Stabilizability threshold and case analysis.
//!
//! With `m` eigenvalues of magnitude above one,
//! `r = (m − 1) / Σ_{|λ_i|>1} λ_i⁻²`. The system is second-moment
//! stabilizable when `r < 1` and cannot be when `r > 1`. In two dimensions
//! `r ≤ 1` is also sufficient.

use crate::error::Result;
use crate::model::GainSpectrum;
use crate::scalar::Scalar;
use crate::weights::target_fractions;

/// Default half-width of the band `||λ| − 1| ≤ ε` treated as marginal.
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StabilityCase {
    /// Every `|λ| > 1` and every target fraction `v_i* > 0`.
    Case1a,
    /// Every `|λ| > 1` but some `v_i* ≤ 0`; this forces `r > 1`.
    Case1b,
    /// At least one stable and at least one unstable eigenvalue.
    Case2,
    /// Every `|λ| < 1`; zero control already stabilizes.
    AllStable,
}

impl StabilityCase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Case1a => "case_1a",
            Self::Case1b => "case_1b",
            Self::Case2 => "case_2",
            Self::AllStable => "all_stable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Stabilizable,
    Unstabilizable,
    /// `r = 1` with `d > 2`: only necessity is known there.
    InconclusiveAtThreshold,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stabilizable => "stabilizable",
            Self::Unstabilizable => "unstabilizable",
            Self::InconclusiveAtThreshold => "inconclusive_at_threshold",
        }
    }
}

/// Outcome of [`classify`].
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict<T = f64> {
    pub r: T,
    /// Number of eigenvalues with `|λ| > 1` after perturbation.
    pub m: usize,
    pub case: StabilityCase,
    pub decision: Decision,
    /// The unstable part, in spectrum order; `None` when `m = 0`.
    pub subsystem: Option<GainSpectrum<T>>,
    /// Indices of the unstable part within the full spectrum.
    pub unstable_indices: Vec<usize>,
    /// Some `|λ_i|` was within ε of 1 and was nudged outward.
    pub boundary_sensitive: bool,
    pub epsilon: T,
}

/// `(m − 1) / Σ_{|λ_i|>1} λ_i⁻²`; zero when `m ≤ 1`.
pub fn threshold_r<T: Scalar>(spec: &GainSpectrum<T>) -> T {
    let inv: Vec<T> = spec
        .lambdas()
        .iter()
        .filter(|l| l.abs() > T::one())
        .map(|&l| (l * l).recip())
        .collect();
    if inv.len() <= 1 {
        return T::zero();
    }
    T::of_usize(inv.len() - 1) / inv.into_iter().sum::<T>()
}

/// The two-dimensional threshold `(λ1⁻² + λ2⁻²)⁻¹` over both eigenvalues.
///
/// Unlike [`threshold_r`] it also counts a stable eigenvalue. That never
/// changes the verdict: with one stable eigenvalue `threshold_r` is 0 and
/// this value is below `λ_stable² < 1`.
pub fn threshold_2d<T: Scalar>(l1: T, l2: T) -> T {
    ((l1 * l1).recip() + (l2 * l2).recip()).recip()
}

/// `λ2` on the two-dimensional boundary `r = 1`, for `|λ1| > 1`.
pub fn boundary_2d<T: Scalar>(l1: T) -> T {
    let s = l1 * l1;
    (s / (s - T::one())).sqrt()
}

/// `λ2` on the boundary of the paired 4D spectrum `(λ1, λ1, λ2, λ2)`,
/// for `1 < λ1 < √2`.
pub fn boundary_4d_paired<T: Scalar>(l1: T) -> T {
    let s = l1 * l1;
    (T::of(2.0) * s / (T::of(3.0) * s - T::of(2.0))).sqrt()
}

/// Leading unstable part (`|λ| > 1`), order preserved; `None` if empty.
pub fn subsystem_spectrum<T: Scalar>(spec: &GainSpectrum<T>) -> Option<GainSpectrum<T>> {
    let idx = spec.unstable_indices();
    if idx.is_empty() {
        None
    } else {
        Some(spec.select(&idx).expect("indices come from the spectrum"))
    }
}

/// Case analysis and decision.
///
/// Entries with `||λ| − 1| ≤ ε` are pushed outward to `|λ| + 2ε` before
/// anything else; raising a magnitude can only make control harder, so a
/// stabilizable verdict survives the perturbation. Such verdicts are flagged
/// `boundary_sensitive`.
pub fn classify<T: Scalar>(spec: &GainSpectrum<T>, epsilon: T) -> StabilityVerdict<T> {
    let one = T::one();
    let mut boundary_sensitive = false;
    let perturbed: Vec<T> = spec
        .lambdas()
        .iter()
        .map(|&l| {
            if (l.abs() - one).abs() <= epsilon {
                boundary_sensitive = true;
                l.signum() * (l.abs() + T::of(2.0) * epsilon)
            } else {
                l
            }
        })
        .collect();
    let spec_p = GainSpectrum::new(perturbed).expect("perturbation keeps entries nonzero");
    let unstable_indices = spec_p.unstable_indices();
    let m = unstable_indices.len();
    let d = spec_p.dim();

    if m == 0 {
        return StabilityVerdict {
            r: T::zero(),
            m,
            case: StabilityCase::AllStable,
            decision: Decision::Stabilizable,
            subsystem: None,
            unstable_indices,
            boundary_sensitive,
            epsilon,
        };
    }

    let subsystem = spec_p
        .select(&unstable_indices)
        .expect("indices come from the spectrum");
    let r = threshold_r(&subsystem);

    let case = if m < d {
        StabilityCase::Case2
    } else {
        let v = target_fractions(&subsystem, one).expect("q = 1 is valid");
        if v.all_positive() {
            StabilityCase::Case1a
        } else {
            assert!(
                r > one,
                "some target fraction is non-positive yet r = {r} <= 1"
            );
            StabilityCase::Case1b
        }
    };

    let decision = if (r - one).abs() <= epsilon {
        if d == 2 {
            Decision::Stabilizable
        } else {
            Decision::InconclusiveAtThreshold
        }
    } else if r < one {
        Decision::Stabilizable
    } else {
        Decision::Unstabilizable
    };

    StabilityVerdict {
        r,
        m,
        case,
        decision,
        subsystem: Some(subsystem),
        unstable_indices,
        boundary_sensitive,
        epsilon,
    }
}

/// [`classify`] with the default ε.
pub fn classify_default<T: Scalar>(spec: &GainSpectrum<T>) -> StabilityVerdict<T> {
    classify(spec, T::of(DEFAULT_EPSILON))
}

/// Convenience wrapper building the spectrum first.
pub fn classify_lambdas<T: Scalar>(lambdas: &[T], epsilon: T) -> Result<StabilityVerdict<T>> {
    Ok(classify(&GainSpectrum::new(lambdas.to_vec())?, epsilon))
}
