//! Second-moment stabilization of linear systems actuated along a random
//! direction:
//!
//! ```text
//! X[n+1] = A X[n] + B[n] u[n],   B[n] uniform on the unit sphere S_d
//! ```
//!
//! with `A` symmetric (handled through its eigenvalues). The crate provides the
//! stabilizability threshold and case analysis ([`stability`]), the weight
//! recursion behind the optimal greedy controller ([`weights`],
//! [`expectation`]), the controllers themselves ([`controller`]), sphere
//! sampling ([`sphere`]) and a Monte Carlo simulator ([`simulate`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! generic types default to `f64` and `*F32` aliases cover single precision.

pub mod controller;
pub mod error;
pub mod expectation;
pub mod model;
pub mod quadrature;
pub mod scalar;
pub mod simulate;
pub mod sphere;
pub mod stability;
pub mod verify;
pub mod weights;

pub use controller::{
    build_mixed_strategy, drop_threshold, greedy_control, mixed_control, mixed_control_action,
    stationary_controller, MixedAction, MixedStrategyParams,
};
pub use error::{Error, Result};
pub use expectation::{
    expected_m_matrix, m_entry_mc, ratio_expectation, ratio_expectation_all, ratio_expectation_mc,
    ExpectationMethod, RatioExpectationReport,
};
pub use model::{
    reduce_symmetric_gain, weighted_norm_sq, ActuationDirection, ControlPolicy, GainSpectrum,
    StateVector, WeightMatrix,
};
pub use scalar::Scalar;
pub use simulate::{
    run_coupled, run_ensemble, run_trajectory, step, CoupledReport, EmpiricalVerdict,
    EnsembleStats, GrowthFit, SimulationConfig, Trajectory,
};
pub use sphere::{expand, project, sample_theta, sample_uniform, sphere_area, SeededRng};
pub use stability::{
    classify, classify_default, threshold_r, Decision, StabilityCase, StabilityVerdict,
};
pub use weights::{
    riccati_sequence, riccati_step, solve_weight_fixed_point, stationary_weights,
    target_fractions, FixedPointSolution, RiccatiTrace, TargetFractions,
};

pub type GainSpectrumF32 = GainSpectrum<f32>;
pub type WeightMatrixF32 = WeightMatrix<f32>;
pub type StateVectorF32 = StateVector<f32>;
pub type ActuationDirectionF32 = ActuationDirection<f32>;
pub type ControlPolicyF32 = ControlPolicy<f32>;
pub type MixedStrategyParamsF32 = MixedStrategyParams<f32>;
pub type SimulationConfigF32 = SimulationConfig<f32>;
pub type StabilityVerdictF32 = StabilityVerdict<f32>;

pub type GainSpectrumF64 = GainSpectrum<f64>;
pub type WeightMatrixF64 = WeightMatrix<f64>;
pub type StateVectorF64 = StateVector<f64>;
pub type ActuationDirectionF64 = ActuationDirection<f64>;
pub type ControlPolicyF64 = ControlPolicy<f64>;
pub type MixedStrategyParamsF64 = MixedStrategyParams<f64>;
pub type SimulationConfigF64 = SimulationConfig<f64>;
pub type StabilityVerdictF64 = StabilityVerdict<f64>;
