//! Phase-diagram sweeps over two-parameter spectrum templates.

use rayon::prelude::*;

use randact::simulate::EmpiricalVerdict;
use randact::{
    build_mixed_strategy, classify_default, run_ensemble, stationary_controller, ControlPolicy,
    Decision, GainSpectrum, SimulationConfig, StabilityCase, StateVector, WeightMatrix,
};

use crate::config::{SweepFile, SweepSim, Template};

pub const DEFAULT_HORIZON: usize = 1000;
pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_SEED: u64 = 0;

/// Cells with `|r − 1|` below this are reported as indeterminate.
pub const NEAR_THRESHOLD: f64 = 0.01;

/// Horizon, trial count and seed for the empirical columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmpiricalSettings {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
}

impl From<&SweepSim> for EmpiricalSettings {
    fn from(s: &SweepSim) -> Self {
        Self {
            horizon: s.horizon.unwrap_or(DEFAULT_HORIZON),
            trials: s.trials.unwrap_or(DEFAULT_TRIALS),
            seed: s.seed.unwrap_or(DEFAULT_SEED),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Empirical {
    pub rate: f64,
    pub verdict: EmpiricalVerdict,
    /// `true` when the cell is too close to `r = 1` to read off a verdict.
    pub near_threshold: bool,
}

impl Empirical {
    pub fn label(&self) -> &'static str {
        if self.near_threshold {
            EmpiricalVerdict::Indeterminate.as_str()
        } else {
            self.verdict.as_str()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub lambda1: f64,
    pub lambda2: f64,
    pub r: f64,
    pub predicted: Decision,
    pub empirical: Option<Empirical>,
}

fn fourth_power_weights(spec: &GainSpectrum<f64>) -> WeightMatrix<f64> {
    WeightMatrix::new(spec.lambdas().iter().map(|l| l.powi(4)).collect())
        .expect("nonzero eigenvalues")
        .normalized_max()
}

/// Policy simulated for a cell, plus the weights whose moment is fitted.
///
/// Zero control when every mode is stable, the stationary greedy controller
/// when it exists, the mixed strategy for stabilizable mixed spectra and
/// greedy control with `λ⁴` weights otherwise.
pub fn cell_policy(spec: &GainSpectrum<f64>) -> (ControlPolicy<f64>, Option<WeightMatrix<f64>>) {
    let verdict = classify_default(spec);
    match verdict.case {
        StabilityCase::AllStable => return (ControlPolicy::Zero, None),
        StabilityCase::Case1a => {
            if let Ok(p) = stationary_controller(spec) {
                return (ControlPolicy::Greedy(p.clone()), Some(p));
            }
        }
        StabilityCase::Case2 if verdict.decision == Decision::Stabilizable => {
            if let Ok(params) = build_mixed_strategy(spec, 1e-10) {
                return (ControlPolicy::Mixed(params), None);
            }
        }
        _ => {}
    }
    let w = fourth_power_weights(spec);
    (ControlPolicy::Greedy(w.clone()), Some(w))
}

/// Classifies one grid point and, with `sim`, simulates it from `x0 = 1`.
pub fn evaluate_cell(
    template: Template,
    lambda1: f64,
    lambda2: f64,
    sim: Option<EmpiricalSettings>,
) -> randact::Result<CellResult> {
    let spec = GainSpectrum::new(template.spectrum(lambda1, lambda2))?;
    let verdict = classify_default(&spec);
    let empirical = match sim {
        None => None,
        Some(s) => {
            let (policy, weighted) = cell_policy(&spec);
            let x0 = StateVector::new(vec![1.0; spec.dim()])?;
            let mut cfg = SimulationConfig::new(spec, x0, s.horizon, s.trials, s.seed, policy)?;
            if let Some(w) = weighted {
                cfg = cfg.with_weighted(w)?;
            }
            let stats = run_ensemble(&cfg)?;
            Some(Empirical {
                rate: stats.growth_rate(),
                verdict: stats.verdict(),
                near_threshold: (verdict.r - 1.0).abs() < NEAR_THRESHOLD,
            })
        }
    };
    Ok(CellResult {
        lambda1,
        lambda2,
        r: verdict.r,
        predicted: verdict.decision,
        empirical,
    })
}

/// Every grid cell, `axis1` outer and `axis2` inner. Cells run in parallel;
/// the output order is fixed.
pub fn run_sweep(file: &SweepFile) -> randact::Result<Vec<CellResult>> {
    let sim = file.sim.as_ref().filter(|s| !s.is_empty()).map(EmpiricalSettings::from);
    let cells: Vec<(f64, f64)> = file
        .axis1
        .values()
        .into_iter()
        .flat_map(|a| file.axis2.values().into_iter().map(move |b| (a, b)))
        .collect();
    cells
        .into_par_iter()
        .map(|(a, b)| evaluate_cell(file.template, a, b, sim))
        .collect()
}
