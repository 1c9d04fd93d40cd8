//! Monte Carlo trajectories of `X[n+1] = A X[n] + B[n] u[n]` under a
//! [`ControlPolicy`], ensemble second moments, and an empirical stability
//! verdict from the tail growth rate.
//!
//! Trial `k` draws its directions from stream `k` of the configured seed, and
//! ensemble statistics are merged in trial order, so results do not depend on
//! how trials are scheduled across threads.

use rayon::prelude::*;

use crate::controller::{greedy_control_raw, mixed_action_raw, MixedStrategyParams};
use crate::error::{Error, Result};
use crate::model::{ActuationDirection, ControlPolicy, GainSpectrum, StateVector, WeightMatrix};
use crate::scalar::Scalar;
use crate::sphere::{sample_uniform_into, SeededRng};

/// Squared norms above this are treated as divergence.
pub const DIVERGENCE_CAP: f64 = 1e300;

/// Trials per parallel work unit.
const CHUNK_TRIALS: usize = 32;

fn divergence_cap<T: Scalar>() -> T {
    let max = T::max_value();
    if max.as_f64() > DIVERGENCE_CAP * 1e6 {
        T::of(DIVERGENCE_CAP)
    } else {
        max / T::of(1e6)
    }
}

/// Everything needed to reproduce an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig<T = f64> {
    pub spec: GainSpectrum<T>,
    pub x0: StateVector<T>,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub policy: ControlPolicy<T>,
    /// Also record `X[n]ᵀ P X[n]` for this `P`.
    pub record_weighted: Option<WeightMatrix<T>>,
}

impl<T: Scalar> SimulationConfig<T> {
    pub fn new(
        spec: GainSpectrum<T>,
        x0: StateVector<T>,
        horizon: usize,
        trials: usize,
        seed: u64,
        policy: ControlPolicy<T>,
    ) -> Result<Self> {
        let cfg = Self {
            spec,
            x0,
            horizon,
            trials,
            seed,
            policy,
            record_weighted: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_weighted(mut self, p: WeightMatrix<T>) -> Result<Self> {
        self.record_weighted = Some(p);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.spec.dim();
        if self.x0.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.x0.dim(),
            });
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter {
                reason: "horizon must be at least 1".into(),
            });
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter {
                reason: "trials must be at least 1".into(),
            });
        }
        if let Some(p) = &self.record_weighted {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: p.dim(),
                });
            }
        }
        match &self.policy {
            ControlPolicy::Zero => {}
            ControlPolicy::Greedy(w) => {
                if w.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: w.dim(),
                    });
                }
            }
            ControlPolicy::Mixed(params) => {
                if params.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: params.dim(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// `x'_i = λ_i x_i + b_i u`.
pub fn step<T: Scalar>(
    x: &StateVector<T>,
    u: T,
    b: &ActuationDirection<T>,
    spec: &GainSpectrum<T>,
) -> Result<StateVector<T>> {
    let d = spec.dim();
    for actual in [x.dim(), b.dim()] {
        if actual != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual,
            });
        }
    }
    let mut out = x.as_slice().to_vec();
    step_in_place(&mut out, u, b.as_slice(), spec.lambdas());
    Ok(StateVector::from_vec_unchecked(out))
}

#[inline]
fn step_in_place<T: Scalar>(x: &mut [T], u: T, b: &[T], lambdas: &[T]) {
    for i in 0..x.len() {
        x[i] = lambdas[i] * x[i] + b[i] * u;
    }
}

fn weighted<T: Scalar>(x: &[T], p: &[T]) -> T {
    x.iter().zip(p).map(|(&xi, &pi)| pi * xi * xi).sum()
}

fn sq_norm<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum()
}

/// Per-step records of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T = f64> {
    /// `‖X[n]‖²` for `n = 0..=N`, truncated after divergence.
    pub sq_norms: Vec<T>,
    /// `X[n]ᵀ P X[n]` when requested, same length as `sq_norms`.
    pub weighted: Option<Vec<T>>,
    /// First step whose squared norm exceeded the cap or stopped being finite.
    pub diverged_at: Option<usize>,
}

struct Workspace<T> {
    x: Vec<T>,
    b: Vec<T>,
    sx: Vec<T>,
    sb: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    fn new(d: usize, m: usize) -> Self {
        Self {
            x: vec![T::zero(); d],
            b: vec![T::zero(); d],
            sx: vec![T::zero(); m],
            sb: vec![T::zero(); m],
        }
    }
}

fn control<T: Scalar>(policy: &ControlPolicy<T>, lambdas: &[T], ws: &mut Workspace<T>) -> T {
    match policy {
        ControlPolicy::Zero => T::zero(),
        ControlPolicy::Greedy(w) => greedy_control_raw(w.weights(), lambdas, &ws.x, &ws.b),
        ControlPolicy::Mixed(params) => {
            mixed_action_raw(
                params,
                params.p_sub().weights(),
                &ws.x,
                &ws.b,
                &mut ws.sx,
                &mut ws.sb,
            )
            .u
        }
    }
}

fn policy_sub_dim<T: Scalar>(policy: &ControlPolicy<T>) -> usize {
    match policy {
        ControlPolicy::Mixed(p) => p.m(),
        _ => 0,
    }
}

/// Runs trial `trial_index` and calls `record(n, x)` for every step until the
/// horizon or divergence. Returns the divergence step, if any.
fn drive<T: Scalar, F: FnMut(usize, &[T], T)>(
    config: &SimulationConfig<T>,
    trial_index: u64,
    ws: &mut Workspace<T>,
    mut record: F,
) -> Option<usize> {
    let cap = divergence_cap::<T>();
    let lambdas = config.spec.lambdas();
    let mut rng = SeededRng::new(config.seed, trial_index);
    ws.x.copy_from_slice(config.x0.as_slice());
    for n in 0..=config.horizon {
        if n > 0 {
            sample_uniform_into(&mut ws.b, &mut rng);
            let u = control(&config.policy, lambdas, ws);
            let (x, b) = (&mut ws.x, &ws.b);
            step_in_place(x, u, b, lambdas);
        }
        let s = sq_norm(&ws.x);
        if !(s <= cap) {
            return Some(n);
        }
        record(n, &ws.x, s);
    }
    None
}

/// One trial of the configured system. Identical `(seed, trial_index)` gives
/// identical output.
pub fn run_trajectory<T: Scalar>(
    config: &SimulationConfig<T>,
    trial_index: u64,
) -> Result<Trajectory<T>> {
    config.validate()?;
    let mut ws = Workspace::new(config.spec.dim(), policy_sub_dim(&config.policy));
    let mut sq_norms = Vec::with_capacity(config.horizon + 1);
    let mut weighted_vals = config
        .record_weighted
        .as_ref()
        .map(|_| Vec::with_capacity(config.horizon + 1));
    let p = config.record_weighted.as_ref().map(|p| p.weights());
    let diverged_at = drive(config, trial_index, &mut ws, |_, x, s| {
        sq_norms.push(s);
        if let (Some(out), Some(p)) = (weighted_vals.as_mut(), p) {
            out.push(weighted(x, p));
        }
    });
    Ok(Trajectory {
        sq_norms,
        weighted: weighted_vals,
        diverged_at,
    })
}

/// Running mean and variance of one quantity at every step. Trials that
/// diverged before a step are counted separately and make that step's
/// estimate infinite.
#[derive(Debug, Clone)]
struct Moments<T> {
    count: Vec<usize>,
    mean: Vec<T>,
    m2: Vec<T>,
    diverged: Vec<usize>,
}

impl<T: Scalar> Moments<T> {
    fn new(len: usize) -> Self {
        Self {
            count: vec![0; len],
            mean: vec![T::zero(); len],
            m2: vec![T::zero(); len],
            diverged: vec![0; len],
        }
    }

    #[inline]
    fn push(&mut self, n: usize, x: T) {
        self.count[n] += 1;
        let delta = x - self.mean[n];
        self.mean[n] = self.mean[n] + delta / T::of_usize(self.count[n]);
        self.m2[n] = self.m2[n] + delta * (x - self.mean[n]);
    }

    fn mark_diverged(&mut self, from: usize) {
        for d in &mut self.diverged[from..] {
            *d += 1;
        }
    }

    // Chan et al. pairwise merge; applied in trial order for determinism
    fn merge(&mut self, other: &Self) {
        for n in 0..self.mean.len() {
            self.diverged[n] += other.diverged[n];
            let (na, nb) = (self.count[n], other.count[n]);
            if nb == 0 {
                continue;
            }
            if na == 0 {
                self.count[n] = nb;
                self.mean[n] = other.mean[n];
                self.m2[n] = other.m2[n];
                continue;
            }
            let total = na + nb;
            let (fa, fb, ft) = (T::of_usize(na), T::of_usize(nb), T::of_usize(total));
            let delta = other.mean[n] - self.mean[n];
            self.mean[n] = self.mean[n] + delta * fb / ft;
            self.m2[n] = self.m2[n] + other.m2[n] + delta * delta * fa * fb / ft;
            self.count[n] = total;
        }
    }

    fn means(&self) -> Vec<T> {
        (0..self.mean.len())
            .map(|n| {
                if self.diverged[n] > 0 {
                    T::infinity()
                } else {
                    self.mean[n]
                }
            })
            .collect()
    }

    fn std_errors(&self) -> Vec<T> {
        (0..self.mean.len())
            .map(|n| {
                let c = self.count[n];
                if self.diverged[n] > 0 {
                    T::infinity()
                } else if c < 2 {
                    T::zero()
                } else {
                    let cf = T::of_usize(c);
                    (self.m2[n] / (cf - T::one())).sqrt() / cf.sqrt()
                }
            })
            .collect()
    }
}

/// Empirical stability reading of a moment sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmpiricalVerdict {
    Bounded,
    Growing,
    Indeterminate,
}

impl EmpiricalVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            EmpiricalVerdict::Bounded => "bounded",
            EmpiricalVerdict::Growing => "growing",
            EmpiricalVerdict::Indeterminate => "indeterminate",
        }
    }
}

/// Least-squares fit of `ln y[n] = a + n ln ρ` over the last half of a
/// moment sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit<T = f64> {
    /// Fitted per-step rate `ρ`.
    pub rate: T,
    /// Standard error of `ρ` (delta method on the slope).
    pub std_error: T,
    pub verdict: EmpiricalVerdict,
}

/// Fits the per-step geometric rate of `values` over `n ∈ [N/2, N]`.
///
/// Bounded if `ρ < 1 − 3σ`, growing if `ρ > 1 + 3σ`. A sequence that reaches
/// infinity is growing, one that reaches zero is bounded.
pub fn fit_growth<T: Scalar>(values: &[T]) -> GrowthFit<T> {
    if values.iter().any(|v| v.is_infinite()) {
        let finite = values.iter().take_while(|v| v.is_finite()).count();
        let rate = if finite >= 2 {
            fit_growth(&values[..finite]).rate
        } else {
            T::infinity()
        };
        return GrowthFit {
            rate,
            std_error: T::zero(),
            verdict: EmpiricalVerdict::Growing,
        };
    }
    let n_total = values.len();
    if n_total < 2 {
        return GrowthFit {
            rate: T::nan(),
            std_error: T::infinity(),
            verdict: EmpiricalVerdict::Indeterminate,
        };
    }
    let start = (n_total - 1) / 2;
    let tail = &values[start..];
    if tail.iter().any(|&v| v <= T::zero()) {
        return GrowthFit {
            rate: T::zero(),
            std_error: T::zero(),
            verdict: EmpiricalVerdict::Bounded,
        };
    }
    let k = T::of_usize(tail.len());
    let xs: Vec<T> = (0..tail.len()).map(|i| T::of_usize(start + i)).collect();
    let ys: Vec<T> = tail.iter().map(|v| v.ln()).collect();
    let xm = xs.iter().copied().sum::<T>() / k;
    let ym = ys.iter().copied().sum::<T>() / k;
    let sxx: T = xs.iter().map(|&x| (x - xm) * (x - xm)).sum();
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let se_slope = if tail.len() > 2 {
        let rss: T = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let e = y - intercept - slope * x;
                e * e
            })
            .sum();
        (rss / (k - T::of(2.0)) / sxx).sqrt()
    } else {
        T::zero()
    };
    let rate = slope.exp();
    let std_error = rate * se_slope;
    let three = T::of(3.0);
    let verdict = if rate < T::one() - three * std_error {
        EmpiricalVerdict::Bounded
    } else if rate > T::one() + three * std_error {
        EmpiricalVerdict::Growing
    } else {
        EmpiricalVerdict::Indeterminate
    };
    GrowthFit {
        rate,
        std_error,
        verdict,
    }
}

/// Ensemble second moments over `N + 1` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats<T = f64> {
    /// Estimate of `E[X[n]ᵀ X[n]]`.
    pub mean_sq_norm: Vec<T>,
    pub std_errors: Vec<T>,
    /// Estimate of `E[X[n]ᵀ P X[n]]` when a weight matrix was configured.
    pub mean_weighted: Option<Vec<T>>,
    pub weighted_std_errors: Option<Vec<T>>,
    /// Fit on the weighted moment when present, otherwise on the raw one.
    pub fit: GrowthFit<T>,
    /// Fit on the raw squared norm.
    pub raw_fit: GrowthFit<T>,
    pub diverged_trials: usize,
}

impl<T: Scalar> EnsembleStats<T> {
    pub fn growth_rate(&self) -> T {
        self.fit.rate
    }

    pub fn verdict(&self) -> EmpiricalVerdict {
        self.fit.verdict
    }
}

/// Splits `0..trials` into fixed chunks, runs `body` on each in parallel and
/// returns the results in chunk order.
fn chunked<R: Send, F: Fn(u64, u64) -> R + Sync>(trials: usize, body: F) -> Vec<R> {
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = (c * CHUNK_TRIALS) as u64;
            let hi = ((c + 1) * CHUNK_TRIALS).min(trials) as u64;
            body(lo, hi)
        })
        .collect()
}

fn reduce<T: Scalar>(parts: Vec<Vec<Moments<T>>>) -> Vec<Moments<T>> {
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("at least one chunk");
    for part in iter {
        for (a, p) in acc.iter_mut().zip(&part) {
            a.merge(p);
        }
    }
    acc
}

/// Averages [`run_trajectory`] over `config.trials` independent trials.
pub fn run_ensemble<T: Scalar>(config: &SimulationConfig<T>) -> Result<EnsembleStats<T>> {
    config.validate()?;
    let len = config.horizon + 1;
    let d = config.spec.dim();
    let m = policy_sub_dim(&config.policy);
    let p = config.record_weighted.as_ref().map(|p| p.weights());
    let channels = if p.is_some() { 2 } else { 1 };

    let parts = chunked(config.trials, |lo, hi| {
        let mut ws = Workspace::new(d, m);
        let mut acc = vec![Moments::new(len); channels];
        let mut diverged = 0usize;
        for k in lo..hi {
            let div = drive(config, k, &mut ws, |n, x, s| {
                acc[0].push(n, s);
                if let Some(p) = p {
                    acc[1].push(n, weighted(x, p));
                }
            });
            if let Some(n) = div {
                diverged += 1;
                for a in acc.iter_mut() {
                    a.mark_diverged(n);
                }
            }
        }
        (acc, diverged)
    });
    let diverged_trials = parts.iter().map(|(_, d)| d).sum();
    let acc = reduce(parts.into_iter().map(|(a, _)| a).collect());

    let mean_sq_norm = acc[0].means();
    let std_errors = acc[0].std_errors();
    let (mean_weighted, weighted_std_errors) = if channels == 2 {
        (Some(acc[1].means()), Some(acc[1].std_errors()))
    } else {
        (None, None)
    };
    let raw_fit = fit_growth(&mean_sq_norm);
    let fit = mean_weighted.as_deref().map(fit_growth).unwrap_or(raw_fit);
    Ok(EnsembleStats {
        mean_sq_norm,
        std_errors,
        mean_weighted,
        weighted_std_errors,
        fit,
        raw_fit,
        diverged_trials,
    })
}

/// Result of simulating the full system under the mixed strategy alongside
/// the embedded unstable subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledReport<T = f64> {
    /// `max_n ‖T X[n] − X'[n]‖` over all trials.
    pub max_coupling_error: T,
    /// Largest per-trial ratio of the coupling error to `max_n ‖X[n]‖`.
    pub max_relative_coupling_error: T,
    pub decisions: usize,
    pub drops: usize,
    /// Estimate of `E[X'[n]ᵀ P_sub X'[n]]`.
    pub sub_weighted: Vec<T>,
    pub sub_weighted_std_errors: Vec<T>,
    /// Indices of the stable coordinates, in order.
    pub stable_indices: Vec<usize>,
    /// `stable_moments[j][n]` estimates `E[x_i[n]²]` for `i = stable_indices[j]`.
    pub stable_moments: Vec<Vec<T>>,
    pub stable_std_errors: Vec<Vec<T>>,
    pub diverged_trials: usize,
}

impl<T: Scalar> CoupledReport<T> {
    pub fn drop_frequency(&self) -> T {
        T::of_usize(self.drops) / T::of_usize(self.decisions)
    }

    /// Binomial standard error of `1 − q` at the observed frequency `q'`.
    pub fn drop_std_error(&self, q: T) -> T {
        ((T::one() - q) * q / T::of_usize(self.decisions)).sqrt()
    }
}

/// Simulates the full system under the mixed strategy and, on the same
/// direction stream, the embedded `m`-dimensional system driven by its own
/// greedy control with the projected direction `T b / ‖T b‖`.
pub fn run_coupled<T: Scalar>(config: &SimulationConfig<T>, m: usize) -> Result<CoupledReport<T>> {
    config.validate()?;
    let params: &MixedStrategyParams<T> = match &config.policy {
        ControlPolicy::Mixed(p) => p,
        _ => {
            return Err(Error::InvalidParameter {
                reason: "coupled simulation needs the mixed policy".into(),
            })
        }
    };
    let d = config.spec.dim();
    if m == 0 || m >= d || m != params.m() {
        return Err(Error::InvalidRange {
            reason: format!(
                "subsystem dimension {m} does not match the strategy ({} of {d})",
                params.m()
            ),
        });
    }
    let len = config.horizon + 1;
    let unstable = params.unstable_indices().to_vec();
    let stable: Vec<usize> = (0..d).filter(|i| !unstable.contains(i)).collect();
    let sub_l = params.sub_spectrum().lambdas();
    let p_sub = params.p_sub().weights();
    let lambdas = config.spec.lambdas();
    let cap = divergence_cap::<T>();

    struct Part<T> {
        err: T,
        rel: T,
        decisions: usize,
        drops: usize,
        diverged: usize,
        acc: Vec<Moments<T>>,
    }

    let parts = chunked(config.trials, |lo, hi| {
        let mut ws = Workspace::new(d, m);
        let mut xs = vec![T::zero(); m];
        let mut bs = vec![T::zero(); m];
        // channel 0: subsystem weighted norm; 1.. : stable coordinates
        let mut part = Part {
            err: T::zero(),
            rel: T::zero(),
            decisions: 0,
            drops: 0,
            diverged: 0,
            acc: vec![Moments::new(len); 1 + stable.len()],
        };
        for k in lo..hi {
            let mut rng = SeededRng::new(config.seed, k);
            ws.x.copy_from_slice(config.x0.as_slice());
            for (j, &i) in unstable.iter().enumerate() {
                xs[j] = ws.x[i];
            }
            let mut trial_err = T::zero();
            let mut trial_max = sq_norm(&ws.x).sqrt();
            for n in 0..=config.horizon {
                if n > 0 {
                    sample_uniform_into(&mut ws.b, &mut rng);
                    let a = mixed_action_raw(params, p_sub, &ws.x, &ws.b, &mut ws.sx, &mut ws.sb);
                    part.decisions += 1;
                    let u_sub = if a.dropped {
                        part.drops += 1;
                        None
                    } else {
                        for (j, &i) in unstable.iter().enumerate() {
                            bs[j] = ws.b[i] / a.projected_norm;
                        }
                        Some(greedy_control_raw(p_sub, sub_l, &xs, &bs))
                    };
                    step_in_place(&mut ws.x, a.u, &ws.b, lambdas);
                    match u_sub {
                        Some(u) => step_in_place(&mut xs, u, &bs, sub_l),
                        None => step_in_place(&mut xs, T::zero(), &bs, sub_l),
                    }
                }
                let s = sq_norm(&ws.x);
                if !(s <= cap) {
                    part.diverged += 1;
                    for a in part.acc.iter_mut() {
                        a.mark_diverged(n);
                    }
                    break;
                }
                trial_max = trial_max.max(s.sqrt());
                let e: T = unstable
                    .iter()
                    .enumerate()
                    .map(|(j, &i)| (ws.x[i] - xs[j]) * (ws.x[i] - xs[j]))
                    .sum::<T>()
                    .sqrt();
                trial_err = trial_err.max(e);
                part.acc[0].push(n, weighted(&xs, p_sub));
                for (j, &i) in stable.iter().enumerate() {
                    part.acc[1 + j].push(n, ws.x[i] * ws.x[i]);
                }
            }
            part.err = part.err.max(trial_err);
            if trial_max > T::zero() {
                part.rel = part.rel.max(trial_err / trial_max);
            }
        }
        part
    });

    let mut err = T::zero();
    let mut rel = T::zero();
    let mut decisions = 0;
    let mut drops = 0;
    let mut diverged = 0;
    let mut accs = Vec::with_capacity(parts.len());
    for p in parts {
        err = err.max(p.err);
        rel = rel.max(p.rel);
        decisions += p.decisions;
        drops += p.drops;
        diverged += p.diverged;
        accs.push(p.acc);
    }
    let acc = reduce(accs);
    Ok(CoupledReport {
        max_coupling_error: err,
        max_relative_coupling_error: rel,
        decisions,
        drops,
        sub_weighted: acc[0].means(),
        sub_weighted_std_errors: acc[0].std_errors(),
        stable_indices: stable,
        stable_moments: acc[1..].iter().map(Moments::means).collect(),
        stable_std_errors: acc[1..].iter().map(Moments::std_errors).collect(),
        diverged_trials: diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{build_mixed_strategy, stationary_controller};
    use approx::assert_relative_eq;

    fn spec(v: &[f64]) -> GainSpectrum<f64> {
        GainSpectrum::new(v.to_vec()).unwrap()
    }
    fn sv(v: &[f64]) -> StateVector<f64> {
        StateVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn step_examples() {
        let s = spec(&[2.0, 3.0]);
        let b = ActuationDirection::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(step(&sv(&[1.0, 1.0]), 0.0, &b, &s).unwrap().as_slice(), &[2.0, 3.0]);
        assert_eq!(step(&sv(&[0.0, 0.0]), 1.5, &b, &s).unwrap().as_slice(), &[1.5, 0.0]);
        assert_eq!(step(&sv(&[1.0, 0.0]), -2.0, &b, &s).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(step(&sv(&[1.0]), 0.0, &b, &s).is_err());
    }

    #[test]
    fn uncontrolled_decay_is_deterministic() {
        let cfg = SimulationConfig::new(spec(&[0.5, 0.9]), sv(&[1.0, 1.0]), 40, 1, 3, ControlPolicy::Zero).unwrap();
        let t = run_trajectory(&cfg, 0).unwrap();
        assert_eq!(t.sq_norms.len(), 41);
        for (n, &v) in t.sq_norms.iter().enumerate() {
            assert_relative_eq!(v, 0.25f64.powi(n as i32) + 0.81f64.powi(n as i32), max_relative = 1e-13);
        }
        let e = run_ensemble(&cfg).unwrap();
        assert_eq!(e.fit.verdict, EmpiricalVerdict::Bounded);
    }

    #[test]
    fn uncontrolled_growth_diverges() {
        let cfg = SimulationConfig::new(spec(&[2.0, 2.0]), sv(&[1.0, 1.0]), 1000, 4, 3, ControlPolicy::Zero).unwrap();
        let t = run_trajectory(&cfg, 0).unwrap();
        let n = t.diverged_at.unwrap();
        assert!(n < 1000 && n > 400);
        assert_eq!(t.sq_norms.len(), n);
        let e = run_ensemble(&cfg).unwrap();
        assert_eq!(e.diverged_trials, 4);
        assert!(e.mean_sq_norm[1000].is_infinite());
        assert_eq!(e.verdict(), EmpiricalVerdict::Growing);
    }

    #[test]
    fn single_trial_ensemble_matches_trajectory() {
        let s = spec(&[1.5, 2.0]);
        let p = stationary_controller(&s).unwrap();
        let cfg = SimulationConfig::new(s, sv(&[1.0, -0.5]), 30, 1, 9, ControlPolicy::Greedy(p.clone()))
            .unwrap()
            .with_weighted(p)
            .unwrap();
        let t = run_trajectory(&cfg, 0).unwrap();
        let e = run_ensemble(&cfg).unwrap();
        assert_eq!(t.sq_norms, e.mean_sq_norm);
        assert_eq!(t.weighted.unwrap(), e.mean_weighted.unwrap());
        assert!(e.std_errors.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn ensemble_is_deterministic_across_thread_counts() {
        let s = spec(&[1.5, 1.6, 1.9]);
        let p = stationary_controller(&s).unwrap();
        let cfg = SimulationConfig::new(s, sv(&[1.0, 1.0, 1.0]), 60, 150, 42, ControlPolicy::Greedy(p.clone()))
            .unwrap()
            .with_weighted(p)
            .unwrap();
        let a = run_ensemble(&cfg).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = one.install(|| run_ensemble(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn growth_fit_on_exact_geometric() {
        let v: Vec<f64> = (0..101).map(|n| 3.0 * 0.9f64.powi(n)).collect();
        let f = fit_growth(&v);
        assert_relative_eq!(f.rate, 0.9, max_relative = 1e-12);
        assert_eq!(f.verdict, EmpiricalVerdict::Bounded);
        let v: Vec<f64> = (0..101).map(|n| 1.1f64.powi(n)).collect();
        assert_eq!(fit_growth(&v).verdict, EmpiricalVerdict::Growing);
        let v = vec![1.0; 50];
        assert_eq!(fit_growth(&v).verdict, EmpiricalVerdict::Indeterminate);
    }

    #[test]
    fn coupled_identity_and_zero_policy_rejected() {
        let s = spec(&[1.2, 0.6, 1.5]);
        let params = build_mixed_strategy(&s, 1e-10).unwrap();
        let cfg = SimulationConfig::new(s.clone(), sv(&[1.0, 2.0, -1.0]), 200, 40, 1, ControlPolicy::Mixed(params))
            .unwrap();
        let r = run_coupled(&cfg, 2).unwrap();
        assert!(r.max_relative_coupling_error < 1e-10, "{}", r.max_relative_coupling_error);
        assert_eq!(r.stable_indices, vec![1]);
        assert_eq!(r.decisions, 40 * 200);
        assert!(run_coupled(&cfg, 1).is_err());

        let zero = SimulationConfig::new(s, sv(&[1.0, 2.0, -1.0]), 10, 1, 1, ControlPolicy::Zero).unwrap();
        assert!(run_coupled(&zero, 2).is_err());
    }

    #[test]
    fn coupled_one_step_by_hand() {
        // d = 2, m = 1: u' = −λ1 x1 / sign-normalized direction, u = u'/|b1|
        let s = spec(&[2.0, 0.5]);
        let params = build_mixed_strategy(&s, 1e-10).unwrap();
        let h = params.h();
        let cfg = SimulationConfig::new(s, sv(&[1.0, 1.0]), 1, 1, 77, ControlPolicy::Mixed(params)).unwrap();
        let t = run_trajectory(&cfg, 0).unwrap();
        let mut rng = SeededRng::new(77, 0);
        let mut b = [0.0f64; 2];
        sample_uniform_into(&mut b, &mut rng);
        let expected = if b[0].abs() * h <= 1.0 {
            4.0 + 0.25
        } else {
            // first coordinate cancelled exactly
            let u = -2.0 / b[0];
            let x2 = 0.5 + b[1] * u;
            x2 * x2
        };
        assert_relative_eq!(t.sq_norms[1], expected, max_relative = 1e-12);
    }
}
