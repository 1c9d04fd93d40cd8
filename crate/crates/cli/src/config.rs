//! TOML configuration for `simulate` and `sweep`.
//!
//! ```toml
//! [spectrum]
//! lambdas = [1.5, 2.0]
//!
//! [simulation]
//! horizon = 200
//! trials = 1000
//! seed = 1
//! x0 = [1.0, 1.0]        # optional, defaults to all ones
//! weighted = [1.0, 3.16]  # optional, overrides the recorded weight matrix
//!
//! [policy]
//! kind = "greedy"         # zero | greedy | mixed
//! weights = [1.0, 3.16]   # greedy only; defaults to the stationary weights
//! q = 0.9                 # mixed only; defaults to the midpoint rule
//! ```

use std::fmt;

use randact::{
    build_mixed_strategy, stationary_controller, ControlPolicy, GainSpectrum, MixedStrategyParams,
    SimulationConfig, StateVector, WeightMatrix,
};
use serde::{Deserialize, Serialize};

/// Default fixed-point tolerance for weights solved from a config.
pub const SOLVE_TOL: f64 = 1e-10;

/// A config problem tied to the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighted: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Zero,
    Greedy,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

/// Contents of a `simulate` config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFile {
    pub spectrum: SpectrumSection,
    pub simulation: SimulationSection,
    pub policy: PolicySection,
}

/// Turns a TOML parse error into a [`ConfigError`] naming the offending key:
/// from the message for missing or unknown fields, otherwise from the line the
/// error points at.
fn from_toml(e: toml::de::Error, text: &str) -> ConfigError {
    let message = e.message().trim().to_string();
    let located = e.span().map(|s| locate(text, s.start));
    let named = if message.contains("field") { backticked(&message) } else { None };
    let field = match (named, &located) {
        (Some(name), Some((section, _, _))) if !section.is_empty() => format!("{section}.{name}"),
        (Some(name), _) => name,
        (None, Some((section, Some(key), _))) if !section.is_empty() => format!("{section}.{key}"),
        (None, Some((_, Some(key), _))) => key.clone(),
        _ => "config".to_string(),
    };
    let line = located.map(|(_, _, l)| format!(" (line {l})")).unwrap_or_default();
    ConfigError::new(field, format!("{message}{line}"))
}

fn backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

/// Section header, key and 1-based line number at byte `offset`.
fn locate(text: &str, offset: usize) -> (String, Option<String>, usize) {
    let before = &text[..offset.min(text.len())];
    let line_no = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line
        .split_once('=')
        .map(|(k, _)| k.trim().to_string())
        .filter(|k| !k.is_empty() && !k.starts_with('['));
    let line_end = line_start + line.len();
    let section = text[..line_end]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string())
        .unwrap_or_default();
    (section, key, line_no)
}

pub fn parse_simulate(text: &str) -> Result<SimulateFile, ConfigError> {
    toml::from_str(text).map_err(|e| from_toml(e, text))
}

/// Serialized form echoed into CSV headers; parses back to the same config.
pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("config types serialize")
}

pub fn spectrum(lambdas: &[f64], field: &str) -> Result<GainSpectrum<f64>, ConfigError> {
    GainSpectrum::new(lambdas.to_vec()).map_err(|e| ConfigError::new(field, e.to_string()))
}

fn weights(values: &[f64], d: usize, field: &str) -> Result<WeightMatrix<f64>, ConfigError> {
    if values.len() != d {
        return Err(ConfigError::new(
            field,
            format!("expected {d} entries, got {}", values.len()),
        ));
    }
    WeightMatrix::new(values.to_vec()).map_err(|e| ConfigError::new(field, e.to_string()))
}

impl SimulateFile {
    /// Fills in the defaults so the echoed config is complete.
    pub fn effective(&self) -> Result<SimulateFile, ConfigError> {
        let built = self.build()?;
        let mut out = self.clone();
        out.simulation.x0 = Some(built.x0.as_slice().to_vec());
        out.simulation.weighted = built.record_weighted.as_ref().map(|w| w.weights().to_vec());
        match &built.policy {
            ControlPolicy::Greedy(w) => out.policy.weights = Some(w.weights().to_vec()),
            ControlPolicy::Mixed(p) => out.policy.q = Some(p.q()),
            ControlPolicy::Zero => {}
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<SimulationConfig<f64>, ConfigError> {
        let spec = spectrum(&self.spectrum.lambdas, "spectrum.lambdas")?;
        let d = spec.dim();
        let sim = &self.simulation;
        if sim.horizon == 0 {
            return Err(ConfigError::new("simulation.horizon", "must be at least 1"));
        }
        if sim.trials == 0 {
            return Err(ConfigError::new("simulation.trials", "must be at least 1"));
        }
        let x0 = match &sim.x0 {
            Some(x) if x.len() != d => {
                return Err(ConfigError::new(
                    "simulation.x0",
                    format!("expected {d} entries, got {}", x.len()),
                ))
            }
            Some(x) => StateVector::new(x.clone())
                .map_err(|e| ConfigError::new("simulation.x0", e.to_string()))?,
            None => StateVector::new(vec![1.0; d]).expect("finite"),
        };

        let p = &self.policy;
        if p.kind != PolicyKind::Greedy && p.weights.is_some() {
            return Err(ConfigError::new("policy.weights", "only used by the greedy policy"));
        }
        if p.kind != PolicyKind::Mixed && p.q.is_some() {
            return Err(ConfigError::new("policy.q", "only used by the mixed policy"));
        }
        let (policy, default_weighted) = match p.kind {
            PolicyKind::Zero => (ControlPolicy::Zero, None),
            PolicyKind::Greedy => {
                let w = match &p.weights {
                    Some(w) => weights(w, d, "policy.weights")?,
                    None => stationary_controller(&spec).map_err(|e| {
                        ConfigError::new(
                            "policy.weights",
                            format!("no stationary weights for this spectrum ({e}); give them explicitly"),
                        )
                    })?,
                };
                (ControlPolicy::Greedy(w.clone()), Some(w))
            }
            PolicyKind::Mixed => {
                let params = match p.q {
                    Some(q) => MixedStrategyParams::for_survival(&spec, q, SOLVE_TOL),
                    None => build_mixed_strategy(&spec, SOLVE_TOL),
                }
                .map_err(|e| ConfigError::new("policy.q", e.to_string()))?;
                (ControlPolicy::Mixed(params), None)
            }
        };
        let record = match &sim.weighted {
            Some(w) => Some(weights(w, d, "simulation.weighted")?),
            None => default_weighted,
        };
        let cfg = SimulationConfig::new(spec, x0, sim.horizon, sim.trials, sim.seed, policy)
            .map_err(|e| ConfigError::new("simulation", e.to_string()))?;
        match record {
            Some(w) => cfg
                .with_weighted(w)
                .map_err(|e| ConfigError::new("simulation.weighted", e.to_string())),
            None => Ok(cfg),
        }
    }
}

/// Grid axis `(min, max, steps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn validate(&self, field: &str) -> Result<(), ConfigError> {
        if !(self.min > 0.0 && self.min.is_finite()) {
            return Err(ConfigError::new(field, "min must be positive"));
        }
        if !(self.max >= self.min && self.max.is_finite()) {
            return Err(ConfigError::new(field, "max must be finite and at least min"));
        }
        if self.steps < 2 {
            return Err(ConfigError::new(field, "steps must be at least 2"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let span = self.max - self.min;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| if k + 1 == self.steps { self.max } else { self.min + span * k as f64 / last })
            .collect()
    }

    /// Parses `min,max,steps` (also accepts `:` as separator).
    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.split([',', ':']).map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected min,max,steps, got '{text}'"));
        }
        let min = parts[0].parse().map_err(|_| format!("bad min '{}'", parts[0]))?;
        let max = parts[1].parse().map_err(|_| format!("bad max '{}'", parts[1]))?;
        let steps = parts[2].parse().map_err(|_| format!("bad steps '{}'", parts[2]))?;
        Ok(Self { min, max, steps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Template {
    /// Spectrum `(λ1, λ2)`.
    TwoD,
    /// Spectrum `(λ1, λ1, λ2, λ2)`.
    FourDPaired,
}

impl Template {
    pub fn spectrum(self, l1: f64, l2: f64) -> Vec<f64> {
        match self {
            Template::TwoD => vec![l1, l2],
            Template::FourDPaired => vec![l1, l1, l2, l2],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Template::TwoD => "two_d",
            Template::FourDPaired => "four_d_paired",
        }
    }
}

/// Overrides that switch on the empirical sweep columns.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSim {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SweepSim {
    pub fn is_empty(&self) -> bool {
        self.horizon.is_none() && self.trials.is_none() && self.seed.is_none()
    }
}

/// Contents of a `sweep` config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub axis1: Axis,
    pub axis2: Axis,
    pub template: Template,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SweepSim>,
}

impl SweepFile {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.axis1.validate("axis1")?;
        self.axis2.validate("axis2")?;
        if let Some(sim) = &self.sim {
            if sim.horizon == Some(0) {
                return Err(ConfigError::new("sim.horizon", "must be at least 1"));
            }
            if sim.trials == Some(0) {
                return Err(ConfigError::new("sim.trials", "must be at least 1"));
            }
        }
        Ok(())
    }
}

pub fn parse_sweep(text: &str) -> Result<SweepFile, ConfigError> {
    let file: SweepFile = toml::from_str(text).map_err(|e| from_toml(e, text))?;
    file.validate()?;
    Ok(file)
}
