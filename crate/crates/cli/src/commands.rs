//! Subcommand implementations. Each writes its results to `out`, diagnostics
//! to `err`, and returns the process exit code.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use randact::verify::run_checks;
use randact::weights::stationary_rate;
use randact::{classify_default, run_ensemble, stationary_weights, Decision, Error, GainSpectrum};

use crate::config::{parse_simulate, parse_sweep, to_toml, Axis, ConfigError, SweepFile, SweepSim, Template};
use crate::sweep::run_sweep;

pub mod exit {
    pub const OK: i32 = 0;
    pub const UNSTABILIZABLE: i32 = 1;
    pub const INCONCLUSIVE: i32 = 2;
    pub const VERIFY_FAILED: i32 = 1;
    pub const NOT_CASE_1A: i32 = 3;
    pub const USAGE: i32 = 64;
    pub const CONFIG: i32 = 65;
    pub const NO_INPUT: i32 = 66;
    pub const SOFTWARE: i32 = 70;
    pub const CANT_CREATE: i32 = 73;
}

/// Reals in CSV and machine-readable lines: 17 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| real(x)).collect::<Vec<_>>().join(",")
}

fn parse_lambdas(args: &[String], err: &mut dyn Write) -> Result<GainSpectrum<f64>, i32> {
    if args.is_empty() {
        let _ = writeln!(err, "error: at least one eigenvalue is required");
        return Err(exit::USAGE);
    }
    let mut lambdas = Vec::with_capacity(args.len());
    for a in args {
        match a.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => lambdas.push(v),
            _ => {
                let _ = writeln!(err, "error: '{a}' is not a finite eigenvalue");
                return Err(exit::USAGE);
            }
        }
    }
    GainSpectrum::new(lambdas).map_err(|e| {
        let _ = writeln!(err, "error: {e}");
        exit::USAGE
    })
}

pub fn threshold(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let spec = match parse_lambdas(args, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let v = classify_default(&spec);
    let subsystem = v
        .subsystem
        .as_ref()
        .map(|s| join(s.lambdas()))
        .unwrap_or_else(|| "none".into());
    let _ = writeln!(
        out,
        "r={} m={} case={} decision={} subsystem={} boundary_sensitive={}",
        real(v.r),
        v.m,
        v.case.as_str(),
        v.decision.as_str(),
        subsystem,
        v.boundary_sensitive
    );
    let relation = match v.decision {
        Decision::Stabilizable if v.r < 1.0 => "r < 1",
        Decision::Stabilizable | Decision::InconclusiveAtThreshold => "r = 1",
        Decision::Unstabilizable => "r > 1",
    };
    let _ = writeln!(
        out,
        "{}: r = {:.6} ({relation}), {} unstable of {} modes",
        v.decision.as_str().replace('_', " "),
        v.r,
        v.m,
        spec.dim()
    );
    match v.decision {
        Decision::Stabilizable => exit::OK,
        Decision::Unstabilizable => exit::UNSTABILIZABLE,
        Decision::InconclusiveAtThreshold => exit::INCONCLUSIVE,
    }
}

pub fn solve_weights(args: &[String], q: f64, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let spec = match parse_lambdas(args, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if !(q > 0.0 && q <= 1.0) {
        let _ = writeln!(err, "error: --q must lie in (0, 1], got {q}");
        return exit::USAGE;
    }
    match stationary_weights(&spec, q, 1e-12) {
        Ok(sol) => {
            let _ = writeln!(out, "p={}", join(sol.weights.weights()));
            let _ = writeln!(out, "residual={}", real(sol.residual));
            let _ = writeln!(out, "r={}", real(stationary_rate(&spec, q)));
            exit::OK
        }
        Err(Error::NotCase1a { index, value }) => {
            let _ = writeln!(
                err,
                "error: not case 1a: target fraction v_{} = {} is not positive",
                index + 1,
                real(value)
            );
            exit::NOT_CASE_1A
        }
        Err(e @ Error::InvalidRange { .. }) => {
            let _ = writeln!(err, "error: {e}");
            exit::USAGE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit::SOFTWARE
        }
    }
}

pub fn verify(seed: u64, out: &mut dyn Write) -> i32 {
    let mut ok = true;
    for c in run_checks(seed) {
        ok &= c.passed;
        let status = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{status} {}: {}", c.name, c.detail);
    }
    if ok {
        exit::OK
    } else {
        exit::VERIFY_FAILED
    }
}

/// Flag overrides shared by `simulate` and `sweep`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub horizon: Option<usize>,
}

fn read_config(path: &Path, err: &mut dyn Write) -> Result<String, i32> {
    fs::read_to_string(path).map_err(|e| {
        let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
        exit::NO_INPUT
    })
}

fn config_error(e: &ConfigError, err: &mut dyn Write) -> i32 {
    let _ = writeln!(err, "config error in field '{}': {}", e.field, e.message);
    exit::CONFIG
}

fn write_comments(buf: &mut Vec<u8>, title: &str, toml_text: &str) {
    let _ = writeln!(buf, "# randact {title}");
    for line in toml_text.lines() {
        if line.is_empty() {
            let _ = writeln!(buf, "#");
        } else {
            let _ = writeln!(buf, "# {line}");
        }
    }
}

fn emit(buf: Vec<u8>, target: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match target {
        Some(path) => match fs::write(path, &buf) {
            Ok(()) => exit::OK,
            Err(e) => {
                let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
                exit::CANT_CREATE
            }
        },
        None => match out.write_all(&buf) {
            Ok(()) => exit::OK,
            Err(_) => exit::CANT_CREATE,
        },
    }
}

fn csv_rows(buf: &mut Vec<u8>, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn simulate(
    path: &Path,
    overrides: Overrides,
    target: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let text = match read_config(path, err) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let mut file = match parse_simulate(&text) {
        Ok(f) => f,
        Err(e) => return config_error(&e, err),
    };
    if let Some(s) = overrides.seed {
        file.simulation.seed = s;
    }
    if let Some(t) = overrides.trials {
        file.simulation.trials = t;
    }
    if let Some(h) = overrides.horizon {
        file.simulation.horizon = h;
    }
    let effective = match file.effective() {
        Ok(e) => e,
        Err(e) => return config_error(&e, err),
    };
    let cfg = match effective.build() {
        Ok(c) => c,
        Err(e) => return config_error(&e, err),
    };
    let stats = match run_ensemble(&cfg) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit::SOFTWARE;
        }
    };

    let mut buf = Vec::new();
    write_comments(&mut buf, "simulate", &to_toml(&effective));
    let weighted = stats.mean_weighted.as_ref().zip(stats.weighted_std_errors.as_ref());
    let rows = (0..stats.mean_sq_norm.len()).map(|n| {
        let (w, wse) = match weighted {
            Some((w, se)) => (real(w[n]), real(se[n])),
            None => (String::new(), String::new()),
        };
        vec![
            n.to_string(),
            real(stats.mean_sq_norm[n]),
            real(stats.std_errors[n]),
            w,
            wse,
        ]
    });
    if csv_rows(
        &mut buf,
        &["step", "mean_sq_norm", "std_err", "mean_weighted", "weighted_std_err"],
        rows,
    )
    .is_err()
    {
        return exit::SOFTWARE;
    }
    let _ = writeln!(
        err,
        "growth rate {} ± {} ({}); raw norm {} ({}); diverged trials {}",
        real(stats.fit.rate),
        real(stats.fit.std_error),
        stats.fit.verdict.as_str(),
        real(stats.raw_fit.rate),
        stats.raw_fit.verdict.as_str(),
        stats.diverged_trials
    );
    emit(buf, target, out, err)
}

/// Sweep inputs gathered from the command line.
#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub config: Option<std::path::PathBuf>,
    pub template: Option<Template>,
    pub axis1: Option<Axis>,
    pub axis2: Option<Axis>,
    pub overrides: Overrides,
}

fn default_axis(template: Template) -> Axis {
    match template {
        Template::TwoD => Axis { min: 0.1, max: 4.0, steps: 20 },
        Template::FourDPaired => Axis { min: 0.1, max: 2.0, steps: 20 },
    }
}

pub fn sweep(args: &SweepArgs, target: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut file = match &args.config {
        Some(path) => {
            let text = match read_config(path, err) {
                Ok(t) => t,
                Err(code) => return code,
            };
            match parse_sweep(&text) {
                Ok(f) => f,
                Err(e) => return config_error(&e, err),
            }
        }
        None => {
            let template = args.template.unwrap_or(Template::TwoD);
            SweepFile {
                axis1: default_axis(template),
                axis2: default_axis(template),
                template,
                sim: None,
            }
        }
    };
    if let Some(t) = args.template {
        file.template = t;
    }
    if let Some(a) = args.axis1 {
        file.axis1 = a;
    }
    if let Some(a) = args.axis2 {
        file.axis2 = a;
    }
    let o = args.overrides;
    if o.seed.is_some() || o.trials.is_some() || o.horizon.is_some() {
        let sim = file.sim.get_or_insert_with(SweepSim::default);
        sim.seed = o.seed.or(sim.seed);
        sim.trials = o.trials.or(sim.trials);
        sim.horizon = o.horizon.or(sim.horizon);
    }
    if let Err(e) = file.validate() {
        return config_error(&e, err);
    }
    // echo the settings actually used
    if let Some(sim) = file.sim.as_mut().filter(|s| !s.is_empty()) {
        let eff = crate::sweep::EmpiricalSettings::from(&*sim);
        *sim = SweepSim {
            horizon: Some(eff.horizon),
            trials: Some(eff.trials),
            seed: Some(eff.seed),
        };
    }
    let cells = match run_sweep(&file) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit::SOFTWARE;
        }
    };
    let mut buf = Vec::new();
    write_comments(&mut buf, "sweep", &to_toml(&file));
    let rows = cells.iter().map(|c| {
        let (rate, verdict) = match &c.empirical {
            Some(e) => (real(e.rate), e.label().to_string()),
            None => (String::new(), String::new()),
        };
        vec![
            real(c.lambda1),
            real(c.lambda2),
            real(c.r),
            c.predicted.as_str().to_string(),
            rate,
            verdict,
        ]
    });
    if csv_rows(
        &mut buf,
        &["lambda1", "lambda2", "r", "predicted", "empirical_rate", "empirical_verdict"],
        rows,
    )
    .is_err()
    {
        return exit::SOFTWARE;
    }
    emit(buf, target, out, err)
}
