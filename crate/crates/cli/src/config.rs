//! Sectioned `key = value` experiment configuration.
//!
//! ```text
//! [problem]
//! n_modes = 4
//! step = 1e-3
//! [impulses]
//! t_list = "0.4"
//! s_list = "0.5"
//! [control]
//! kernel = "mode_diagonal"
//! [experiment]
//! lambda_list = "1e-1,1e-2,1e-3"
//! ```
//!
//! Unknown keys are rejected; lists may be written as a comma separated
//! string or as an array.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize};
use wavectl_core::{
    validate_schedule, Coefficient, ImpulseKernel, KernelDescriptor, SpectralField, WaveImpulse, WaveInstanceF64,
};

use crate::error::{CliError, CliResult};

#[derive(Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

fn de_f64<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(match Number::deserialize(d)? {
        Number::Int(i) => i as f64,
        Number::Float(x) => x,
    })
}

fn de_opt_f64<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    de_f64(d).map(Some)
}

/// List written either as `"1,2,3"` or `[1, 2, 3]`; stored as text.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct List(pub String);

impl<'de> Deserialize<'de> for List {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Numbers(Vec<Num>),
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Num {
            Int(i64),
            Float(f64),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Text(s) => List(s),
            Raw::Numbers(v) => List(
                v.iter()
                    .map(|n| match n {
                        Num::Int(i) => i.to_string(),
                        Num::Float(x) => format!("{x:e}"),
                    })
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        })
    }
}

impl List {
    fn floats(&self, key: &str) -> CliResult<Vec<f64>> {
        self.0
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| CliError::Config(format!("{key}: '{s}' is not a number"))))
            .collect()
    }
}

macro_rules! defaults {
    ($($f:ident: $v:expr),* $(,)?) => { $(fn $f() -> f64 { $v })* };
}

defaults! {
    d_horizon: 1.0, d_delay: 0.2, d_step: 1e-3, d_k0: 0.1, d_p: 2.0, d_b_amplitude: 0.3, d_b_frequency: 1.0,
    d_history_amplitude: 0.5, d_history_slope: 1.0, d_history_offset: 0.2, d_velocity_amplitude: 0.3,
    d_target_amplitude: 0.3, d_target_offset: 0.1, d_nonlocal_weight: 0.05, d_tolerance: 1e-10, d_lambda: 1e-2,
}

fn d_n_modes() -> usize {
    4
}
fn d_one() -> usize {
    1
}
fn d_two() -> usize {
    2
}
fn d_max_iterations() -> usize {
    200
}
fn d_gramian_nodes() -> usize {
    64
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default = "d_n_modes")]
    pub n_modes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(default = "d_horizon", deserialize_with = "de_f64")]
    pub horizon: f64,
    #[serde(default = "d_delay", deserialize_with = "de_f64")]
    pub delay: f64,
    #[serde(default = "d_step", deserialize_with = "de_f64")]
    pub step: f64,
    #[serde(default = "d_k0", deserialize_with = "de_f64")]
    pub k0: f64,
    #[serde(default = "d_p", deserialize_with = "de_f64")]
    pub p: f64,
    /// `b(t) = b_amplitude · cos(b_frequency · t + b_phase)`.
    #[serde(default = "d_b_amplitude", deserialize_with = "de_f64")]
    pub b_amplitude: f64,
    #[serde(default = "d_b_frequency", deserialize_with = "de_f64")]
    pub b_frequency: f64,
    #[serde(default, deserialize_with = "de_f64")]
    pub b_phase: f64,
    /// `φ(t) = (amplitude + slope·t) cos(mode·ξ) + offset`.
    #[serde(default = "d_one")]
    pub history_mode: usize,
    #[serde(default = "d_history_amplitude", deserialize_with = "de_f64")]
    pub history_amplitude: f64,
    #[serde(default = "d_history_slope", deserialize_with = "de_f64")]
    pub history_slope: f64,
    #[serde(default = "d_history_offset", deserialize_with = "de_f64")]
    pub history_offset: f64,
    /// `η = amplitude · sin(mode·ξ)`.
    #[serde(default = "d_two")]
    pub velocity_mode: usize,
    #[serde(default = "d_velocity_amplitude", deserialize_with = "de_f64")]
    pub velocity_amplitude: f64,
    /// `x_T = amplitude · cos(mode·ξ) + offset`.
    #[serde(default = "d_two")]
    pub target_mode: usize,
    #[serde(default = "d_target_amplitude", deserialize_with = "de_f64")]
    pub target_amplitude: f64,
    #[serde(default = "d_target_offset", deserialize_with = "de_f64")]
    pub target_offset: f64,
    #[serde(default = "d_nonlocal_weight", deserialize_with = "de_f64")]
    pub nonlocal_weight: f64,
    #[serde(default, deserialize_with = "de_opt_f64", skip_serializing_if = "Option::is_none")]
    pub nonlocal_end: Option<f64>,
    /// `"τ_1:c_1, τ_2:c_2"`.
    #[serde(default)]
    pub nonlocal_nodes: String,
    #[serde(default = "d_tolerance", deserialize_with = "de_f64")]
    pub tolerance: f64,
    #[serde(default = "d_max_iterations")]
    pub max_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulsesSection {
    #[serde(default)]
    pub t_list: List,
    #[serde(default)]
    pub s_list: List,
    /// One amplitude for all impulses, or one per impulse; 0.05 when empty.
    #[serde(default)]
    pub amplitude_list: List,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    /// `mode_diagonal` or `poly`.
    #[serde(default = "d_kernel")]
    pub kernel: String,
    #[serde(default = "d_gains")]
    pub gains: List,
    #[serde(default = "d_lambda", deserialize_with = "de_f64")]
    pub lambda: f64,
    /// Simpson nodes for the certificate's cross-check Gramian.
    #[serde(default = "d_gramian_nodes")]
    pub gramian_nodes: usize,
}

fn d_kernel() -> String {
    "mode_diagonal".into()
}
fn d_gains() -> List {
    List("1".into())
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// `lambda_sweep` or `mode_refinement`, used by `sweep`.
    #[serde(default = "d_kind")]
    pub kind: String,
    #[serde(default = "d_lambda_list")]
    pub lambda_list: List,
    #[serde(default = "d_n_list")]
    pub n_list: List,
    #[serde(default)]
    pub seed: u64,
    /// Record wall-clock times; off by default so outputs stay byte-identical.
    #[serde(default)]
    pub timing: bool,
}

fn d_kind() -> String {
    "lambda_sweep".into()
}
fn d_lambda_list() -> List {
    List("1e-1,1e-2,1e-3,1e-4".into())
}
fn d_n_list() -> List {
    List("2,4,8".into())
}

macro_rules! empty_default {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("all fields have defaults")
            }
        }
    )*};
}

empty_default!(ProblemSection, ControlSection, ExperimentSection);

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub impulses: ImpulsesSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    LambdaSweep,
    ModeRefinement,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    ModeDiagonal(Vec<f64>),
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseSpec {
    pub start: f64,
    pub end: f64,
    pub amplitude: f64,
}

/// Validated configuration with defaults filled.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub raw: RawConfig,
    pub kind: ExperimentKind,
    pub kernel: KernelKind,
    pub impulses: Vec<ImpulseSpec>,
    pub nonlocal_nodes: Vec<(f64, f64)>,
    pub lambdas: Vec<f64>,
    pub n_list: Vec<usize>,
}

impl fmt::Display for ExperimentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.echo())
    }
}

pub fn parse_config(path: &Path) -> CliResult<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_str(&text)
}

fn bad(key: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, "must be positive"))
    }
}

pub fn parse_str(text: &str) -> CliResult<ExperimentSpec> {
    let raw: RawConfig = toml::from_str(text).map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    validate(raw)
}

fn validate(raw: RawConfig) -> CliResult<ExperimentSpec> {
    let p = &raw.problem;
    if p.n_modes == 0 {
        return Err(bad("problem.n_modes", "must be at least 1"));
    }
    positive("problem.horizon", p.horizon)?;
    positive("problem.delay", p.delay)?;
    positive("problem.step", p.step)?;
    positive("problem.tolerance", p.tolerance)?;
    if !(p.p >= 2.0) {
        return Err(bad("problem.p", "must be at least 2"));
    }
    if !(p.k0 >= 0.0) {
        return Err(bad("problem.k0", "must be nonnegative"));
    }
    if !(p.nonlocal_weight >= 0.0) {
        return Err(bad("problem.nonlocal_weight", "must be nonnegative"));
    }
    if p.max_iterations == 0 {
        return Err(bad("problem.max_iterations", "must be at least 1"));
    }
    let nonlocal_nodes = p
        .nonlocal_nodes
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (t, c) = item.split_once(':').ok_or_else(|| bad("problem.nonlocal_nodes", format!("'{item}' is not time:weight")))?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| bad("problem.nonlocal_nodes", format!("'{s}' is not a number")))
            };
            let (t, c) = (parse(t)?, parse(c)?);
            if !(c >= 0.0) {
                return Err(bad("problem.nonlocal_nodes", "weights must be nonnegative"));
            }
            if t < -p.delay || t > p.horizon {
                return Err(bad("problem.nonlocal_nodes", format!("node {t} outside [-delay, horizon]")));
            }
            Ok((t, c))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let ts = raw.impulses.t_list.floats("impulses.t_list")?;
    let ss = raw.impulses.s_list.floats("impulses.s_list")?;
    if ts.len() != ss.len() {
        return Err(bad("impulses.s_list", format!("has {} entries, t_list has {}", ss.len(), ts.len())));
    }
    let times: Vec<(f64, f64)> = ts.iter().copied().zip(ss.iter().copied()).collect();
    validate_schedule(&times, p.horizon).map_err(|e| bad("impulses.t_list/s_list", e))?;
    let amps = raw.impulses.amplitude_list.floats("impulses.amplitude_list")?;
    let amps = match amps.len() {
        0 => vec![0.05; ts.len()],
        1 => vec![amps[0]; ts.len()],
        n if n == ts.len() => amps,
        n => return Err(bad("impulses.amplitude_list", format!("has {n} entries for {} impulses", ts.len()))),
    };
    let impulses =
        times.iter().zip(&amps).map(|(&(start, end), &amplitude)| ImpulseSpec { start, end, amplitude }).collect();

    let c = &raw.control;
    positive("control.lambda", c.lambda)?;
    let kernel = match c.kernel.as_str() {
        "mode_diagonal" => {
            let gains = c.gains.floats("control.gains")?;
            if gains.is_empty() {
                return Err(bad("control.gains", "needs at least one gain"));
            }
            KernelKind::ModeDiagonal(gains)
        }
        "poly" => KernelKind::Polynomial,
        other => return Err(bad("control.kernel", format!("unknown kernel '{other}' (mode_diagonal | poly)"))),
    };
    if c.gramian_nodes < 8 || c.gramian_nodes % 2 == 1 {
        return Err(bad("control.gramian_nodes", "must be even and at least 8"));
    }

    let e = &raw.experiment;
    let kind = match e.kind.as_str() {
        "lambda_sweep" => ExperimentKind::LambdaSweep,
        "mode_refinement" => ExperimentKind::ModeRefinement,
        other => return Err(bad("experiment.kind", format!("unknown kind '{other}' (lambda_sweep | mode_refinement)"))),
    };
    let lambdas = e.lambda_list.floats("experiment.lambda_list")?;
    if lambdas.is_empty() {
        return Err(bad("experiment.lambda_list", "is empty"));
    }
    for (i, &l) in lambdas.iter().enumerate() {
        positive("experiment.lambda_list", l)?;
        // repeats allowed, increases not
        if i > 0 && l > lambdas[i - 1] {
            return Err(bad("experiment.lambda_list", "must be nonincreasing"));
        }
    }
    let n_list = e
        .n_list
        .0
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(bad("experiment.n_list", format!("'{s}' is not a positive integer"))),
        })
        .collect::<CliResult<Vec<_>>>()?;
    if n_list.is_empty() {
        return Err(bad("experiment.n_list", "is empty"));
    }
    Ok(ExperimentSpec { raw, kind, kernel, impulses, nonlocal_nodes, lambdas, n_list })
}

impl ExperimentSpec {
    /// Effective configuration, re-parseable.
    pub fn echo(&self) -> String {
        toml::to_string(&self.raw).expect("config serializes")
    }

    pub fn n_modes(&self) -> usize {
        self.raw.problem.n_modes
    }

    pub fn lambda(&self) -> f64 {
        self.raw.control.lambda
    }

    pub fn seed(&self) -> u64 {
        self.raw.experiment.seed
    }

    pub fn timing(&self) -> bool {
        self.raw.experiment.timing
    }

    /// Wave instance with `n_modes` modes and the given `λ`.
    pub fn instance(&self, n_modes: usize, lambda: f64) -> CliResult<WaveInstanceF64> {
        let p = &self.raw.problem;
        let mut w = WaveInstanceF64::new(n_modes, p.horizon, p.delay, p.step);
        w.grid_size = p.grid_size;
        w.k0 = p.k0;
        w.p = p.p;
        w.lambda = lambda;
        w.coefficient =
            Coefficient::Sinusoidal { amplitude: p.b_amplitude, frequency: p.b_frequency, phase: p.b_phase };
        w.control = match &self.kernel {
            KernelKind::ModeDiagonal(g) => KernelDescriptor::ModeDiagonal(g.clone()),
            KernelKind::Polynomial => KernelDescriptor::Polynomial,
        };
        w.impulses = self
            .impulses
            .iter()
            .map(|i| WaveImpulse { start: i.start, end: i.end, kernel: ImpulseKernel::Smooth { amplitude: i.amplitude } })
            .collect();
        w.nonlocal_weight = p.nonlocal_weight;
        w.nonlocal_end = p.nonlocal_end;
        w.nonlocal_nodes = self.nonlocal_nodes.clone();
        let mode_field = |key: &str, mode: usize, f: fn(usize, usize, f64) -> wavectl_core::Result<SpectralField<f64>>, a: f64| {
            if mode > n_modes {
                Err(bad(key, format!("mode {mode} exceeds n_modes = {n_modes}")))
            } else {
                Ok(f(n_modes, mode, a)?)
            }
        };
        let hist_shape = mode_field("problem.history_mode", p.history_mode, SpectralField::cosine, 1.0)?;
        let (ha, hs, ho) = (p.history_amplitude, p.history_slope, p.history_offset);
        let offset = SpectralField::constant(n_modes, ho);
        w.history = Arc::new(move |t| &hist_shape.scale(ha + hs * t) + &offset);
        w.velocity = mode_field("problem.velocity_mode", p.velocity_mode, SpectralField::sine, p.velocity_amplitude)?;
        w.target = &mode_field("problem.target_mode", p.target_mode, SpectralField::cosine, p.target_amplitude)?
            + &SpectralField::constant(n_modes, p.target_offset);
        w.tolerance = p.tolerance;
        w.max_iterations = p.max_iterations;
        w.substeps = p.substeps;
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_impulses_section() {
        let spec = parse_str("[problem]\nn_modes = 3\n[impulses]\n[control]\n[experiment]\n").unwrap();
        assert!(spec.impulses.is_empty());
        assert_eq!(spec.n_modes(), 3);
    }

    #[test]
    fn lambda_list_text_and_array() {
        let spec = parse_str("[experiment]\nlambda_list = \"1,1e-2,1e-4\"\n").unwrap();
        assert_eq!(spec.lambdas, vec![1.0, 1e-2, 1e-4]);
        let spec = parse_str("[experiment]\nlambda_list = [1, 1e-2]\n").unwrap();
        assert_eq!(spec.lambdas, vec![1.0, 1e-2]);
    }

    #[test]
    fn integers_accepted_for_reals() {
        let spec = parse_str("[problem]\nhorizon = 2\np = 4\n").unwrap();
        assert_eq!(spec.raw.problem.horizon, 2.0);
        assert_eq!(spec.raw.problem.p, 4.0);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_str("[problem]\nn_modes = 3\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_str("[problem]\n\nn_modes = = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn non_monotone_times_rejected() {
        let err = parse_str("[impulses]\nt_list = \"0.6,0.3\"\ns_list = \"0.7,0.4\"\n").unwrap_err().to_string();
        assert!(err.contains("impulses.t_list"), "{err}");
        assert!(parse_str("[impulses]\nt_list = \"0.4\"\ns_list = \"0.3\"\n").is_err());
    }

    #[test]
    fn increasing_lambdas_rejected_repeats_allowed() {
        assert!(parse_str("[experiment]\nlambda_list = \"1e-2,1e-1\"\n").is_err());
        assert!(parse_str("[experiment]\nlambda_list = \"1e-2,1e-2\"\n").is_ok());
    }

    #[test]
    fn echo_round_trips() {
        let spec = parse_str("[problem]\nn_modes = 3\nnonlocal_nodes = \"0.5:0.02\"\n[impulses]\nt_list = \"0.4\"\ns_list = \"0.5\"\n").unwrap();
        let again = parse_str(&spec.echo()).unwrap();
        assert_eq!(again.echo(), spec.echo());
        assert_eq!(again.impulses, spec.impulses);
        assert_eq!(again.nonlocal_nodes, vec![(0.5, 0.02)]);
    }

    #[test]
    fn bad_kernel_names_key() {
        let err = parse_str("[control]\nkernel = \"cubic\"\n").unwrap_err().to_string();
        assert!(err.contains("control.kernel"));
    }
}
