//! Run configuration, read from a TOML file.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [process]
//! name = "beta"
//! b = 2.0
//! S = 0.5
//! kappa = 1.0
//!
//! [integrator]
//! dt = 1e-3
//! t_end = 10.0
//! record_every = 500
//!
//! [ensemble]
//! size = 10000
//! init = { kind = "delta", state = [0.9, 0.1] }
//! ```

use serde::{Deserialize, Serialize};
use simplex_sde::integrator::BoundaryPolicy;
use simplex_sde::process::{ProcessDefinition, ProcessSpec};
use simplex_sde::realizability::ToleranceSet;
use simplex_sde::state::{make_state, Ensemble};
use simplex_sde::{IntegratorConfig, RandomSource};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Noise streams derived from the run seed.
pub const SIMULATION_STREAM: u64 = 0;
pub const INIT_STREAM: u64 = 1;
pub const AUDIT_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outdir: Option<PathBuf>,
    pub process: ProcessSpec,
    pub integrator: IntegratorSection,
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between recorded snapshots.
    pub record_every: usize,
    #[serde(default)]
    pub boundary_policy: BoundaryPolicy,
    #[serde(default = "default_max_resample")]
    pub max_resample: u32,
}

fn default_max_resample() -> u32 {
    IntegratorConfig::new(1.0).max_resample
}

impl IntegratorSection {
    pub fn to_config(&self) -> IntegratorConfig {
        let mut c = IntegratorConfig::new(self.dt).with_policy(self.boundary_policy);
        c.max_resample = self.max_resample;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Every particle starts at `state`.
    Delta { state: Vec<f64> },
    /// Independent uniform draws on the simplex.
    Uniform,
    /// One particle per listed state.
    List { states: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    /// Number of particles; implied by `states` for list initial conditions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    pub init: InitialCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub samples_per_face: usize,
    pub diffusion_zero_tol: f64,
    pub drift_sign_tol: f64,
    pub moment_stat_tol: f64,
}

impl Default for AuditSection {
    fn default() -> Self {
        let t = ToleranceSet::default();
        Self {
            samples_per_face: 1000,
            diffusion_zero_tol: t.diffusion_zero_tol,
            drift_sign_tol: t.drift_sign_tol,
            moment_stat_tol: t.moment_stat_tol,
        }
    }
}

impl AuditSection {
    pub fn tolerances(&self) -> ToleranceSet {
        ToleranceSet {
            diffusion_zero_tol: self.diffusion_zero_tol,
            drift_sign_tol: self.drift_sign_tol,
            moment_stat_tol: self.moment_stat_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub formats: Vec<OutputFormat>,
    /// Write `ensemble_<t>.csv` every this many snapshots (0 = never).
    pub dump_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { formats: vec![OutputFormat::Csv], dump_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub tol_multiplier: f64,
    /// `[t0, t1]` for stationary averages; defaults to the second half of the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary_window: Option<[f64; 2]>,
    /// Process whose simulated stationary moments serve as the reference,
    /// instead of the analytic invariant law.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ProcessSpec>,
    /// Whether to cross-validate moment rates.
    pub rates: bool,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { tol_multiplier: 3.0, stationary_window: None, reference: None, rates: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// `dt` or a process parameter, optionally indexed (`S[2]`, 1-based).
    pub parameter: String,
    pub values: Vec<f64>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let proc = self.build_process()?;
        self.integrator.to_config().validate().map_err(|e| invalid(e.to_string()))?;
        let i = &self.integrator;
        if !(i.t_end.is_finite() && i.t_end > 0.0) {
            return Err(invalid(format!("integrator.t_end must be > 0, got {}", i.t_end)));
        }
        if i.record_every == 0 {
            return Err(invalid("integrator.record_every must be >= 1"));
        }
        self.ensemble_size(proc.dim())?;
        if self.audit.samples_per_face == 0 {
            return Err(invalid("audit.samples_per_face must be >= 1"));
        }
        self.audit.tolerances().validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.compare.tol_multiplier.is_finite() && self.compare.tol_multiplier > 0.0) {
            return Err(invalid("compare.tol_multiplier must be > 0"));
        }
        if let Some([t0, t1]) = self.compare.stationary_window {
            if !(t0 >= 0.0 && t1 >= t0) {
                return Err(invalid(format!("compare.stationary_window [{t0}, {t1}] is not an interval")));
            }
        }
        if let Some(r) = &self.compare.reference {
            let rp = r.build().map_err(|e| invalid(format!("compare.reference: {e}")))?;
            if rp.dim() != proc.dim() {
                return Err(invalid("compare.reference must have the same dimension as process"));
            }
        }
        if self.output.formats.is_empty() {
            return Err(invalid("output.formats must not be empty"));
        }
        Ok(())
    }

    pub fn build_process(&self) -> Result<ProcessDefinition, ConfigError> {
        self.process.build().map_err(|e| invalid(format!("process: {e}")))
    }

    fn ensemble_size(&self, n: usize) -> Result<usize, ConfigError> {
        let e = &self.ensemble;
        let size = match &e.init {
            InitialCondition::List { states } => {
                if let Some(s) = e.size {
                    if s != states.len() {
                        return Err(invalid(format!("ensemble.size = {s} but {} states are listed", states.len())));
                    }
                }
                for st in states {
                    check_state(st, n)?;
                }
                states.len()
            }
            InitialCondition::Delta { state } => {
                check_state(state, n)?;
                e.size.ok_or_else(|| invalid("ensemble.size is required"))?
            }
            InitialCondition::Uniform => e.size.ok_or_else(|| invalid("ensemble.size is required"))?,
        };
        if size < 2 {
            return Err(invalid(format!("ensemble.size must be >= 2 to form statistics, got {size}")));
        }
        Ok(size)
    }

    pub fn initial_ensemble(&self) -> Result<Ensemble, ConfigError> {
        let n = self.process.build().map_err(|e| invalid(e.to_string()))?.dim();
        let size = self.ensemble_size(n)?;
        Ok(match &self.ensemble.init {
            InitialCondition::Delta { state } => Ensemble::delta(&make_state(state.clone()).expect("checked"), size),
            InitialCondition::Uniform => {
                let mut rng = RandomSource::new(self.seed).with_stream(INIT_STREAM).rng();
                Ensemble::uniform(n, size, &mut rng)
            }
            InitialCondition::List { states } => {
                let states: Vec<_> = states.iter().map(|s| make_state(s.clone()).expect("checked")).collect();
                Ensemble::from_states(&states).expect("checked")
            }
        })
    }

    pub fn window(&self) -> (f64, f64) {
        match self.compare.stationary_window {
            Some([t0, t1]) => (t0, t1),
            None => (self.integrator.t_end / 2.0, self.integrator.t_end),
        }
    }

    /// Copy with the sweep parameter set to `value`.
    pub fn with_parameter(&self, parameter: &str, value: f64) -> Result<RunConfig, ConfigError> {
        let mut out = self.clone();
        out.sweep = None;
        if parameter == "dt" {
            out.integrator.dt = value;
        } else {
            let (key, index) = parse_parameter(parameter)?;
            let mut spec = serde_json::to_value(&self.process).map_err(|e| invalid(e.to_string()))?;
            let obj = spec.as_object_mut().ok_or_else(|| invalid("process is not a table"))?;
            // Accept the capitalized alias used for S.
            let key = if key == "S" && !obj.contains_key("S") { "s".to_string() } else { key };
            let slot = obj.get_mut(&key).ok_or_else(|| invalid(format!("process has no parameter {key}")))?;
            match (slot, index) {
                (serde_json::Value::Array(items), Some(i)) => {
                    let item = items
                        .get_mut(i - 1)
                        .ok_or_else(|| invalid(format!("{parameter}: index out of range")))?;
                    *item = value.into();
                }
                (slot @ serde_json::Value::Number(_), None) => *slot = value.into(),
                _ => return Err(invalid(format!("sweep parameter {parameter} does not match the process parameter shape"))),
            }
            out.process = serde_json::from_value(spec).map_err(|e| invalid(e.to_string()))?;
        }
        out.validate()?;
        Ok(out)
    }
}

fn parse_parameter(p: &str) -> Result<(String, Option<usize>), ConfigError> {
    match p.split_once('[') {
        None => Ok((p.to_string(), None)),
        Some((key, rest)) => {
            let idx: usize = rest
                .strip_suffix(']')
                .and_then(|s| s.parse().ok())
                .filter(|&i| i >= 1)
                .ok_or_else(|| invalid(format!("cannot parse sweep parameter {p}")))?;
            Ok((key.to_string(), Some(idx)))
        }
    }
}

fn check_state(state: &[f64], n: usize) -> Result<(), ConfigError> {
    if state.len() != n {
        return Err(invalid(format!("initial state {state:?} has {} components, process has N = {n}", state.len())));
    }
    make_state(state.to_vec()).map(|_| ()).map_err(|e| invalid(format!("initial state {state:?}: {e}")))
}
