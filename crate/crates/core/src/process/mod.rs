//! Drift and diffusion definitions for processes on the reduced simplex.
//!
//! A process evolves the reduced coordinates `Y_1..Y_{N-1}` by
//! `dY_a = A_a(Y, t) dt + sum_b b_ab(Y, t) dW_b` with `b b^T = B`. This module
//! only describes `A` and `B`; integration lives in [`crate::integrator`].

mod beta;
mod broken;
mod dirichlet;
mod gen_dirichlet;
mod wright_fisher;

pub use beta::BetaParams;
pub use broken::BrokenStyle;
pub use dirichlet::DirichletParams;
pub use gen_dirichlet::GenDirichletParams;
pub use wright_fisher::WrightFisherParams;

use crate::linalg::SquareMatrix;
use crate::state::ReducedState;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Errors raised while validating process parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
    #[error(
        "Dirichlet invariant requested but (1-S_a) b_a / kappa_a differ: {ratios:?}"
    )]
    DirichletConstraintViolated { ratios: Vec<f64> },
}

impl ParamError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ParamError::InvalidParameter { field: field.into(), reason: reason.into() }
    }
}

/// Errors raised while evaluating drift or diffusion at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("nested remainder 1 - (Y_1 + ... + Y_{index}) vanishes in a denominator")]
    SingularNesting { index: usize },
    #[error("expected {expected} reduced coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Custom(String),
}

/// Drift vector and diffusion matrix over the reduced state.
///
/// `y` always has `N - 1` entries. Implementations write into the provided
/// buffers so that the integrator can evaluate without allocating.
pub trait Model: Send + Sync {
    fn drift(&self, y: &[f64], t: f64, out: &mut [f64]) -> Result<(), EvalError>;
    fn diffusion(&self, y: &[f64], t: f64, out: &mut SquareMatrix) -> Result<(), EvalError>;
}

pub(crate) fn check_positive(field: &str, v: f64) -> Result<(), ParamError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ParamError::invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

/// Parameters of a named process. Doubles as the `[process]` table of run
/// configurations, selected by its `name` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Beta(BetaParams),
    WrightFisher(WrightFisherParams),
    Dirichlet(DirichletParams),
    GenDirichlet(GenDirichletParams),
    Broken { style: BrokenStyle, dim: usize },
}

impl ProcessSpec {
    pub fn build(&self) -> Result<ProcessDefinition, ParamError> {
        match self {
            ProcessSpec::Beta(p) => beta_process(p),
            ProcessSpec::WrightFisher(p) => wright_fisher_process(p),
            ProcessSpec::Dirichlet(p) => dirichlet_process(p),
            ProcessSpec::GenDirichlet(p) => gen_dirichlet_process(p),
            ProcessSpec::Broken { style, dim } => {
                if *dim < 2 {
                    return Err(ParamError::invalid("dim", "must be at least 2"));
                }
                Ok(broken_process(*style, *dim))
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ProcessSpec::Beta(_) => "beta",
            ProcessSpec::WrightFisher(_) => "wright_fisher",
            ProcessSpec::Dirichlet(_) => "dirichlet",
            ProcessSpec::GenDirichlet(_) => "gen_dirichlet",
            ProcessSpec::Broken { .. } => "broken",
        }
    }
}

/// A process on the `N`-simplex: dimension, drift, diffusion and parameter metadata.
///
/// Cheap to clone; the model is shared.
#[derive(Clone)]
pub struct ProcessDefinition {
    name: String,
    dim: usize,
    spec: Option<ProcessSpec>,
    model: Arc<dyn Model>,
}

impl fmt::Debug for ProcessDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessDefinition")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("spec", &self.spec)
            .finish()
    }
}

impl ProcessDefinition {
    pub(crate) fn named(spec: ProcessSpec, dim: usize, model: impl Model + 'static) -> Self {
        Self { name: spec.kind_name().to_string(), dim, spec: Some(spec), model: Arc::new(model) }
    }

    /// A user-supplied process of full dimension `dim` (`N`).
    pub fn from_model(name: impl Into<String>, dim: usize, model: impl Model + 'static) -> Self {
        assert!(dim >= 2, "a simplex process needs N >= 2");
        Self { name: name.into(), dim, spec: None, model: Arc::new(model) }
    }

    /// A user-supplied process from two closures.
    pub fn from_fns<D, B>(name: impl Into<String>, dim: usize, drift: D, diffusion: B) -> Self
    where
        D: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
        B: Fn(&[f64], f64, &mut SquareMatrix) + Send + Sync + 'static,
    {
        Self::from_model(name, dim, FnModel { drift, diffusion })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Full dimension `N`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of reduced coordinates, `N - 1`.
    pub fn reduced_dim(&self) -> usize {
        self.dim - 1
    }

    /// Parameters of a named process, `None` for user-supplied ones.
    pub fn spec(&self) -> Option<&ProcessSpec> {
        self.spec.as_ref()
    }

    pub fn parameters(&self) -> serde_json::Value {
        match &self.spec {
            Some(spec) => serde_json::to_value(spec).unwrap_or(serde_json::Value::Null),
            None => serde_json::json!({ "name": self.name }),
        }
    }

    fn check_len(&self, y: &[f64]) -> Result<(), EvalError> {
        if y.len() != self.dim - 1 {
            return Err(EvalError::DimensionMismatch { expected: self.dim - 1, got: y.len() });
        }
        Ok(())
    }

    pub fn drift_into(&self, y: &[f64], t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        self.check_len(y)?;
        self.model.drift(y, t, out)
    }

    pub fn diffusion_into(&self, y: &[f64], t: f64, out: &mut SquareMatrix) -> Result<(), EvalError> {
        self.check_len(y)?;
        self.model.diffusion(y, t, out)
    }

    pub fn drift(&self, y: &ReducedState, t: f64) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.dim - 1];
        self.drift_into(y.as_slice(), t, &mut out)?;
        Ok(out)
    }

    pub fn diffusion(&self, y: &ReducedState, t: f64) -> Result<SquareMatrix, EvalError> {
        let mut out = SquareMatrix::zeros(self.dim - 1);
        self.diffusion_into(y.as_slice(), t, &mut out)?;
        Ok(out)
    }
}

struct FnModel<D, B> {
    drift: D,
    diffusion: B,
}

impl<D, B> Model for FnModel<D, B>
where
    D: Fn(&[f64], f64, &mut [f64]) + Send + Sync,
    B: Fn(&[f64], f64, &mut SquareMatrix) + Send + Sync,
{
    fn drift(&self, y: &[f64], t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        (self.drift)(y, t, out);
        Ok(())
    }

    fn diffusion(&self, y: &[f64], t: f64, out: &mut SquareMatrix) -> Result<(), EvalError> {
        (self.diffusion)(y, t, out);
        Ok(())
    }
}

pub use beta::beta_process;
pub use broken::broken_process;
pub use dirichlet::dirichlet_process;
pub use gen_dirichlet::gen_dirichlet_process;
pub use wright_fisher::wright_fisher_process;
