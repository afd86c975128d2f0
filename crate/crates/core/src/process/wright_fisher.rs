use super::{check_positive, EvalError, Model, ParamError, ProcessDefinition, ProcessSpec};
use crate::linalg::SquareMatrix;
use serde::{Deserialize, Serialize};

/// Multivariate Wright-Fisher process with mutation weights `omega_1..omega_N`.
///
/// Drift `A_a = (omega_a - omega Y_a) / 2` and diffusion
/// `B_ab = Y_a (delta_ab - Y_b)`, where `omega = sum omega_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrightFisherParams {
    pub omega: Vec<f64>,
}

impl WrightFisherParams {
    pub fn new(omega: Vec<f64>) -> Self {
        Self { omega }
    }

    pub fn omega_total(&self) -> f64 {
        self.omega.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.omega.len() < 2 {
            return Err(ParamError::invalid("omega", "needs at least 2 entries (N >= 2)"));
        }
        for (i, &w) in self.omega.iter().enumerate() {
            check_positive(&format!("omega[{}]", i + 1), w)?;
        }
        Ok(())
    }
}

struct WrightFisher {
    omega: Vec<f64>,
    total: f64,
}

impl Model for WrightFisher {
    fn drift(&self, y: &[f64], _t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        for (a, o) in out.iter_mut().enumerate() {
            *o = 0.5 * (self.omega[a] - self.total * y[a]);
        }
        Ok(())
    }

    fn diffusion(&self, y: &[f64], _t: f64, out: &mut SquareMatrix) -> Result<(), EvalError> {
        let k = y.len();
        for a in 0..k {
            for b in 0..k {
                let delta = if a == b { 1.0 } else { 0.0 };
                out[(a, b)] = y[a] * (delta - y[b]);
            }
        }
        // y_a * y_b and y_b * y_a round identically, so the result is exactly symmetric.
        Ok(())
    }
}

pub fn wright_fisher_process(p: &WrightFisherParams) -> Result<ProcessDefinition, ParamError> {
    p.validate()?;
    let model = WrightFisher { omega: p.omega.clone(), total: p.omega_total() };
    Ok(ProcessDefinition::named(ProcessSpec::WrightFisher(p.clone()), p.omega.len(), model))
}
