use super::{check_positive, EvalError, Model, ParamError, ProcessDefinition, ProcessSpec};
use crate::linalg::SquareMatrix;
use serde::{Deserialize, Serialize};

/// Binary (`N = 2`) process with linear drift and quadratic diffusion:
/// `dY = b/2 (S - Y) dt + sqrt(kappa Y (1 - Y)) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaParams {
    pub b: f64,
    #[serde(alias = "S")]
    pub s: f64,
    pub kappa: f64,
}

impl BetaParams {
    pub fn new(b: f64, s: f64, kappa: f64) -> Self {
        Self { b, s, kappa }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        check_positive("b", self.b)?;
        check_positive("kappa", self.kappa)?;
        if !(0.0..=1.0).contains(&self.s) {
            return Err(ParamError::invalid("S", format!("must lie in [0, 1], got {}", self.s)));
        }
        Ok(())
    }

    /// `S = 0` or `S = 1` puts an absorbing barrier at the matching endpoint.
    pub fn absorbing_allowed(&self) -> bool {
        self.s == 0.0 || self.s == 1.0
    }
}

struct Beta(BetaParams);

impl Model for Beta {
    fn drift(&self, y: &[f64], _t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        out[0] = 0.5 * self.0.b * (self.0.s - y[0]);
        Ok(())
    }

    fn diffusion(&self, y: &[f64], _t: f64, out: &mut SquareMatrix) -> Result<(), EvalError> {
        out[(0, 0)] = self.0.kappa * y[0] * (1.0 - y[0]);
        Ok(())
    }
}

pub fn beta_process(p: &BetaParams) -> Result<ProcessDefinition, ParamError> {
    p.validate()?;
    Ok(ProcessDefinition::named(ProcessSpec::Beta(*p), 2, Beta(*p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ReducedState;

    fn eval(p: &ProcessDefinition, y: f64) -> (f64, f64) {
        let r = ReducedState::new(vec![y]).unwrap();
        (p.drift(&r, 0.0).unwrap()[0], p.diffusion(&r, 0.0).unwrap()[(0, 0)])
    }

    #[test]
    fn endpoint_and_midpoint_values() {
        let p = beta_process(&BetaParams::new(2.0, 0.5, 1.0)).unwrap();
        assert_eq!(eval(&p, 0.0), (0.5, 0.0));
        assert_eq!(eval(&p, 1.0), (-0.5, 0.0));
        assert_eq!(eval(&p, 0.5), (0.0, 0.25));
    }

    #[test]
    fn drift_is_affine_and_diffusion_peaks_at_half() {
        let p = beta_process(&BetaParams::new(3.0, 0.3, 0.8)).unwrap();
        let ys: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        for w in ys.windows(3) {
            let (a0, _) = eval(&p, w[0]);
            let (a1, _) = eval(&p, w[1]);
            let (a2, _) = eval(&p, w[2]);
            assert!((a0 - 2.0 * a1 + a2).abs() < 1e-14);
        }
        for &y in &ys[1..ys.len() - 1] {
            let (_, d) = eval(&p, y);
            assert!(d > 0.0 && d <= 0.8 / 4.0 + 1e-15);
        }
        assert_eq!(eval(&p, 0.5).1, 0.2);
    }

    #[test]
    fn rejects_bad_parameters() {
        for (bad, field) in [
            (BetaParams::new(0.0, 0.5, 1.0), "b"),
            (BetaParams::new(1.0, 1.5, 1.0), "S"),
            (BetaParams::new(1.0, 0.5, -1.0), "kappa"),
            (BetaParams::new(f64::NAN, 0.5, 1.0), "b"),
        ] {
            match beta_process(&bad) {
                Err(ParamError::InvalidParameter { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected InvalidParameter for {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn absorbing_flag() {
        assert!(BetaParams::new(1.0, 0.0, 1.0).absorbing_allowed());
        assert!(BetaParams::new(1.0, 1.0, 1.0).absorbing_allowed());
        assert!(!BetaParams::new(1.0, 0.4, 1.0).absorbing_allowed());
        assert!(beta_process(&BetaParams::new(1.0, 1.0, 1.0)).is_ok());
    }
}
