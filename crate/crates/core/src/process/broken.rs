use super::{EvalError, Model, ProcessDefinition, ProcessSpec};
use crate::linalg::SquareMatrix;
use serde::{Deserialize, Serialize};

/// Deliberately non-realizable processes, used as negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrokenStyle {
    /// Zero drift, `B = 0.1 I` everywhere, including on the faces.
    ConstantDiffusion,
    /// `A_a = -1` everywhere and no diffusion.
    OutwardDrift,
}

struct Broken(BrokenStyle);

impl Model for Broken {
    fn drift(&self, _y: &[f64], _t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        let v = match self.0 {
            BrokenStyle::ConstantDiffusion => 0.0,
            BrokenStyle::OutwardDrift => -1.0,
        };
        out.fill(v);
        Ok(())
    }

    fn diffusion(&self, _y: &[f64], _t: f64, out: &mut SquareMatrix) -> Result<(), EvalError> {
        out.fill(0.0);
        if self.0 == BrokenStyle::ConstantDiffusion {
            for a in 0..out.dim() {
                out[(a, a)] = 0.1;
            }
        }
        Ok(())
    }
}

/// Panics if `dim < 2`.
pub fn broken_process(style: BrokenStyle, dim: usize) -> ProcessDefinition {
    assert!(dim >= 2, "a simplex process needs N >= 2");
    ProcessDefinition::named(ProcessSpec::Broken { style, dim }, dim, Broken(style))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ReducedState;

    #[test]
    fn by_construction() {
        let y = ReducedState::new(vec![0.0, 0.5]).unwrap();
        let cd = broken_process(BrokenStyle::ConstantDiffusion, 3);
        assert_eq!(cd.diffusion(&y, 0.0).unwrap()[(0, 0)], 0.1);
        assert_eq!(cd.drift(&y, 0.0).unwrap(), vec![0.0, 0.0]);
        let od = broken_process(BrokenStyle::OutwardDrift, 3);
        assert_eq!(od.drift(&y, 0.0).unwrap()[0], -1.0);
        assert_eq!(od.diffusion(&y, 0.0).unwrap().max_abs(), 0.0);
    }
}
