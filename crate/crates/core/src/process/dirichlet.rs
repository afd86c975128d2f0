use super::{check_positive, EvalError, Model, ParamError, ProcessDefinition, ProcessSpec};
use crate::linalg::SquareMatrix;
use serde::{Deserialize, Serialize};

/// Relative tolerance on the equality of `(1 - S_a) b_a / kappa_a` across components.
pub const DIRICHLET_RATIO_RTOL: f64 = 1e-10;

/// Diagonal-noise process with `A_a = b_a/2 [S_a Y_N - (1 - S_a) Y_a]` and
/// `B_aa = kappa_a Y_a Y_N`, for `a = 1..N-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletParams {
    pub b: Vec<f64>,
    #[serde(alias = "S")]
    pub s: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Require the parameter coupling under which the invariant law is Dirichlet.
    #[serde(default)]
    pub dirichlet_invariant: bool,
}

impl DirichletParams {
    pub fn new(b: Vec<f64>, s: Vec<f64>, kappa: Vec<f64>) -> Self {
        Self { b, s, kappa, dirichlet_invariant: false }
    }

    pub fn with_invariant(mut self) -> Self {
        self.dirichlet_invariant = true;
        self
    }

    /// Number of reduced components `K = N - 1`.
    pub fn k(&self) -> usize {
        self.b.len()
    }

    /// `(1 - S_a) b_a / kappa_a` per component.
    pub fn ratios(&self) -> Vec<f64> {
        (0..self.k()).map(|a| (1.0 - self.s[a]) * self.b[a] / self.kappa[a]).collect()
    }

    /// Whether all ratios agree to [`DIRICHLET_RATIO_RTOL`].
    pub fn has_dirichlet_invariant(&self) -> bool {
        let r = self.ratios();
        let first = r[0];
        r.iter().all(|&x| (x - first).abs() <= DIRICHLET_RATIO_RTOL * first.abs().max(x.abs()))
    }

    pub(crate) fn validate_bounds(&self, what: &str) -> Result<(), ParamError> {
        let k = self.b.len();
        if k == 0 {
            return Err(ParamError::invalid("b", format!("{what} needs at least one component")));
        }
        if self.s.len() != k || self.kappa.len() != k {
            return Err(ParamError::invalid(
                "S/kappa",
                format!("expected {k} entries to match b, got S: {}, kappa: {}", self.s.len(), self.kappa.len()),
            ));
        }
        for a in 0..k {
            check_positive(&format!("b[{}]", a + 1), self.b[a])?;
            check_positive(&format!("kappa[{}]", a + 1), self.kappa[a])?;
            let s = self.s[a];
            if !(s > 0.0 && s < 1.0) {
                return Err(ParamError::invalid(format!("S[{}]", a + 1), format!("must lie in (0, 1), got {s}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.validate_bounds("the Dirichlet process")?;
        if self.dirichlet_invariant && !self.has_dirichlet_invariant() {
            return Err(ParamError::DirichletConstraintViolated { ratios: self.ratios() });
        }
        Ok(())
    }

    /// Parameters `(omega_1..omega_N)` of the Dirichlet invariant law, when it exists:
    /// `omega_a = b_a S_a / kappa_a` and `omega_N` the common ratio above.
    pub fn invariant_weights(&self) -> Option<Vec<f64>> {
        if !self.has_dirichlet_invariant() {
            return None;
        }
        let mut w: Vec<f64> = (0..self.k()).map(|a| self.b[a] * self.s[a] / self.kappa[a]).collect();
        let r = self.ratios();
        w.push(r.iter().sum::<f64>() / r.len() as f64);
        Some(w)
    }
}

struct Dirichlet(DirichletParams);

impl Model for Dirichlet {
    fn drift(&self, y: &[f64], _t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        let p = &self.0;
        let last = (1.0 - y.iter().sum::<f64>()).max(0.0);
        for (a, o) in out.iter_mut().enumerate() {
            *o = 0.5 * p.b[a] * (p.s[a] * last - (1.0 - p.s[a]) * y[a]);
        }
        Ok(())
    }

    fn diffusion(&self, y: &[f64], _t: f64, out: &mut SquareMatrix) -> Result<(), EvalError> {
        let last = (1.0 - y.iter().sum::<f64>()).max(0.0);
        out.fill(0.0);
        for (a, &ya) in y.iter().enumerate() {
            out[(a, a)] = self.0.kappa[a] * ya * last;
        }
        Ok(())
    }
}

pub fn dirichlet_process(p: &DirichletParams) -> Result<ProcessDefinition, ParamError> {
    p.validate()?;
    Ok(ProcessDefinition::named(ProcessSpec::Dirichlet(p.clone()), p.k() + 1, Dirichlet(p.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ReducedState;

    fn symmetric() -> DirichletParams {
        DirichletParams::new(vec![2.0, 2.0], vec![0.5, 0.5], vec![1.0, 1.0])
    }

    #[test]
    fn interior_substitution() {
        let p = dirichlet_process(&symmetric()).unwrap();
        let y = ReducedState::new(vec![0.25, 0.25]).unwrap();
        assert_eq!(p.drift(&y, 0.0).unwrap(), vec![0.125, 0.125]);
        assert_eq!(p.diffusion(&y, 0.0).unwrap(), SquareMatrix::from_diagonal(&[0.125, 0.125]));
    }

    #[test]
    fn boundary_substitution() {
        let p = dirichlet_process(&symmetric()).unwrap();
        let y = ReducedState::new(vec![0.0, 0.5]).unwrap();
        let a = p.drift(&y, 0.0).unwrap();
        assert_eq!(a[0], 0.5 * 2.0 * 0.5 * 0.5);
        assert_eq!(p.diffusion(&y, 0.0).unwrap()[(0, 0)], 0.0);

        let y = ReducedState::new(vec![0.5, 0.5]).unwrap();
        let a = p.drift(&y, 0.0).unwrap();
        assert!(a.iter().all(|&v| v <= 0.0));
        assert_eq!(a[0], -0.5 * 2.0 * 0.5 * 0.5);
        assert_eq!(p.diffusion(&y, 0.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn invariant_mode_enforces_ratio_coupling() {
        let ok = DirichletParams::new(vec![2.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.5]).with_invariant();
        assert!(dirichlet_process(&ok).is_ok());
        assert_eq!(ok.invariant_weights().unwrap(), vec![1.0, 1.0, 1.0]);

        let bad = DirichletParams::new(vec![2.0, 1.0], vec![0.5, 0.5], vec![1.0, 1.0]);
        assert!(dirichlet_process(&bad).is_ok(), "realizable without the invariant flag");
        assert!(matches!(
            dirichlet_process(&bad.clone().with_invariant()),
            Err(ParamError::DirichletConstraintViolated { .. })
        ));
        assert!(bad.invariant_weights().is_none());
    }

    #[test]
    fn rejects_out_of_range() {
        let mut p = symmetric();
        p.s[1] = 1.0;
        assert!(dirichlet_process(&p).is_err());
        let mut p = symmetric();
        p.kappa.pop();
        assert!(dirichlet_process(&p).is_err());
    }
}
