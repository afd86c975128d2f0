use super::dirichlet::DirichletParams;
use super::{EvalError, Model, ParamError, ProcessDefinition, ProcessSpec};
use crate::linalg::SquareMatrix;
use serde::{Deserialize, Serialize};

/// Process whose invariant law is Lochner's generalized Dirichlet distribution.
///
/// With `K = N - 1`, nested remainders `R_a = 1 - (Y_1 + ... + Y_a)` and
/// `U_a = 1 / (R_a R_{a+1} ... R_{K-1})`:
///
/// ```text
/// A_a  = U_a / 2 * { b_a [S_a R_K - (1 - S_a) Y_a] + Y_a R_K sum_{c=a}^{K-1} c_ac / R_c }
/// B_aa = kappa_a Y_a R_K U_a,   B_ab = 0 for a != b
/// ```
///
/// `c` is stored as `K` rows of `K - 1` entries (a trailing all-zero row may be
/// omitted). Entries below the diagonal must be zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDirichletParams {
    pub b: Vec<f64>,
    #[serde(alias = "S")]
    pub s: Vec<f64>,
    pub kappa: Vec<f64>,
    #[serde(default)]
    pub c: Vec<Vec<f64>>,
}

impl GenDirichletParams {
    pub fn new(b: Vec<f64>, s: Vec<f64>, kappa: Vec<f64>, c: Vec<Vec<f64>>) -> Self {
        Self { b, s, kappa, c }
    }

    /// Coupling `c_ab = kappa_b` for `a <= b`, under which the invariant law is
    /// the standard Dirichlet law of the process with the same `b`, `S`, `kappa`.
    pub fn dirichlet_reduction(b: Vec<f64>, s: Vec<f64>, kappa: Vec<f64>) -> Self {
        let k = b.len();
        let c = (0..k)
            .map(|a| (0..k.saturating_sub(1)).map(|bb| if a <= bb { kappa[bb] } else { 0.0 }).collect())
            .collect();
        Self { b, s, kappa, c }
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    /// `c_ab` with 0-based indices; missing rows read as zero.
    pub fn coupling(&self, a: usize, b: usize) -> f64 {
        self.c.get(a).and_then(|row| row.get(b)).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        DirichletParams::new(self.b.clone(), self.s.clone(), self.kappa.clone())
            .validate_bounds("the generalized Dirichlet process")?;
        let k = self.k();
        let cols = k - 1;
        if self.c.len() > k || (cols > 0 && self.c.len() < k - 1) {
            return Err(ParamError::invalid(
                "c",
                format!("expected {} or {k} rows, got {}", k - 1, self.c.len()),
            ));
        }
        for (a, row) in self.c.iter().enumerate() {
            if row.len() != cols {
                return Err(ParamError::invalid(
                    format!("c[{}]", a + 1),
                    format!("expected {cols} entries, got {}", row.len()),
                ));
            }
            for (b, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ParamError::invalid(format!("c[{}][{}]", a + 1, b + 1), "must be finite"));
                }
                if a > b && v != 0.0 {
                    return Err(ParamError::invalid(
                        format!("c[{}][{}]", a + 1, b + 1),
                        "entries below the diagonal must be zero",
                    ));
                }
            }
        }
        Ok(())
    }
}

struct GenDirichlet {
    p: GenDirichletParams,
}

impl GenDirichlet {
    /// Fills `rem[a] = R_{a+1}` (0-based) for `a = 0..K`.
    fn remainders(y: &[f64], rem: &mut [f64]) {
        let mut acc = 0.0;
        for (a, r) in rem.iter_mut().enumerate() {
            acc += y[a];
            *r = (1.0 - acc).max(0.0);
        }
    }

    /// `R_a R_{a+1} ... R_{K-1}` (0-based `a`, product over `rem[a..K-1]`).
    fn nesting_product(rem: &[f64], a: usize) -> Result<f64, EvalError> {
        let k = rem.len();
        let mut prod = 1.0;
        for (c, &r) in rem.iter().enumerate().take(k - 1).skip(a) {
            if r == 0.0 {
                return Err(EvalError::SingularNesting { index: c + 1 });
            }
            prod *= r;
        }
        Ok(prod)
    }

    fn with_remainders<T>(y: &[f64], f: impl FnOnce(&[f64]) -> T) -> T {
        let mut stack = [0.0; 8];
        if y.len() <= stack.len() {
            let rem = &mut stack[..y.len()];
            Self::remainders(y, rem);
            f(rem)
        } else {
            let mut rem = vec![0.0; y.len()];
            Self::remainders(y, &mut rem);
            f(&rem)
        }
    }
}

impl Model for GenDirichlet {
    fn drift(&self, y: &[f64], _t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        let p = &self.p;
        Self::with_remainders(y, |rem| {
            let k = rem.len();
            let last = rem[k - 1];
            for a in 0..k {
                let denom = Self::nesting_product(rem, a)?;
                let mut coupling = 0.0;
                for c in a..k - 1 {
                    // rem[c] > 0 here: nesting_product checked every c >= a.
                    coupling += p.coupling(a, c) * (last / rem[c]);
                }
                let core = p.b[a] * (p.s[a] * last - (1.0 - p.s[a]) * y[a]) + y[a] * coupling;
                out[a] = 0.5 * core / denom;
            }
            Ok(())
        })
    }

    fn diffusion(&self, y: &[f64], _t: f64, out: &mut SquareMatrix) -> Result<(), EvalError> {
        out.fill(0.0);
        Self::with_remainders(y, |rem| {
            let k = rem.len();
            let last = rem[k - 1];
            for a in 0..k {
                let denom = Self::nesting_product(rem, a)?;
                out[(a, a)] = self.p.kappa[a] * y[a] * last / denom;
            }
            Ok(())
        })
    }
}

pub fn gen_dirichlet_process(p: &GenDirichletParams) -> Result<ProcessDefinition, ParamError> {
    p.validate()?;
    Ok(ProcessDefinition::named(
        ProcessSpec::GenDirichlet(p.clone()),
        p.k() + 1,
        GenDirichlet { p: p.clone() },
    ))
}
