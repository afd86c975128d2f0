//! Numerical audits of the boundary conditions that keep a process on the
//! simplex, and of the bounds every moment set drawn from simplex states obeys.
//!
//! On a zero face `Y_a = 0` a realizable process needs `A_a >= 0` (no drift
//! out of the simplex) and `B_ab = 0` for every `b` (no noise across the
//! face). On the unit-sum face the same two conditions apply along the face
//! normal `(1, ..., 1)`: `sum_a A_a <= 0` and `B (1, ..., 1) = 0`.

use crate::integrator::RandomSource;
use crate::linalg::SquareMatrix;
use crate::process::{EvalError, ProcessDefinition};
use crate::state::{sample_face, BoundaryFace, ReducedState};
use crate::statistics::MomentSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Slack for identities that hold sample by sample.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSet {
    pub diffusion_zero_tol: f64,
    pub drift_sign_tol: f64,
    /// Multiplier on standard errors for statistical checks.
    pub moment_stat_tol: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self { diffusion_zero_tol: 1e-10, drift_sign_tol: 1e-10, moment_stat_tol: 3.0 }
    }
}

impl ToleranceSet {
    pub fn validate(&self) -> Result<(), AuditError> {
        for (name, v) in [
            ("diffusion_zero_tol", self.diffusion_zero_tol),
            ("drift_sign_tol", self.drift_sign_tol),
            ("moment_stat_tol", self.moment_stat_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(AuditError::InvalidTolerance(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Where the worst violation of a check was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Location {
    /// Full `N`-component state.
    State(Vec<f64>),
    /// Component indices (0-based).
    Index(Vec<usize>),
    Time(f64),
    None,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::State(s) => {
                let parts: Vec<String> = s.iter().map(|v| format!("{v:.4}")).collect();
                write!(f, "({})", parts.join(", "))
            }
            Location::Index(ix) => {
                let parts: Vec<String> = ix.iter().map(|i| i.to_string()).collect();
                write!(f, "[{}]", parts.join(","))
            }
            Location::Time(t) => write!(f, "t={t}"),
            Location::None => write!(f, "-"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub constraint: String,
    pub subject: String,
    /// Worst violation found; zero when the constraint holds everywhere.
    pub magnitude: f64,
    pub tolerance: f64,
    pub location: Location,
    pub pass: bool,
}

impl Check {
    pub fn new(
        constraint: impl Into<String>,
        subject: impl Into<String>,
        magnitude: f64,
        tolerance: f64,
        location: Location,
    ) -> Self {
        let magnitude = if magnitude.is_nan() { f64::INFINITY } else { magnitude.max(0.0) };
        Self {
            constraint: constraint.into(),
            subject: subject.into(),
            magnitude,
            tolerance,
            location,
            pass: magnitude <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<Check>,
    pub overall_pass: bool,
}

impl AuditReport {
    pub fn new(checks: Vec<Check>) -> Self {
        let overall_pass = checks.iter().all(|c| c.pass);
        Self { checks, overall_pass }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
        self.overall_pass = self.checks.iter().all(|c| c.pass);
    }

    pub fn extend(&mut self, other: AuditReport) {
        self.checks.extend(other.checks);
        self.overall_pass = self.checks.iter().all(|c| c.pass);
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Fixed-width text table, one line per check.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<28} {:<16} {:>12} {:>10}  {:<4}  {}\n",
            "constraint", "subject", "violation", "tolerance", "ok", "worst at"
        );
        for c in &self.checks {
            out.push_str(&format!(
                "{:<28} {:<16} {:>12.3e} {:>10.1e}  {:<4}  {}\n",
                c.constraint,
                c.subject,
                c.magnitude,
                c.tolerance,
                if c.pass { "PASS" } else { "FAIL" },
                c.location
            ));
        }
        out.push_str(&format!("overall: {}\n", if self.overall_pass { "PASS" } else { "FAIL" }));
        out
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("samples_per_face must be at least 1")]
    NoSamples,
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
    #[error("evaluation failed on face {face} at {state:?}: {source}")]
    EvaluationFailure { face: String, state: Vec<f64>, source: EvalError },
}

/// Tracks the largest value seen and where (first maximum wins).
struct Worst {
    value: f64,
    at: Option<Vec<f64>>,
}

impl Worst {
    fn new() -> Self {
        Self { value: 0.0, at: None }
    }

    fn see(&mut self, v: f64, y: &ReducedState) {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if self.at.is_none() || v > self.value {
            self.value = v;
            self.at = Some(full_state(y));
        }
    }

    fn location(self) -> Location {
        self.at.map_or(Location::None, Location::State)
    }
}

fn full_state(y: &ReducedState) -> Vec<f64> {
    let mut v = y.as_slice().to_vec();
    v.push(y.last());
    v
}

fn audit_face(
    proc: &ProcessDefinition,
    face: BoundaryFace,
    samples: usize,
    src: RandomSource,
    tol: &ToleranceSet,
) -> Result<Vec<Check>, AuditError> {
    let n = proc.dim();
    let k = n - 1;
    let mut rng = src.rng();
    let mut drift = vec![0.0; k];
    let mut diff = SquareMatrix::zeros(k);
    let label = face.label();

    let mut drift_worst = Worst::new();
    let mut diff_worst = Worst::new();
    let mut normal_worst = Worst::new();
    for _ in 0..samples {
        let y = sample_face(face, n, &mut rng);
        let fail = |source| AuditError::EvaluationFailure { face: label.clone(), state: full_state(&y), source };
        proc.drift_into(y.as_slice(), 0.0, &mut drift).map_err(fail)?;
        proc.diffusion_into(y.as_slice(), 0.0, &mut diff).map_err(fail)?;
        match face {
            BoundaryFace::Zero(a) => {
                let a = a - 1;
                drift_worst.see((-drift[a]).max(0.0), &y);
                let row = diff.row(a).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                diff_worst.see(row, &y);
            }
            BoundaryFace::UnitSum => {
                drift_worst.see(drift.iter().sum::<f64>().max(0.0), &y);
                let rows = diff.row_sums();
                diff_worst.see(rows.iter().fold(0.0_f64, |m, v| m.max(v.abs())), &y);
                normal_worst.see(rows.iter().sum::<f64>().abs(), &y);
            }
        }
    }

    let mut checks = Vec::new();
    match face {
        BoundaryFace::Zero(_) => {
            checks.push(Check::new(
                "boundary.drift_inward",
                &label,
                drift_worst.value,
                tol.drift_sign_tol,
                drift_worst.location(),
            ));
            checks.push(Check::new(
                "boundary.diffusion_zero",
                &label,
                diff_worst.value,
                tol.diffusion_zero_tol,
                diff_worst.location(),
            ));
        }
        BoundaryFace::UnitSum => {
            checks.push(Check::new(
                "boundary.drift_inward",
                &label,
                drift_worst.value,
                tol.drift_sign_tol,
                drift_worst.location(),
            ));
            checks.push(Check::new(
                "boundary.diffusion_rows",
                &label,
                diff_worst.value,
                tol.diffusion_zero_tol,
                diff_worst.location(),
            ));
            checks.push(Check::new(
                "boundary.diffusion_normal",
                &label,
                normal_worst.value,
                tol.diffusion_zero_tol,
                normal_worst.location(),
            ));
        }
    }
    Ok(checks)
}

/// Samples `samples_per_face` points on every boundary face and checks the
/// drift and diffusion conditions there.
///
/// Face `i` (in [`BoundaryFace::all`] order) draws its points from stream
/// `i` of `rng`'s seed, so the report does not depend on scheduling.
pub fn audit_boundary(
    proc: &ProcessDefinition,
    samples_per_face: usize,
    rng: RandomSource,
    tol: &ToleranceSet,
) -> Result<AuditReport, AuditError> {
    if samples_per_face == 0 {
        return Err(AuditError::NoSamples);
    }
    tol.validate()?;
    let faces = BoundaryFace::all(proc.dim());
    let per_face: Vec<Result<Vec<Check>, AuditError>> = faces
        .par_iter()
        .enumerate()
        .map(|(i, &face)| {
            let src = rng.with_stream(rng.stream.wrapping_mul(1 << 20).wrapping_add(i as u64));
            audit_face(proc, face, samples_per_face, src, tol)
        })
        .collect();
    let mut checks = Vec::new();
    for r in per_face {
        checks.extend(r?);
    }
    Ok(AuditReport::new(checks))
}

/// Distance of `v` outside `[lo, hi]`.
fn outside(v: f64, lo: f64, hi: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        (lo - v).max(v - hi).max(0.0)
    }
}

fn worst_of(values: impl Iterator<Item = (Vec<usize>, f64)>) -> (f64, Location) {
    let mut best = (0.0, Location::None);
    let mut first = true;
    for (ix, v) in values {
        if first || v > best.0 {
            best = (v, Location::Index(ix));
            first = false;
        }
    }
    best
}

/// Checks the bounds satisfied by the moments of any distribution on the simplex:
/// means in `[0, 1]` summing to one, variances in `[0, 1]`, covariances and
/// third moments in `[-1, 1]`, fourth moments in `[0, 1]`.
///
/// These hold for sample moments as well, so the tolerance is a fixed
/// roundoff slack rather than a multiple of a standard error.
pub fn audit_moment_bounds(m: &MomentSet) -> AuditReport {
    let n = m.mean.len();
    let tol = IDENTITY_TOL;
    let mut checks = Vec::new();
    let (v, at) = worst_of(m.mean.iter().enumerate().map(|(a, &x)| (vec![a], outside(x, 0.0, 1.0))));
    checks.push(Check::new("moments.mean_range", "mean", v, tol, at));
    checks.push(Check::new(
        "moments.mean_unit_sum",
        "mean",
        (m.mean.iter().sum::<f64>() - 1.0).abs(),
        tol,
        Location::None,
    ));
    let (v, at) = worst_of((0..n).map(|a| (vec![a, a], outside(m.covariance[(a, a)], 0.0, 1.0))));
    checks.push(Check::new("moments.variance_range", "covariance", v, tol, at));
    let (v, at) = worst_of(
        (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).map(|(a, b)| {
            (vec![a, b], outside(m.covariance[(a, b)], -1.0, 1.0))
        }),
    );
    checks.push(Check::new("moments.covariance_range", "covariance", v, tol, at));
    let (v, at) = worst_of(m.third.iter().enumerate().map(|(a, &x)| (vec![a], outside(x, -1.0, 1.0))));
    checks.push(Check::new("moments.third_range", "third", v, tol, at));
    let (v, at) = worst_of(m.fourth.iter().enumerate().map(|(a, &x)| (vec![a], outside(x, 0.0, 1.0))));
    checks.push(Check::new("moments.fourth_range", "fourth", v, tol, at));
    AuditReport::new(checks)
}

/// Checks that covariance rows sum to zero, the weaker identity
/// `sum_{a,b<N} <y_a y_b> = <y_N^2>`, and exact symmetry.
///
/// Both sum identities hold sample by sample for simplex states. The
/// tolerance is `moment_stat_tol` times a Gaussian-approximation standard
/// error of the residual (zero for exact moments), floored at roundoff.
pub fn audit_covariance_structure(m: &MomentSet, tol: &ToleranceSet) -> AuditReport {
    let c = &m.covariance;
    let n = c.dim();
    let size = m.ensemble_size.unwrap_or(0) as f64;
    let se = |var: f64| if size > 0.0 { (var.max(0.0) / size).sqrt() } else { 0.0 };
    let rows = c.row_sums();
    let v_sum: f64 = rows.iter().sum();

    let mut checks = Vec::new();
    for (a, &rs) in rows.iter().enumerate() {
        let limit = (tol.moment_stat_tol * se(c[(a, a)] * v_sum + rs * rs)).max(IDENTITY_TOL);
        checks.push(Check::new("covariance.row_sum", format!("row {}", a + 1), rs.abs(), limit, Location::Index(vec![a])));
    }

    let last = n - 1;
    let var_x: f64 = (0..last).map(|a| (0..last).map(|b| c[(a, b)]).sum::<f64>()).sum();
    let var_z = c[(last, last)];
    let cov_xz: f64 = (0..last).map(|a| c[(a, last)]).sum();
    let weak = var_x - var_z;
    let limit = (tol.moment_stat_tol * se(2.0 * var_x * var_x + 2.0 * var_z * var_z - 4.0 * cov_xz * cov_xz))
        .max(IDENTITY_TOL);
    checks.push(Check::new("covariance.weak_sum", "reduced block", weak.abs(), limit, Location::None));

    let mut worst = (0.0, Location::None);
    for a in 0..n {
        for b in a + 1..n {
            let d = (c[(a, b)] - c[(b, a)]).abs();
            if d > worst.0 {
                worst = (d, Location::Index(vec![a, b]));
            }
        }
    }
    // Exact symmetry: the tolerance is zero.
    checks.push(Check::new("covariance.symmetry", "covariance", worst.0, 0.0, worst.1));
    AuditReport::new(checks)
}
