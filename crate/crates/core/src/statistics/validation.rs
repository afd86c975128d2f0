//! Finite-difference checks of simulated moment trajectories against the
//! rates computed from the drift and diffusion.

use super::{mean_and_se, pairwise_mean, MomentRates, MomentSet, StatsError};
use crate::integrator::{Snapshot, Trajectory};
use crate::realizability::{AuditReport, Check, Location};
use serde::Serialize;

/// Absolute floor added to every rate tolerance, so static ensembles pass.
const RATE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateForm {
    /// Mean and covariance rates (one form only).
    Standard,
    Ito,
    Variant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingForm {
    Ito,
    Variant,
    Both,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FormVerdict {
    pub ito_pass: bool,
    pub variant_pass: bool,
    pub matching: MatchingForm,
}

impl FormVerdict {
    fn new(ito_pass: bool, variant_pass: bool) -> Self {
        let matching = match (ito_pass, variant_pass) {
            (true, true) => MatchingForm::Both,
            (true, false) => MatchingForm::Ito,
            (false, true) => MatchingForm::Variant,
            (false, false) => MatchingForm::Neither,
        };
        Self { ito_pass, variant_pass, matching }
    }
}

/// Pooled comparison for one moment component and rate form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub quantity: &'static str,
    pub component: Vec<usize>,
    pub form: RateForm,
    /// Mean over interior snapshots of `FD - rate`.
    pub residual: f64,
    /// Batch-means standard error of `residual`.
    pub se: f64,
    /// Mean of `|Simpson average of the rate - rate|`, the part of the
    /// residual explained by the finite snapshot spacing.
    pub allowance: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Comparison at a single interior snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResidual {
    pub quantity: &'static str,
    pub component: Vec<usize>,
    pub form: RateForm,
    pub time: f64,
    pub finite_difference: f64,
    pub rate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateValidation {
    /// Gates on means, covariances and the Ito form of third and fourth rates.
    pub report: AuditReport,
    pub third_form: FormVerdict,
    pub fourth_form: FormVerdict,
    pub summaries: Vec<RateSummary>,
    pub residuals: Vec<RateResidual>,
}

type MomentFn = Box<dyn Fn(&MomentSet) -> f64>;
type RateFn = Box<dyn Fn(&MomentRates) -> f64>;

struct Quantity {
    name: &'static str,
    component: Vec<usize>,
    form: RateForm,
    moment: MomentFn,
    rate: RateFn,
}

fn quantities(n: usize) -> Vec<Quantity> {
    let mut q = Vec::new();
    for a in 0..n {
        q.push(Quantity {
            name: "mean",
            component: vec![a],
            form: RateForm::Standard,
            moment: Box::new(move |m| m.mean[a]),
            rate: Box::new(move |r| r.mean_rate[a]),
        });
    }
    for a in 0..n {
        for b in a..n {
            q.push(Quantity {
                name: "covariance",
                component: vec![a, b],
                form: RateForm::Standard,
                moment: Box::new(move |m| m.covariance[(a, b)]),
                rate: Box::new(move |r| r.cov_rate[(a, b)]),
            });
        }
    }
    for a in 0..n {
        q.push(Quantity {
            name: "third",
            component: vec![a],
            form: RateForm::Ito,
            moment: Box::new(move |m| m.third[a]),
            rate: Box::new(move |r| r.third_rate[a]),
        });
        q.push(Quantity {
            name: "third",
            component: vec![a],
            form: RateForm::Variant,
            moment: Box::new(move |m| m.third[a]),
            rate: Box::new(move |r| r.third_rate_variant[a]),
        });
    }
    for a in 0..n {
        q.push(Quantity {
            name: "fourth",
            component: vec![a],
            form: RateForm::Ito,
            moment: Box::new(move |m| m.fourth[a]),
            rate: Box::new(move |r| r.fourth_rate[a]),
        });
        q.push(Quantity {
            name: "fourth",
            component: vec![a],
            form: RateForm::Variant,
            moment: Box::new(move |m| m.fourth[a]),
            rate: Box::new(move |r| r.fourth_rate_variant[a]),
        });
    }
    q
}

/// Central differences and rate residuals at interior snapshots.
fn residual_series(times: &[f64], values: &[f64], rates: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = times.len();
    let mut resid = Vec::with_capacity(n - 2);
    let mut allow = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let fd = (values[i + 1] - values[i - 1]) / (times[i + 1] - times[i - 1]);
        resid.push(fd - rates[i]);
        let simpson = (rates[i - 1] + 4.0 * rates[i] + rates[i + 1]) / 6.0;
        allow.push((simpson - rates[i]).abs());
    }
    (resid, allow)
}

fn batch_series(snaps: &[Snapshot], j: usize, q: &Quantity) -> (Vec<f64>, Vec<f64>) {
    let values: Vec<f64> = snaps.iter().map(|s| (q.moment)(&s.batches[j].moments)).collect();
    let rates: Vec<f64> = snaps.iter().map(|s| (q.rate)(&s.batches[j].rates)).collect();
    (values, rates)
}

/// Compares central finite differences of the recorded moments with the
/// recorded rates.
///
/// For each moment component the residual `FD - rate` is averaged over the
/// interior snapshots, and the same average is formed within each particle
/// batch to obtain a standard error. A component passes when
/// `|residual| <= tol_multiplier * (SE + allowance) + 1e-12`. Third and fourth
/// moments are checked against both rate forms; only the Ito form enters the
/// report's pass/fail.
pub fn cross_validate_rates(traj: &Trajectory, tol_multiplier: f64) -> Result<RateValidation, StatsError> {
    let snaps = &traj.snapshots;
    if snaps.len() < 3 {
        return Err(StatsError::InsufficientSnapshots(snaps.len()));
    }
    let n_batches = snaps[0].batches.len();
    if n_batches < 2 || snaps.iter().any(|s| s.batches.len() != n_batches) {
        return Err(StatsError::NoBatches);
    }
    let n = snaps[0].moments.dim();
    let times: Vec<f64> = snaps.iter().map(|s| s.time).collect();

    let mut report = AuditReport::new(Vec::new());
    let mut summaries = Vec::new();
    let mut residuals = Vec::new();
    for q in quantities(n) {
        let values: Vec<f64> = snaps.iter().map(|s| (q.moment)(&s.moments)).collect();
        let rates: Vec<f64> = snaps.iter().map(|s| (q.rate)(&s.rates)).collect();
        let (resid, allow) = residual_series(&times, &values, &rates);

        let per_batch: Vec<(Vec<f64>, Vec<f64>)> = (0..n_batches)
            .map(|j| {
                let (v, r) = batch_series(snaps, j, &q);
                (residual_series(&times, &v, &r).0, r)
            })
            .collect();
        let pooled_batches: Vec<f64> = per_batch.iter().map(|(e, _)| pairwise_mean(e)).collect();
        let (_, se) = mean_and_se(&pooled_batches);
        let residual = pairwise_mean(&resid);
        let allowance = pairwise_mean(&allow);
        let tolerance = tol_multiplier * (se + allowance) + RATE_FLOOR;
        let pass = residual.abs() <= tolerance;

        for (i, &e) in resid.iter().enumerate() {
            let at: Vec<f64> = per_batch.iter().map(|(eb, _)| eb[i]).collect();
            residuals.push(RateResidual {
                quantity: q.name,
                component: q.component.clone(),
                form: q.form,
                time: times[i + 1],
                finite_difference: e + rates[i + 1],
                rate: rates[i + 1],
                se: mean_and_se(&at).1,
            });
        }
        if q.form != RateForm::Variant {
            let constraint = match (q.name, q.form) {
                ("third", _) => "rates.third_ito",
                ("fourth", _) => "rates.fourth_ito",
                ("mean", _) => "rates.mean",
                _ => "rates.covariance",
            };
            let subject: Vec<String> = q.component.iter().map(|c| (c + 1).to_string()).collect();
            report.push(Check::new(
                constraint,
                format!("{}[{}]", q.name, subject.join(",")),
                residual.abs(),
                tolerance,
                Location::Index(q.component.clone()),
            ));
        }
        summaries.push(RateSummary {
            quantity: q.name,
            component: q.component,
            form: q.form,
            residual,
            se,
            allowance,
            tolerance,
            pass,
        });
    }

    let verdict = |name: &str| {
        let all = |form| summaries.iter().filter(|s| s.quantity == name && s.form == form).all(|s| s.pass);
        FormVerdict::new(all(RateForm::Ito), all(RateForm::Variant))
    };
    let third_form = verdict("third");
    let fourth_form = verdict("fourth");
    Ok(RateValidation { report, third_form, fourth_form, summaries, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{simulate, IntegratorConfig, RandomSource};
    use crate::linalg::SquareMatrix;
    use crate::process::*;
    use crate::state::{make_state, Ensemble};

    #[test]
    fn static_ensemble_has_zero_rates_and_residuals() {
        let p = ProcessDefinition::from_fns(
            "static",
            3,
            |_y: &[f64], _t, o: &mut [f64]| o.fill(0.0),
            |_y: &[f64], _t, o: &mut SquareMatrix| o.fill(0.0),
        );
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let init = Ensemble::uniform(3, 200, &mut rng);
        let traj = simulate(&p, &init, &IntegratorConfig::new(0.01), 0.2, 5, RandomSource::new(0)).unwrap();
        let v = cross_validate_rates(&traj, 3.0).unwrap();
        assert!(v.report.overall_pass);
        for s in &v.summaries {
            assert_eq!(s.residual, 0.0);
        }
        for r in &v.residuals {
            assert_eq!(r.rate, 0.0);
            assert_eq!(r.finite_difference, 0.0);
        }
        assert_eq!(v.third_form.matching, MatchingForm::Both);
    }

    #[test]
    fn too_few_snapshots() {
        let p = beta_process(&BetaParams::new(2.0, 0.5, 1.0)).unwrap();
        let init = Ensemble::delta(&make_state(vec![0.9, 0.1]).unwrap(), 100);
        let traj = simulate(&p, &init, &IntegratorConfig::new(0.01), 0.1, 10, RandomSource::new(0)).unwrap();
        assert_eq!(traj.snapshots.len(), 2);
        assert_eq!(cross_validate_rates(&traj, 3.0).unwrap_err(), StatsError::InsufficientSnapshots(2));
    }

    #[test]
    fn beta_mean_follows_its_rate() {
        let p = beta_process(&BetaParams::new(2.0, 0.5, 1.0)).unwrap();
        let init = Ensemble::delta(&make_state(vec![0.9, 0.1]).unwrap(), 2000);
        let traj = simulate(&p, &init, &IntegratorConfig::new(1e-3), 2.0, 100, RandomSource::new(3)).unwrap();
        let v = cross_validate_rates(&traj, 3.0).unwrap();
        for s in v.summaries.iter().filter(|s| s.quantity == "mean") {
            assert!(s.pass, "{s:?}");
        }
    }
}
