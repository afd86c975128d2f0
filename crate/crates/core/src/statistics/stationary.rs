//! Invariant-law moments and time-window estimates from simulations.

use super::{mean_and_se, MomentSet, StatsError};
use crate::integrator::Trajectory;
use crate::linalg::SquareMatrix;
use crate::process::{ProcessDefinition, ProcessSpec};
use crate::realizability::{AuditReport, Check, Location, IDENTITY_TOL};
use serde::Serialize;

/// `E[X^k]` for `X ~ Beta(alpha, beta)`.
fn beta_raw_moment(alpha: f64, beta: f64, k: u32) -> f64 {
    (0..k).map(|j| (alpha + j as f64) / (alpha + beta + j as f64)).product()
}

/// Exact moments of the Dirichlet law with weights `omega`.
///
/// Each marginal is `Beta(omega_a, omega_0 - omega_a)` with `omega_0 = sum omega`;
/// the covariance is `(m_a delta_ab - m_a m_b) / (omega_0 + 1)`.
pub fn dirichlet_moments(omega: &[f64]) -> MomentSet {
    let n = omega.len();
    let total: f64 = omega.iter().sum();
    let mean: Vec<f64> = omega.iter().map(|w| w / total).collect();
    let mut cov = SquareMatrix::zeros(n);
    for a in 0..n {
        for b in 0..n {
            let delta = if a == b { mean[a] } else { 0.0 };
            cov[(a, b)] = (delta - mean[a] * mean[b]) / (total + 1.0);
        }
    }
    let mut third = Vec::with_capacity(n);
    let mut fourth = Vec::with_capacity(n);
    for (a, &w) in omega.iter().enumerate() {
        let m = mean[a];
        let e2 = beta_raw_moment(w, total - w, 2);
        let e3 = beta_raw_moment(w, total - w, 3);
        let e4 = beta_raw_moment(w, total - w, 4);
        third.push(e3 - 3.0 * m * e2 + 2.0 * m.powi(3));
        fourth.push(e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4));
    }
    MomentSet::from_parts(None, mean, cov, third, fourth)
}

/// Moments of the invariant law of a named process, where it is known in closed form.
///
/// * beta: `Beta(b S / kappa, b (1 - S) / kappa)` (needs `0 < S < 1`)
/// * Wright-Fisher: `Dirichlet(omega)`
/// * Dirichlet: `Dirichlet(b_a S_a / kappa_a, ..., b (1 - S) / kappa)` when the
///   ratios `(1 - S_a) b_a / kappa_a` agree
pub fn analytic_stationary(proc: &ProcessDefinition) -> Result<MomentSet, StatsError> {
    let weights = match proc.spec() {
        Some(ProcessSpec::Beta(p)) => {
            if p.s <= 0.0 || p.s >= 1.0 {
                return Err(StatsError::Unsupported("beta process with an absorbing endpoint".into()));
            }
            vec![p.b * p.s / p.kappa, p.b * (1.0 - p.s) / p.kappa]
        }
        Some(ProcessSpec::WrightFisher(p)) => p.omega.clone(),
        Some(ProcessSpec::Dirichlet(p)) => p.invariant_weights().ok_or_else(|| {
            StatsError::Unsupported("dirichlet parameters without equal (1 - S) b / kappa ratios".into())
        })?,
        Some(ProcessSpec::GenDirichlet(_)) => {
            return Err(StatsError::Unsupported("generalized dirichlet (compare against simulation)".into()))
        }
        Some(ProcessSpec::Broken { .. }) => return Err(StatsError::Unsupported("broken process".into())),
        None => return Err(StatsError::Unsupported(format!("custom process {}", proc.name()))),
    };
    Ok(dirichlet_moments(&weights))
}

/// Time-averaged moments over a window of snapshots, with batch-means
/// standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowEstimate {
    pub t0: f64,
    pub t1: f64,
    pub snapshots: usize,
    pub batches: usize,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub covariance: SquareMatrix,
    pub covariance_se: SquareMatrix,
    pub third: Vec<f64>,
    pub third_se: Vec<f64>,
    pub fourth: Vec<f64>,
    pub fourth_se: Vec<f64>,
}

/// Averages the moments of all snapshots with `t0 <= t <= t1`.
///
/// The estimate is the average over the whole ensemble. Its standard error
/// comes from the spread of the same average taken within each particle
/// batch, which accounts for correlation between snapshots.
pub fn window_estimate(traj: &Trajectory, t0: f64, t1: f64) -> Result<WindowEstimate, StatsError> {
    let eps = 1e-9 * t1.abs().max(1.0);
    let snaps: Vec<_> = traj.snapshots.iter().filter(|s| s.time >= t0 - eps && s.time <= t1 + eps).collect();
    if snaps.is_empty() {
        return Err(StatsError::EmptyWindow(t0, t1));
    }
    let j = snaps[0].batches.len();
    if j < 2 || snaps.iter().any(|s| s.batches.len() != j) {
        return Err(StatsError::NoBatches);
    }
    let n = snaps[0].moments.dim();
    let count = snaps.len() as f64;
    let avg = |f: &dyn Fn(&MomentSet) -> f64| -> (f64, f64) {
        let whole = snaps.iter().map(|s| f(&s.moments)).sum::<f64>() / count;
        let per_batch: Vec<f64> =
            (0..j).map(|b| snaps.iter().map(|s| f(&s.batches[b].moments)).sum::<f64>() / count).collect();
        (whole, mean_and_se(&per_batch).1)
    };

    let mut mean = Vec::new();
    let mut mean_se = Vec::new();
    let mut third = Vec::new();
    let mut third_se = Vec::new();
    let mut fourth = Vec::new();
    let mut fourth_se = Vec::new();
    let mut covariance = SquareMatrix::zeros(n);
    let mut covariance_se = SquareMatrix::zeros(n);
    for a in 0..n {
        let (v, se) = avg(&|m| m.mean[a]);
        mean.push(v);
        mean_se.push(se);
        let (v, se) = avg(&|m| m.third[a]);
        third.push(v);
        third_se.push(se);
        let (v, se) = avg(&|m| m.fourth[a]);
        fourth.push(v);
        fourth_se.push(se);
        for b in a..n {
            let (v, se) = avg(&|m| m.covariance[(a, b)]);
            covariance[(a, b)] = v;
            covariance[(b, a)] = v;
            covariance_se[(a, b)] = se;
            covariance_se[(b, a)] = se;
        }
    }
    Ok(WindowEstimate {
        t0,
        t1,
        snapshots: snaps.len(),
        batches: j,
        mean,
        mean_se,
        covariance,
        covariance_se,
        third,
        third_se,
        fourth,
        fourth_se,
    })
}

fn stationary_checks(
    n: usize,
    tol: f64,
    mean: impl Fn(usize) -> (f64, f64),
    cov: impl Fn(usize, usize) -> (f64, f64),
) -> AuditReport {
    let mut checks = Vec::new();
    for a in 0..n {
        let (diff, se) = mean(a);
        checks.push(Check::new(
            "stationary.mean",
            format!("mean[{}]", a + 1),
            diff.abs(),
            (tol * se).max(IDENTITY_TOL),
            Location::Index(vec![a]),
        ));
    }
    for a in 0..n {
        for b in a..n {
            let (diff, se) = cov(a, b);
            checks.push(Check::new(
                "stationary.covariance",
                format!("cov[{},{}]", a + 1, b + 1),
                diff.abs(),
                (tol * se).max(IDENTITY_TOL),
                Location::Index(vec![a, b]),
            ));
        }
    }
    AuditReport::new(checks)
}

/// Checks window means and covariances against exact stationary moments,
/// each within `tol` standard errors.
pub fn compare_stationary(w: &WindowEstimate, oracle: &MomentSet, tol: f64) -> Result<AuditReport, StatsError> {
    let n = w.mean.len();
    if oracle.dim() != n {
        return Err(StatsError::Incompatible);
    }
    Ok(stationary_checks(
        n,
        tol,
        |a| (w.mean[a] - oracle.mean[a], w.mean_se[a]),
        |a, b| (w.covariance[(a, b)] - oracle.covariance[(a, b)], w.covariance_se[(a, b)]),
    ))
}

/// Checks that two independent window estimates agree within `tol` combined
/// standard errors.
pub fn compare_windows(x: &WindowEstimate, y: &WindowEstimate, tol: f64) -> Result<AuditReport, StatsError> {
    let n = x.mean.len();
    if y.mean.len() != n {
        return Err(StatsError::Incompatible);
    }
    Ok(stationary_checks(
        n,
        tol,
        |a| (x.mean[a] - y.mean[a], x.mean_se[a].hypot(y.mean_se[a])),
        |a, b| {
            (
                x.covariance[(a, b)] - y.covariance[(a, b)],
                x.covariance_se[(a, b)].hypot(y.covariance_se[(a, b)]),
            )
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::*;
    use crate::statistics::estimate_moments;
    use crate::state::Ensemble;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma};

    /// Draws Dirichlet samples as normalized Gamma variates.
    fn sample_dirichlet(omega: &[f64], m: usize, seed: u64) -> Ensemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gammas: Vec<Gamma<f64>> = omega.iter().map(|&w| Gamma::new(w, 1.0).unwrap()).collect();
        let mut data = Vec::with_capacity(m * omega.len());
        for _ in 0..m {
            let g: Vec<f64> = gammas.iter().map(|d| d.sample(&mut rng)).collect();
            let s: f64 = g.iter().sum();
            data.extend(g.iter().map(|x| x / s));
        }
        Ensemble::from_rows_unchecked(omega.len(), data)
    }

    #[test]
    fn dirichlet_moments_match_direct_sampling() {
        for omega in [vec![1.0, 1.0, 1.0], vec![0.5, 2.0, 3.5], vec![2.0, 2.0]] {
            let exact = dirichlet_moments(&omega);
            let m = 400_000;
            let est = estimate_moments(&sample_dirichlet(&omega, m, 17)).unwrap();
            let n = omega.len();
            for a in 0..n {
                // Generous 5-sigma bounds using the exact higher moments.
                let se_mean = (exact.variance(a) / m as f64).sqrt();
                assert!((est.mean[a] - exact.mean[a]).abs() < 5.0 * se_mean);
                let se_var = ((exact.fourth[a] - exact.variance(a).powi(2)) / m as f64).sqrt();
                assert!((est.variance(a) - exact.variance(a)).abs() < 5.0 * se_var);
                assert!((est.third[a] - exact.third[a]).abs() < 5e-3);
                assert!((est.fourth[a] - exact.fourth[a]).abs() < 5e-3);
                for b in 0..n {
                    assert!((est.covariance[(a, b)] - exact.covariance[(a, b)]).abs() < 2e-3);
                }
            }
        }
    }

    #[test]
    fn uniform_three_component_values() {
        let m = dirichlet_moments(&[1.0, 1.0, 1.0]);
        for a in 0..3 {
            assert!((m.mean[a] - 1.0 / 3.0).abs() < 1e-15);
            assert!((m.variance(a) - 1.0 / 18.0).abs() < 1e-15);
            for b in 0..3 {
                if a != b {
                    assert!((m.covariance[(a, b)] + 1.0 / 36.0).abs() < 1e-15);
                }
            }
        }
    }

    /// Stationary density of `dY = A dt + sqrt(B) dW` on (0, 1) by quadrature:
    /// `p ∝ exp(∫ 2A/B) / B`.
    fn scalar_stationary_moments(a: impl Fn(f64) -> f64, b: impl Fn(f64) -> f64) -> (f64, f64, f64) {
        let n = 200_000;
        let h = 1.0 / n as f64;
        let mid = |i: usize| (i as f64 + 0.5) * h;
        let mut log_phi = 0.0;
        let mut x_prev = 0.5;
        let mut weights = Vec::with_capacity(n);
        // Integrate the potential outward from 0.5 in both directions.
        let start = n / 2;
        let mut logs = vec![0.0; n];
        for i in start..n {
            let x = mid(i);
            log_phi += simpson(&|s| 2.0 * a(s) / b(s), x_prev, x);
            logs[i] = log_phi;
            x_prev = x;
        }
        log_phi = 0.0;
        x_prev = 0.5;
        for i in (0..start).rev() {
            let x = mid(i);
            log_phi -= simpson(&|s| 2.0 * a(s) / b(s), x, x_prev);
            logs[i] = log_phi;
            x_prev = x;
        }
        for (i, l) in logs.iter().enumerate() {
            weights.push(l.exp() / b(mid(i)));
        }
        let z: f64 = weights.iter().sum();
        let m1: f64 = weights.iter().enumerate().map(|(i, w)| w * mid(i)).sum::<f64>() / z;
        let m2: f64 = weights.iter().enumerate().map(|(i, w)| w * (mid(i) - m1).powi(2)).sum::<f64>() / z;
        let m3: f64 = weights.iter().enumerate().map(|(i, w)| w * (mid(i) - m1).powi(3)).sum::<f64>() / z;
        (m1, m2, m3)
    }

    fn simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi))
    }

    #[test]
    fn beta_oracle_matches_fokker_planck_quadrature() {
        for (b, s, kappa) in [(2.0, 0.5, 1.0), (3.0, 0.3, 0.8), (1.0, 0.6, 0.2)] {
            let p = beta_process(&BetaParams::new(b, s, kappa)).unwrap();
            let exact = analytic_stationary(&p).unwrap();
            let (m1, m2, m3) =
                scalar_stationary_moments(|y| 0.5 * b * (s - y), |y| kappa * y * (1.0 - y));
            assert!((exact.mean[0] - m1).abs() < 1e-5, "{m1}");
            assert!((exact.variance(0) - m2).abs() < 1e-5, "{m2}");
            assert!((exact.third[0] - m3).abs() < 1e-5, "{m3}");
            assert!((exact.variance(0) - kappa * s * (1.0 - s) / (b + kappa)).abs() < 1e-14);
        }
    }

    #[test]
    fn beta_reference_values() {
        let p = beta_process(&BetaParams::new(2.0, 0.5, 1.0)).unwrap();
        let m = analytic_stationary(&p).unwrap();
        assert_eq!(m.mean[0], 0.5);
        assert!((m.variance(0) - 1.0 / 12.0).abs() < 1e-15);
        assert!(m.skewness[0].unwrap().abs() < 1e-12);
    }

    #[test]
    fn unsupported_processes() {
        let gd = gen_dirichlet_process(&GenDirichletParams::dirichlet_reduction(
            vec![2.0, 2.0],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        ))
        .unwrap();
        assert!(matches!(analytic_stationary(&gd), Err(StatsError::Unsupported(_))));
        let unequal = dirichlet_process(&DirichletParams::new(vec![2.0, 1.0], vec![0.5, 0.5], vec![1.0, 1.0])).unwrap();
        assert!(matches!(analytic_stationary(&unequal), Err(StatsError::Unsupported(_))));
        let absorbing = beta_process(&BetaParams::new(2.0, 0.0, 1.0)).unwrap();
        assert!(analytic_stationary(&absorbing).is_err());
        assert!(analytic_stationary(&broken_process(BrokenStyle::OutwardDrift, 3)).is_err());
    }

    #[test]
    fn dirichlet_process_weights() {
        let p = dirichlet_process(&DirichletParams::new(vec![2.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.5])).unwrap();
        let m = analytic_stationary(&p).unwrap();
        assert_eq!(m, dirichlet_moments(&[1.0, 1.0, 1.0]));
    }
}
