//! Ensemble moments, moment-evolution rates, and their validation.
//!
//! Moments are taken over all `N` components (the last one rebuilt from the
//! unit sum) with `y_a = Y_a - <Y_a>` and `1/M` normalization. Rates follow
//! from Ito's lemma applied to the drift `A` and diffusion `B`, extended to the
//! last component by `A_N = -sum A_a` and `B_aN = -sum_b B_ab`:
//!
//! * means: `<A_a>`
//! * covariances: `<y_a A_b> + <y_b A_a> + <B_ab>`
//! * third moments: `3 <y_a^2 (A_a - <A_a>)> + 3 <y_a B_aa>`
//! * fourth moments: `4 <y_a^3 (A_a - <A_a>)> + 6 <y_a^2 B_aa>`
//!
//! A variant form of the third and fourth rates, `3 <y_a^2 A_a> + 3 sum_b <y_a B_bb>`
//! and `4 <y_a^3 A_a> + 6 sum_b <y_a^2 B_bb>` (sums over the `N - 1` reduced
//! components), is computed alongside so that simulations can tell them apart.

mod stationary;
mod validation;

pub use stationary::{
    analytic_stationary, compare_stationary, compare_windows, dirichlet_moments, window_estimate,
    WindowEstimate,
};
pub use validation::{
    cross_validate_rates, FormVerdict, MatchingForm, RateForm, RateResidual, RateSummary, RateValidation,
};

use crate::linalg::SquareMatrix;
use crate::process::{EvalError, ProcessDefinition};
use crate::state::Ensemble;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

/// Variance below which skewness and kurtosis are reported as undefined.
pub const DEGENERATE_VARIANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("ensemble has {0} members, at least 2 are needed")]
    EnsembleTooSmall(usize),
    #[error("drift/diffusion evaluation failed for particle {particle}: {source}")]
    Evaluation { particle: usize, source: EvalError },
    #[error("ensemble dimension {ensemble} does not match process dimension {process}")]
    DimensionMismatch { ensemble: usize, process: usize },
    #[error("trajectory has {0} snapshots, at least 3 are needed")]
    InsufficientSnapshots(usize),
    #[error("trajectory snapshots carry no batch statistics (ensemble too small for batching)")]
    NoBatches,
    #[error("no snapshots in the window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("no analytic stationary moments: {0}")]
    Unsupported(String),
    #[error("moment sets have different dimensions")]
    Incompatible,
}

/// Sum by recursive halving: error grows like `log M` instead of `M`, and the
/// result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean computed relative to the first element, which makes it exact for
/// constant data and reduces cancellation for tightly clustered data.
fn pairwise_mean(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else { return f64::NAN };
    let shifted: Vec<f64> = xs.iter().map(|x| x - x0).collect();
    x0 + pairwise_sum(&shifted) / xs.len() as f64
}

fn mean_of(len: usize, f: impl Fn(usize) -> f64) -> f64 {
    let v: Vec<f64> = (0..len).map(f).collect();
    pairwise_mean(&v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    /// Number of states the moments were estimated from; `None` for exact moments.
    pub ensemble_size: Option<usize>,
    pub mean: Vec<f64>,
    pub covariance: SquareMatrix,
    pub third: Vec<f64>,
    pub fourth: Vec<f64>,
    pub skewness: Vec<Option<f64>>,
    pub kurtosis: Vec<Option<f64>>,
}

impl MomentSet {
    /// Assembles a moment set, deriving skewness and kurtosis.
    pub fn from_parts(
        ensemble_size: Option<usize>,
        mean: Vec<f64>,
        covariance: SquareMatrix,
        third: Vec<f64>,
        fourth: Vec<f64>,
    ) -> Self {
        let n = mean.len();
        let mut skewness = Vec::with_capacity(n);
        let mut kurtosis = Vec::with_capacity(n);
        for a in 0..n {
            let v = covariance[(a, a)];
            if v < DEGENERATE_VARIANCE {
                skewness.push(None);
                kurtosis.push(None);
            } else {
                skewness.push(Some(third[a] / v.powf(1.5)));
                kurtosis.push(Some(fourth[a] / (v * v)));
            }
        }
        Self { ensemble_size, mean, covariance, third, fourth, skewness, kurtosis }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self, a: usize) -> f64 {
        self.covariance[(a, a)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRates {
    pub mean_rate: Vec<f64>,
    pub cov_rate: SquareMatrix,
    pub third_rate: Vec<f64>,
    pub fourth_rate: Vec<f64>,
    pub third_rate_variant: Vec<f64>,
    pub fourth_rate_variant: Vec<f64>,
}

/// Columns of an ensemble: `x[a][i]` is component `a` of particle `i`.
fn columns(ens: &Ensemble) -> Vec<Vec<f64>> {
    let n = ens.dim();
    let mut cols = vec![Vec::with_capacity(ens.len()); n];
    for row in ens.rows() {
        for (c, &v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    cols
}

fn slice_cols<'a>(cols: &'a [Vec<f64>], r: &Range<usize>) -> Vec<&'a [f64]> {
    cols.iter().map(|c| &c[r.clone()]).collect()
}

/// Moments of the given columns, plus the centered columns.
fn moments_of(x: &[&[f64]]) -> (MomentSet, Vec<Vec<f64>>) {
    let n = x.len();
    let m = x[0].len();
    let mean: Vec<f64> = x.iter().map(|c| pairwise_mean(c)).collect();
    let y: Vec<Vec<f64>> = x.iter().zip(&mean).map(|(c, &mu)| c.iter().map(|v| v - mu).collect()).collect();
    let mut cov = SquareMatrix::zeros(n);
    for a in 0..n {
        for b in a..n {
            let v = mean_of(m, |i| y[a][i] * y[b][i]);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let third = y.iter().map(|c| mean_of(m, |i| c[i] * c[i] * c[i])).collect();
    let fourth = y.iter().map(|c| mean_of(m, |i| (c[i] * c[i]) * (c[i] * c[i]))).collect();
    (MomentSet::from_parts(Some(m), mean, cov, third, fourth), y)
}

/// Mean, covariance, third and fourth central moments over all `N` components.
pub fn estimate_moments(ens: &Ensemble) -> Result<MomentSet, StatsError> {
    if ens.len() < 2 {
        return Err(StatsError::EnsembleTooSmall(ens.len()));
    }
    let cols = columns(ens);
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    Ok(moments_of(&refs).0)
}

/// Drift and diffusion of every particle, extended to all `N` components and
/// stored by column: `a[c][i]` and `b[c * N + d][i]`.
struct PointTerms {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

fn point_terms(ens: &Ensemble, proc: &ProcessDefinition, t: f64) -> Result<PointTerms, StatsError> {
    let n = ens.dim();
    if n != proc.dim() {
        return Err(StatsError::DimensionMismatch { ensemble: n, process: proc.dim() });
    }
    let k = n - 1;
    let m = ens.len();
    let mut a_rows = vec![0.0; m * n];
    let mut b_rows = vec![0.0; m * n * n];
    let results: Vec<Result<(), StatsError>> = a_rows
        .par_chunks_mut(n)
        .zip(b_rows.par_chunks_mut(n * n))
        .zip(ens.data().par_chunks(n))
        .enumerate()
        .map_init(
            || (vec![0.0; k], SquareMatrix::zeros(k)),
            |(drift, diff), (i, ((a_out, b_out), row))| {
                let wrap = |source| StatsError::Evaluation { particle: i, source };
                proc.drift_into(&row[..k], t, drift).map_err(wrap)?;
                proc.diffusion_into(&row[..k], t, diff).map_err(wrap)?;
                a_out[..k].copy_from_slice(drift);
                a_out[k] = -drift.iter().sum::<f64>();
                let mut total = 0.0;
                for r in 0..k {
                    let mut rs = 0.0;
                    for c in 0..k {
                        let v = diff[(r, c)];
                        b_out[r * n + c] = v;
                        rs += v;
                    }
                    b_out[r * n + k] = -rs;
                    b_out[k * n + r] = -rs;
                    total += rs;
                }
                b_out[k * n + k] = total;
                Ok(())
            },
        )
        .collect();
    results.into_iter().collect::<Result<Vec<()>, _>>()?;

    let mut a = vec![Vec::with_capacity(m); n];
    for row in a_rows.chunks_exact(n) {
        for (col, &v) in a.iter_mut().zip(row) {
            col.push(v);
        }
    }
    let mut b = vec![Vec::with_capacity(m); n * n];
    for row in b_rows.chunks_exact(n * n) {
        for (col, &v) in b.iter_mut().zip(row) {
            col.push(v);
        }
    }
    Ok(PointTerms { a, b })
}

fn rates_of(y: &[Vec<f64>], a: &[&[f64]], b: &[&[f64]]) -> MomentRates {
    let n = y.len();
    let m = y[0].len();
    let k = n - 1;
    let mean_rate: Vec<f64> = a.iter().map(|c| pairwise_mean(c)).collect();
    let mut cov_rate = SquareMatrix::zeros(n);
    for p in 0..n {
        for q in p..n {
            let v = mean_of(m, |i| y[p][i] * a[q][i] + y[q][i] * a[p][i] + b[p * n + q][i]);
            cov_rate[(p, q)] = v;
            cov_rate[(q, p)] = v;
        }
    }
    let trace_reduced = |i: usize| (0..k).map(|c| b[c * n + c][i]).sum::<f64>();
    let mut third_rate = Vec::with_capacity(n);
    let mut fourth_rate = Vec::with_capacity(n);
    let mut third_rate_variant = Vec::with_capacity(n);
    let mut fourth_rate_variant = Vec::with_capacity(n);
    for p in 0..n {
        let (yp, ap, bpp, abar) = (&y[p], a[p], b[p * n + p], mean_rate[p]);
        third_rate.push(mean_of(m, |i| 3.0 * yp[i] * yp[i] * (ap[i] - abar) + 3.0 * yp[i] * bpp[i]));
        fourth_rate.push(mean_of(m, |i| {
            let y2 = yp[i] * yp[i];
            4.0 * y2 * yp[i] * (ap[i] - abar) + 6.0 * y2 * bpp[i]
        }));
        third_rate_variant.push(mean_of(m, |i| 3.0 * yp[i] * yp[i] * ap[i] + 3.0 * yp[i] * trace_reduced(i)));
        fourth_rate_variant.push(mean_of(m, |i| {
            let y2 = yp[i] * yp[i];
            4.0 * y2 * yp[i] * ap[i] + 6.0 * y2 * trace_reduced(i)
        }));
    }
    MomentRates { mean_rate, cov_rate, third_rate, fourth_rate, third_rate_variant, fourth_rate_variant }
}

/// Moment-evolution rates implied by `proc` for the ensemble at time `t`.
pub fn estimate_rates(ens: &Ensemble, proc: &ProcessDefinition, t: f64) -> Result<MomentRates, StatsError> {
    if ens.len() < 2 {
        return Err(StatsError::EnsembleTooSmall(ens.len()));
    }
    let terms = point_terms(ens, proc, t)?;
    let cols = columns(ens);
    let full = 0..ens.len();
    let (_, y) = moments_of(&slice_cols(&cols, &full));
    Ok(rates_of(&y, &slice_cols(&terms.a, &full), &slice_cols(&terms.b, &full)))
}

/// Splits `m` particles into at most `batches` contiguous batches of at
/// least two particles each. Returns no batches if fewer than two fit.
pub fn batch_ranges(m: usize, batches: usize) -> Vec<Range<usize>> {
    let j = batches.min(m / 2);
    if j < 2 {
        return Vec::new();
    }
    (0..j).map(|i| i * m / j..(i + 1) * m / j).collect()
}

/// Moments and rates of a whole ensemble and of each of its batches.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub moments: MomentSet,
    pub rates: MomentRates,
    pub batches: Vec<(MomentSet, MomentRates)>,
}

/// Evaluates drift and diffusion once per particle and derives whole-ensemble
/// and per-batch statistics from them.
pub fn ensemble_stats(
    ens: &Ensemble,
    proc: &ProcessDefinition,
    t: f64,
    batches: usize,
) -> Result<EnsembleStats, StatsError> {
    if ens.len() < 2 {
        return Err(StatsError::EnsembleTooSmall(ens.len()));
    }
    let terms = point_terms(ens, proc, t)?;
    let cols = columns(ens);
    let summarize = |r: Range<usize>| {
        let (moments, y) = moments_of(&slice_cols(&cols, &r));
        let rates = rates_of(&y, &slice_cols(&terms.a, &r), &slice_cols(&terms.b, &r));
        (moments, rates)
    };
    let (moments, rates) = summarize(0..ens.len());
    let batches = batch_ranges(ens.len(), batches).into_iter().map(summarize).collect();
    Ok(EnsembleStats { moments, rates, batches })
}

/// Mean and standard error of the mean of `xs`.
pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mu = pairwise_mean(xs);
    if xs.len() < 2 {
        return (mu, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mu) * (x - mu)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mu, (var / n).sqrt())
}
