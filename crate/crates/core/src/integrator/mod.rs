//! Euler-Maruyama integration of ensembles on the simplex.
//!
//! A step proposes `Y' = Y + A dt + b xi sqrt(dt)` for the reduced
//! coordinates, with `b b^T = B` and `xi` standard normal. Proposals that
//! leave the simplex are redrawn or clipped according to [`BoundaryPolicy`],
//! so every state the integrator produces is realizable.

mod factor;
mod noise;

pub use factor::{factor_diffusion, factor_into, FactorError, FactorWorkspace, DEFAULT_FACTORIZATION_SHIFT};
pub use noise::RandomSource;

use crate::linalg::SquareMatrix;
use crate::process::{EvalError, ProcessDefinition};
use crate::state::{Ensemble, ReducedState, TOL_SUM};
use crate::statistics::{self, MomentRates, MomentSet, StatsError};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Clamp negative coordinates to zero, then rescale if the reduced sum exceeds one.
    ClipAndRenormalize,
    /// Redraw the noise up to `max_resample` times, then clip.
    #[default]
    RejectResample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub boundary_policy: BoundaryPolicy,
    #[serde(default = "default_max_resample")]
    pub max_resample: u32,
    #[serde(default = "default_shift")]
    pub factorization_shift: f64,
}

fn default_max_resample() -> u32 {
    100
}

fn default_shift() -> f64 {
    DEFAULT_FACTORIZATION_SHIFT
}

impl IntegratorConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            scheme: Scheme::EulerMaruyama,
            boundary_policy: BoundaryPolicy::RejectResample,
            max_resample: default_max_resample(),
            factorization_shift: default_shift(),
        }
    }

    pub fn with_policy(mut self, policy: BoundaryPolicy) -> Self {
        self.boundary_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(IntegratorError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.max_resample < 1 {
            return Err(IntegratorError::InvalidConfig("max_resample must be >= 1".into()));
        }
        if !(self.factorization_shift.is_finite() && self.factorization_shift >= 0.0) {
            return Err(IntegratorError::InvalidConfig("factorization_shift must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("drift/diffusion evaluation failed: {0}")]
    DegenerateState(#[from] EvalError),
    #[error("diffusion factorization failed: {0}")]
    Factorization(#[from] FactorError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("initial ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("particle {particle} at t = {time}: {source}")]
    Step { particle: usize, time: f64, source: StepError },
    #[error("statistics at t = {time}: {source}")]
    Statistics { time: f64, source: StatsError },
}

/// What happened to a proposal during one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepOutcome {
    /// Number of rejected proposals before the accepted one.
    pub resamples: u32,
    /// The accepted state was produced by clipping.
    pub clipped: bool,
}

/// Per-thread buffers for stepping one particle.
#[derive(Debug, Clone)]
pub struct Stepper {
    drift: Vec<f64>,
    diffusion: SquareMatrix,
    factor: SquareMatrix,
    factor_ws: FactorWorkspace,
    xi: Vec<f64>,
    kick: Vec<f64>,
    proposal: Vec<f64>,
}

fn reduced_is_valid(y: &[f64]) -> bool {
    y.iter().all(|&v| v >= 0.0) && y.iter().sum::<f64>() <= 1.0
}

fn clip_into_simplex(y: &mut [f64]) {
    for v in y.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = y.iter().sum();
    if s > 1.0 {
        for v in y.iter_mut() {
            *v /= s;
        }
    }
}

impl Stepper {
    /// Buffers for a process with `k = N - 1` reduced coordinates.
    pub fn new(k: usize) -> Self {
        Self {
            drift: vec![0.0; k],
            diffusion: SquareMatrix::zeros(k),
            factor: SquareMatrix::zeros(k),
            factor_ws: FactorWorkspace::new(k),
            xi: vec![0.0; k],
            kick: vec![0.0; k],
            proposal: vec![0.0; k],
        }
    }

    /// Advances the reduced coordinates `y` in place by one step.
    pub fn advance<R: Rng>(
        &mut self,
        y: &mut [f64],
        proc: &ProcessDefinition,
        t: f64,
        cfg: &IntegratorConfig,
        rng: &mut R,
    ) -> Result<StepOutcome, StepError> {
        proc.drift_into(y, t, &mut self.drift)?;
        proc.diffusion_into(y, t, &mut self.diffusion)?;
        let rank = factor_into(&self.diffusion, cfg.factorization_shift, &mut self.factor_ws, &mut self.factor)?;
        let dt = cfg.dt;
        let sqdt = dt.sqrt();

        let attempts = match (cfg.boundary_policy, rank) {
            // Without noise every redraw gives the same proposal.
            (_, 0) | (BoundaryPolicy::ClipAndRenormalize, _) => 1,
            (BoundaryPolicy::RejectResample, _) => cfg.max_resample.saturating_add(1),
        };
        let mut outcome = StepOutcome::default();
        for attempt in 0..attempts {
            if rank > 0 {
                for x in self.xi.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
                self.factor.mul_vec_into(&self.xi, &mut self.kick);
            } else {
                self.kick.fill(0.0);
            }
            for a in 0..y.len() {
                self.proposal[a] = y[a] + self.drift[a] * dt + self.kick[a] * sqdt;
            }
            if reduced_is_valid(&self.proposal) {
                outcome.resamples = attempt;
                y.copy_from_slice(&self.proposal);
                return Ok(outcome);
            }
        }
        outcome.resamples = attempts - 1;
        outcome.clipped = true;
        clip_into_simplex(&mut self.proposal);
        y.copy_from_slice(&self.proposal);
        Ok(outcome)
    }
}

/// One step of a single reduced state; see [`Stepper::advance`].
pub fn step<R: Rng>(
    state: &ReducedState,
    proc: &ProcessDefinition,
    t: f64,
    cfg: &IntegratorConfig,
    rng: &mut R,
) -> Result<(ReducedState, StepOutcome), StepError> {
    let mut y = state.as_slice().to_vec();
    let outcome = Stepper::new(y.len()).advance(&mut y, proc, t, cfg, rng)?;
    let next = ReducedState::new(y).expect("integrator output stays in the simplex");
    Ok((next, outcome))
}

/// Sets the last component of a full row from the unit-sum condition.
fn complete_row(row: &mut [f64]) {
    let n = row.len();
    let head: f64 = row[..n - 1].iter().sum();
    row[n - 1] = (1.0 - head).max(0.0);
}

fn row_violation(row: &[f64]) -> f64 {
    let neg = row.iter().fold(0.0_f64, |m, &v| m.max(-v));
    let sum_err = (row.iter().sum::<f64>() - 1.0).abs();
    if neg > 0.0 || sum_err > TOL_SUM {
        neg.max(sum_err)
    } else {
        0.0
    }
}

/// Counters accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub particle_steps: u64,
    /// Steps whose first proposal was rejected.
    pub resampled_steps: u64,
    pub total_redraws: u64,
    pub clipped_steps: u64,
    /// States (after any step) with a negative component or `|sum - 1| > 1e-12`.
    pub unrealizable_states: u64,
    pub worst_violation: f64,
}

impl RunStats {
    fn merge(mut self, other: RunStats) -> RunStats {
        self.particle_steps += other.particle_steps;
        self.resampled_steps += other.resampled_steps;
        self.total_redraws += other.total_redraws;
        self.clipped_steps += other.clipped_steps;
        self.unrealizable_states += other.unrealizable_states;
        self.worst_violation = self.worst_violation.max(other.worst_violation);
        self
    }

    pub fn clipped_fraction(&self) -> f64 {
        if self.particle_steps == 0 {
            0.0
        } else {
            self.clipped_steps as f64 / self.particle_steps as f64
        }
    }
}

/// Moments and rates of one contiguous batch of particles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSnapshot {
    pub moments: MomentSet,
    pub rates: MomentRates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub step: u64,
    pub time: f64,
    pub moments: MomentSet,
    pub rates: MomentRates,
    pub batches: Vec<BatchSnapshot>,
    #[serde(skip)]
    pub ensemble: Option<Ensemble>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub process: String,
    pub dt: f64,
    pub snapshots: Vec<Snapshot>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("a trajectory has at least one snapshot")
    }
}

/// Default number of particle batches used for standard errors.
pub const DEFAULT_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub t_end: f64,
    /// Record a snapshot every this many steps (and always at the final step).
    pub record_every: usize,
    pub batches: usize,
    /// Keep the raw ensemble on every `keep_ensemble_every`-th snapshot (0 = never).
    pub keep_ensemble_every: usize,
}

impl SimulationOptions {
    pub fn new(t_end: f64, record_every: usize) -> Self {
        Self { t_end, record_every, batches: DEFAULT_BATCHES, keep_ensemble_every: 0 }
    }

    pub fn keep_ensembles(mut self, every: usize) -> Self {
        self.keep_ensemble_every = every;
        self
    }
}

fn snapshot(
    ens: &Ensemble,
    proc: &ProcessDefinition,
    step: u64,
    time: f64,
    batches: usize,
    keep: bool,
) -> Result<Snapshot, IntegratorError> {
    let stats = statistics::ensemble_stats(ens, proc, time, batches)
        .map_err(|source| IntegratorError::Statistics { time, source })?;
    Ok(Snapshot {
        step,
        time,
        moments: stats.moments,
        rates: stats.rates,
        batches: stats.batches.into_iter().map(|(moments, rates)| BatchSnapshot { moments, rates }).collect(),
        ensemble: keep.then(|| ens.clone()),
    })
}

/// Convenience form of [`simulate_with`].
pub fn simulate(
    proc: &ProcessDefinition,
    init: &Ensemble,
    cfg: &IntegratorConfig,
    t_end: f64,
    record_every: usize,
    rng: RandomSource,
) -> Result<Trajectory, IntegratorError> {
    simulate_with(proc, init, cfg, &SimulationOptions::new(t_end, record_every), rng)
}

/// Advances every particle of `init` to `t_end` with independent noise streams.
///
/// Particles are advanced in parallel between snapshots on the current rayon
/// pool. Noise for particle `i` at step `s` comes from
/// `rng.particle_rng(i, s)` and all reductions run in fixed order, so the
/// result does not depend on the number of threads.
pub fn simulate_with(
    proc: &ProcessDefinition,
    init: &Ensemble,
    cfg: &IntegratorConfig,
    opts: &SimulationOptions,
    rng: RandomSource,
) -> Result<Trajectory, IntegratorError> {
    cfg.validate()?;
    if !(opts.t_end.is_finite() && opts.t_end > 0.0) {
        return Err(IntegratorError::InvalidConfig(format!("t_end must be > 0, got {}", opts.t_end)));
    }
    if opts.record_every == 0 {
        return Err(IntegratorError::InvalidConfig("record_every must be >= 1".into()));
    }
    if init.dim() != proc.dim() {
        return Err(IntegratorError::InvalidEnsemble(format!(
            "ensemble has N = {}, process has N = {}",
            init.dim(),
            proc.dim()
        )));
    }
    if init.is_empty() {
        return Err(IntegratorError::InvalidEnsemble("ensemble is empty".into()));
    }
    if let Some(bad) = init.rows().position(|r| !crate::state::is_realizable(r)) {
        return Err(IntegratorError::InvalidEnsemble(format!("particle {bad} is not a simplex state")));
    }

    let n_steps = ((opts.t_end / cfg.dt).round() as u64).max(1);
    let k = proc.reduced_dim();
    let mut ens = init.clone();
    for row in ens.rows_mut() {
        complete_row(row);
    }

    let mut snapshots = Vec::new();
    let keep = |idx: usize| opts.keep_ensemble_every > 0 && idx % opts.keep_ensemble_every == 0;
    snapshots.push(snapshot(&ens, proc, 0, 0.0, opts.batches, keep(0))?);

    let mut stats = RunStats::default();
    let mut from = 0u64;
    while from < n_steps {
        let to = (from + opts.record_every as u64).min(n_steps);
        let dim = ens.dim();
        let segment = ens
            .data_mut()
            .par_chunks_mut(dim)
            .enumerate()
            .map_init(
                || Stepper::new(k),
                |stepper, (i, row)| -> Result<RunStats, (usize, f64, StepError)> {
                    let mut local = RunStats::default();
                    for s in from..to {
                        let t = s as f64 * cfg.dt;
                        let mut noise = rng.particle_rng(i as u64, s);
                        let out = stepper
                            .advance(&mut row[..k], proc, t, cfg, &mut noise)
                            .map_err(|e| (i, t, e))?;
                        complete_row(row);
                        local.particle_steps += 1;
                        local.total_redraws += out.resamples as u64;
                        local.resampled_steps += (out.resamples > 0) as u64;
                        local.clipped_steps += out.clipped as u64;
                        let v = row_violation(row);
                        if v > 0.0 {
                            local.unrealizable_states += 1;
                            local.worst_violation = local.worst_violation.max(v);
                        }
                    }
                    Ok(local)
                },
            )
            .reduce(
                || Ok(RunStats::default()),
                |a, b| match (a, b) {
                    (Ok(x), Ok(y)) => Ok(x.merge(y)),
                    (Err(x), Err(y)) => Err(if x.0 <= y.0 { x } else { y }),
                    (Err(x), _) | (_, Err(x)) => Err(x),
                },
            );
        match segment {
            Ok(s) => stats = stats.merge(s),
            Err((particle, time, source)) => return Err(IntegratorError::Step { particle, time, source }),
        }
        from = to;
        let idx = snapshots.len();
        snapshots.push(snapshot(&ens, proc, to, to as f64 * cfg.dt, opts.batches, keep(idx))?);
    }

    Ok(Trajectory { process: proc.name().to_string(), dt: cfg.dt, snapshots, stats })
}
