use crate::config::{OutputFormat, RunConfig, AUDIT_STREAM, SIMULATION_STREAM};
use crate::output::{self, Cell, CsvTable};
use crate::{CliError, RunArgs, OUTDIR_ENV};
use serde::Serialize;
use simplex_sde::process::ProcessDefinition;
use simplex_sde::realizability::{audit_boundary, audit_covariance_structure, audit_moment_bounds, AuditReport};
use simplex_sde::statistics::{
    analytic_stationary, compare_stationary, compare_windows, cross_validate_rates, window_estimate, MomentSet,
    RateValidation, StatsError, WindowEstimate,
};
use simplex_sde::{simulate_with, RandomSource, RunStats, SimulationOptions, Trajectory};
use std::path::{Path, PathBuf};
use std::time::Instant;

const DEFAULT_OUTDIR: &str = "simplex-sde-out";

struct Job {
    cfg: RunConfig,
    outdir: PathBuf,
    skip_audit: bool,
}

fn prepare(args: &RunArgs) -> Result<Job, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let outdir = args
        .outdir
        .clone()
        .or_else(|| cfg.outdir.clone())
        .or_else(|| std::env::var_os(OUTDIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTDIR));
    std::fs::create_dir_all(&outdir)?;
    Ok(Job { cfg, outdir, skip_audit: args.skip_audit })
}

fn audit(cfg: &RunConfig, proc: &ProcessDefinition) -> Result<AuditReport, CliError> {
    let src = RandomSource::new(cfg.seed).with_stream(AUDIT_STREAM);
    audit_boundary(proc, cfg.audit.samples_per_face, src, &cfg.audit.tolerances())
        .map_err(|e| CliError::Failure(format!("boundary audit: {e}")))
}

/// Runs the boundary audit, writes `audit.json`, and returns whether it passed.
fn audit_and_write(cfg: &RunConfig, proc: &ProcessDefinition, outdir: &Path) -> Result<bool, CliError> {
    let report = audit(cfg, proc)?;
    output::write_json(&outdir.join("audit.json"), &report)?;
    Ok(report.overall_pass)
}

fn guard_audit(job: &Job, proc: &ProcessDefinition) -> Result<(), CliError> {
    if job.skip_audit {
        return Ok(());
    }
    if !audit_and_write(&job.cfg, proc, &job.outdir)? {
        return Err(CliError::Failure(format!(
            "process {} fails the boundary audit (see audit.json); rerun with --skip-audit to simulate anyway",
            proc.name()
        )));
    }
    Ok(())
}

fn run_simulation(cfg: &RunConfig, proc: &ProcessDefinition) -> Result<Trajectory, CliError> {
    let init = cfg.initial_ensemble()?;
    let i = &cfg.integrator;
    let opts = SimulationOptions::new(i.t_end, i.record_every).keep_ensembles(cfg.output.dump_every);
    let src = RandomSource::new(cfg.seed).with_stream(SIMULATION_STREAM);
    simulate_with(proc, &init, &i.to_config(), &opts, src).map_err(|e| CliError::Failure(format!("simulation: {e}")))
}

#[derive(Serialize)]
struct SnapshotRecord<'a> {
    time: f64,
    step: u64,
    moments: &'a MomentSet,
    rates: &'a simplex_sde::MomentRates,
}

fn write_trajectory(cfg: &RunConfig, traj: &Trajectory, outdir: &Path) -> Result<(), CliError> {
    if cfg.output.formats.contains(&OutputFormat::Csv) {
        output::moments_table(&traj.snapshots).write_to(&outdir.join("moments.csv"))?;
        output::rates_table(&traj.snapshots).write_to(&outdir.join("rates.csv"))?;
    }
    if cfg.output.formats.contains(&OutputFormat::Json) {
        let records: Vec<SnapshotRecord> = traj
            .snapshots
            .iter()
            .map(|s| SnapshotRecord { time: s.time, step: s.step, moments: &s.moments, rates: &s.rates })
            .collect();
        output::write_json(&outdir.join("moments.json"), &records)?;
    }
    for s in &traj.snapshots {
        if let Some(ens) = &s.ensemble {
            output::ensemble_table(ens).write_to(&outdir.join(output::ensemble_file_name(s.time)))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    timestamp_unix: u64,
    config: &'a RunConfig,
    stats: Option<RunStats>,
}

fn write_meta(job: &Job, command: &str, stats: Option<RunStats>) -> Result<(), CliError> {
    let timestamp_unix =
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = RunMeta {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: job.cfg.seed,
        timestamp_unix,
        config: &job.cfg,
        stats,
    };
    output::write_json(&job.outdir.join("run_meta.json"), &meta)?;
    Ok(())
}

pub fn check(args: &RunArgs) -> Result<i32, CliError> {
    let job = prepare(args)?;
    let proc = job.cfg.build_process()?;
    let report = audit(&job.cfg, &proc)?;
    output::write_json(&job.outdir.join("audit.json"), &report)?;
    print!("{}", report.table());
    Ok(if report.overall_pass { 0 } else { 1 })
}

pub fn simulate(args: &RunArgs) -> Result<i32, CliError> {
    let job = prepare(args)?;
    let proc = job.cfg.build_process()?;
    guard_audit(&job, &proc)?;
    let traj = run_simulation(&job.cfg, &proc)?;
    write_trajectory(&job.cfg, &traj, &job.outdir)?;
    write_meta(&job, "simulate", Some(traj.stats))?;
    let stats = traj.stats;
    println!(
        "{} snapshots, {} particle-steps, {} clipped, {} resampled",
        traj.snapshots.len(),
        stats.particle_steps,
        stats.clipped_steps,
        stats.resampled_steps
    );
    if stats.unrealizable_states > 0 {
        return Err(CliError::Failure(format!(
            "{} recorded states left the simplex (worst violation {:e})",
            stats.unrealizable_states, stats.worst_violation
        )));
    }
    Ok(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryComparison {
    /// `analytic` or `reference`.
    pub kind: &'static str,
    pub window: [f64; 2],
    pub estimate: WindowEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<MomentSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<WindowEstimate>,
    pub report: AuditReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentAudit {
    pub unrealizable_states: u64,
    pub snapshots_failing_bounds: usize,
    pub snapshots_failing_covariance_structure: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareOutcome {
    pub process: String,
    pub overall_pass: bool,
    pub moment_audit: MomentAudit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateValidation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationaryComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary_skipped: Option<String>,
    #[serde(skip)]
    pub stats: RunStats,
}

fn stats_error(e: StatsError) -> CliError {
    match e {
        StatsError::InsufficientSnapshots(_) | StatsError::EmptyWindow(..) | StatsError::NoBatches => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Failure(other.to_string()),
    }
}

/// Simulates `cfg` and compares the result against rates and stationary references.
pub fn run_compare(cfg: &RunConfig) -> Result<CompareOutcome, CliError> {
    let proc = cfg.build_process()?;
    let traj = run_simulation(cfg, &proc)?;
    let tol = cfg.compare.tol_multiplier;

    let tolerances = cfg.audit.tolerances();
    let moment_audit = MomentAudit {
        unrealizable_states: traj.stats.unrealizable_states,
        snapshots_failing_bounds: traj.snapshots.iter().filter(|s| !audit_moment_bounds(&s.moments).overall_pass).count(),
        snapshots_failing_covariance_structure: traj
            .snapshots
            .iter()
            .filter(|s| !audit_covariance_structure(&s.moments, &tolerances).overall_pass)
            .count(),
    };

    let rates = if cfg.compare.rates { Some(cross_validate_rates(&traj, tol).map_err(stats_error)?) } else { None };

    let (t0, t1) = cfg.window();
    let mut stationary_skipped = None;
    let stationary = if let Some(reference) = &cfg.compare.reference {
        let rproc = reference.build().map_err(|e| CliError::Usage(e.to_string()))?;
        let rtraj = run_simulation(cfg, &rproc)?;
        let estimate = window_estimate(&traj, t0, t1).map_err(stats_error)?;
        let other = window_estimate(&rtraj, t0, t1).map_err(stats_error)?;
        let report = compare_windows(&estimate, &other, tol).map_err(stats_error)?;
        Some(StationaryComparison {
            kind: "reference",
            window: [t0, t1],
            estimate,
            oracle: None,
            reference: Some(other),
            report,
        })
    } else {
        match analytic_stationary(&proc) {
            Ok(oracle) => {
                let estimate = window_estimate(&traj, t0, t1).map_err(stats_error)?;
                let report = compare_stationary(&estimate, &oracle, tol).map_err(stats_error)?;
                Some(StationaryComparison {
                    kind: "analytic",
                    window: [t0, t1],
                    estimate,
                    oracle: Some(oracle),
                    reference: None,
                    report,
                })
            }
            Err(e) => {
                stationary_skipped = Some(e.to_string());
                None
            }
        }
    };

    let overall_pass = moment_audit.unrealizable_states == 0
        && moment_audit.snapshots_failing_bounds == 0
        && moment_audit.snapshots_failing_covariance_structure == 0
        && rates.as_ref().map_or(true, |r| r.report.overall_pass)
        && stationary.as_ref().map_or(true, |s| s.report.overall_pass);
    Ok(CompareOutcome {
        process: proc.name().to_string(),
        overall_pass,
        moment_audit,
        rates,
        stationary,
        stationary_skipped,
        stats: traj.stats,
    })
}

fn print_compare(c: &CompareOutcome) {
    if let Some(r) = &c.rates {
        print!("{}", r.report.table());
        println!(
            "third-moment rate form: {:?}; fourth-moment rate form: {:?}",
            r.third_form.matching, r.fourth_form.matching
        );
    }
    if let Some(s) = &c.stationary {
        println!("stationary ({}) over t in [{}, {}]:", s.kind, s.window[0], s.window[1]);
        print!("{}", s.report.table());
    }
    if let Some(why) = &c.stationary_skipped {
        println!("stationary comparison skipped: {why}");
    }
    println!("compare: {}", if c.overall_pass { "PASS" } else { "FAIL" });
}

pub fn compare(args: &RunArgs) -> Result<i32, CliError> {
    let job = prepare(args)?;
    let proc = job.cfg.build_process()?;
    guard_audit(&job, &proc)?;
    let outcome = run_compare(&job.cfg)?;
    output::write_json(&job.outdir.join("compare.json"), &outcome)?;
    write_meta(&job, "compare", Some(outcome.stats))?;
    print_compare(&outcome);
    Ok(if outcome.overall_pass { 0 } else { 1 })
}

fn sweep_header(parameter: &str) -> Vec<String> {
    [
        "point",
        parameter,
        "pass",
        "rates_pass",
        "stationary_pass",
        "mean_1",
        "mean_1_se",
        "mean_1_ref",
        "var_1",
        "var_1_se",
        "var_1_ref",
        "runtime_s",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn sweep_row(point: usize, value: f64, c: &CompareOutcome, runtime: f64) -> Vec<Cell> {
    let rates_pass = c.rates.as_ref().map_or(true, |r| r.report.overall_pass);
    let stationary_pass = c.stationary.as_ref().map_or(true, |s| s.report.overall_pass);
    let mut row = vec![
        Cell::Int(point as u64),
        Cell::Num(value),
        Cell::from(c.overall_pass),
        Cell::from(rates_pass),
        Cell::from(stationary_pass),
    ];
    match &c.stationary {
        Some(s) => {
            let (mref, vref) = match (&s.oracle, &s.reference) {
                (Some(o), _) => (Some(o.mean[0]), Some(o.variance(0))),
                (None, Some(r)) => (Some(r.mean[0]), Some(r.covariance[(0, 0)])),
                _ => (None, None),
            };
            row.extend([
                Cell::Num(s.estimate.mean[0]),
                Cell::Num(s.estimate.mean_se[0]),
                Cell::from(mref),
                Cell::Num(s.estimate.covariance[(0, 0)]),
                Cell::Num(s.estimate.covariance_se[(0, 0)]),
                Cell::from(vref),
            ]);
        }
        None => row.extend([Cell::Empty; 6]),
    }
    row.push(Cell::Num(runtime));
    row
}

pub fn sweep(args: &RunArgs) -> Result<i32, CliError> {
    let job = prepare(args)?;
    let sweep = job.cfg.sweep.clone().ok_or_else(|| CliError::Usage("config has no [sweep] section".into()))?;
    if sweep.values.is_empty() {
        return Err(CliError::Usage("sweep grid is empty".into()));
    }
    let points: Vec<RunConfig> =
        sweep.values.iter().map(|&v| job.cfg.with_parameter(&sweep.parameter, v)).collect::<Result<_, _>>()?;

    let mut table = CsvTable::new(sweep_header(&sweep.parameter));
    let mut all_pass = true;
    for (i, (cfg, &value)) in points.iter().zip(&sweep.values).enumerate() {
        let dir = job.outdir.join(format!("point_{i}"));
        std::fs::create_dir_all(&dir)?;
        let proc = cfg.build_process()?;
        if !job.skip_audit && !audit_and_write(cfg, &proc, &dir)? {
            return Err(CliError::Failure(format!("grid point {i} fails the boundary audit")));
        }
        let start = Instant::now();
        let outcome = run_compare(cfg)?;
        let runtime = start.elapsed().as_secs_f64();
        output::write_json(&dir.join("compare.json"), &outcome)?;
        println!("point {i}: {} = {value} -> {}", sweep.parameter, if outcome.overall_pass { "PASS" } else { "FAIL" });
        all_pass &= outcome.overall_pass;
        table.push(sweep_row(i, value, &outcome, runtime));
    }
    table.write_to(&job.outdir.join("sweep.csv"))?;
    write_meta(&job, "sweep", None)?;
    Ok(if all_pass { 0 } else { 1 })
}
