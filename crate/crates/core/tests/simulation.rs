use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simplex_sde::process::*;
use simplex_sde::realizability::{audit_covariance_structure, audit_moment_bounds, ToleranceSet};
use simplex_sde::state::{is_realizable, make_state, Ensemble};
use simplex_sde::statistics::cross_validate_rates;
use simplex_sde::{simulate, simulate_with, BoundaryPolicy, IntegratorConfig, RandomSource, SimulationOptions};

fn named_processes() -> Vec<ProcessDefinition> {
    vec![
        beta_process(&BetaParams::new(2.0, 0.5, 1.0)).unwrap(),
        wright_fisher_process(&WrightFisherParams::new(vec![1.0, 1.0, 1.0])).unwrap(),
        dirichlet_process(&DirichletParams::new(vec![2.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.5])).unwrap(),
        gen_dirichlet_process(&GenDirichletParams::dirichlet_reduction(
            vec![2.0, 2.0],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        ))
        .unwrap(),
    ]
}

fn start_for(n: usize) -> Ensemble {
    let state = if n == 2 { vec![0.9, 0.1] } else { vec![0.5, 0.3, 0.2] };
    Ensemble::delta(&make_state(state).unwrap(), 64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_recorded_state_is_on_the_simplex(
        which in 0usize..4,
        seed in any::<u64>(),
        dt in prop::sample::select(vec![1e-3, 1e-2, 5e-2]),
        clip in any::<bool>(),
    ) {
        let p = &named_processes()[which];
        let policy = if clip { BoundaryPolicy::ClipAndRenormalize } else { BoundaryPolicy::RejectResample };
        let cfg = IntegratorConfig::new(dt).with_policy(policy);
        let opts = SimulationOptions::new(0.5, 5).keep_ensembles(1);
        let traj = simulate_with(p, &start_for(p.dim()), &cfg, &opts, RandomSource::new(seed)).unwrap();
        prop_assert_eq!(traj.stats.unrealizable_states, 0);
        for s in &traj.snapshots {
            let ens = s.ensemble.as_ref().unwrap();
            prop_assert!(ens.rows().all(is_realizable));
            prop_assert!(audit_moment_bounds(&s.moments).overall_pass);
            prop_assert!(audit_covariance_structure(&s.moments, &ToleranceSet::default()).overall_pass);
        }
    }

    #[test]
    fn uniform_starts_stay_on_the_simplex(seed in any::<u64>()) {
        let p = wright_fisher_process(&WrightFisherParams::new(vec![0.2, 0.3, 0.1, 0.4])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = Ensemble::uniform(4, 64, &mut rng);
        let traj = simulate(&p, &init, &IntegratorConfig::new(2e-2), 1.0, 10, RandomSource::new(seed)).unwrap();
        prop_assert_eq!(traj.stats.unrealizable_states, 0);
        prop_assert_eq!(traj.stats.worst_violation, 0.0);
    }
}

#[test]
fn broken_processes_are_kept_on_the_simplex_by_the_integrator() {
    for style in [BrokenStyle::ConstantDiffusion, BrokenStyle::OutwardDrift] {
        let p = broken_process(style, 3);
        let traj = simulate(&p, &start_for(3), &IntegratorConfig::new(1e-2), 1.0, 20, RandomSource::new(1)).unwrap();
        assert_eq!(traj.stats.unrealizable_states, 0);
        assert!(traj.stats.clipped_steps > 0 || traj.stats.resampled_steps > 0);
    }
}

#[test]
fn same_seed_same_trajectory() {
    let p = &named_processes()[1];
    let cfg = IntegratorConfig::new(1e-2);
    let a = simulate(p, &start_for(3), &cfg, 1.0, 10, RandomSource::new(5)).unwrap();
    let b = simulate(p, &start_for(3), &cfg, 1.0, 10, RandomSource::new(5)).unwrap();
    let c = simulate(p, &start_for(3), &cfg, 1.0, 10, RandomSource::new(6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.last().moments, c.last().moments);
}

#[test]
fn beta_mean_relaxes_exponentially() {
    let (b, s, y0) = (2.0, 0.5, 0.9);
    let p = beta_process(&BetaParams::new(b, s, 1.0)).unwrap();
    let init = Ensemble::delta(&make_state(vec![y0, 1.0 - y0]).unwrap(), 4000);
    let traj = simulate(&p, &init, &IntegratorConfig::new(1e-3), 3.0, 250, RandomSource::new(21)).unwrap();
    for snap in &traj.snapshots[1..] {
        let exact = s + (y0 - s) * (-b * snap.time / 2.0).exp();
        let se = (snap.moments.variance(0) / 4000.0).sqrt();
        assert!((snap.moments.mean[0] - exact).abs() <= 3.0 * se, "t={} mean={} exact={exact}", snap.time, snap.moments.mean[0]);
    }
}

#[test]
fn wright_fisher_rates_cross_validate() {
    let p = &named_processes()[1];
    let init = Ensemble::delta(&make_state(vec![0.5, 0.3, 0.2]).unwrap(), 4000);
    let traj = simulate(p, &init, &IntegratorConfig::new(1e-3), 2.0, 100, RandomSource::new(8)).unwrap();
    let v = cross_validate_rates(&traj, 3.0).unwrap();
    for s in v.summaries.iter().filter(|s| s.quantity == "mean" || s.quantity == "covariance") {
        assert!(s.pass, "{s:?}");
    }
}

#[test]
fn beta_clipping_is_rare_under_reject_resample() {
    let p = beta_process(&BetaParams::new(2.0, 0.5, 1.0)).unwrap();
    let init = Ensemble::delta(&make_state(vec![0.5, 0.5]).unwrap(), 1000);
    let traj = simulate(&p, &init, &IntegratorConfig::new(1e-3), 1.0, 1000, RandomSource::new(42)).unwrap();
    assert_eq!(traj.stats.particle_steps, 1_000_000);
    assert!(traj.stats.clipped_fraction() < 0.01, "{:?}", traj.stats);
}

#[test]
fn symmetric_dirichlet_keeps_the_centroid_mean() {
    // omega = (2, 2, 2): the invariant density vanishes on the faces, so the
    // boundary policy hardly ever acts.
    let p = dirichlet_process(&DirichletParams::new(vec![1.0, 1.0], vec![0.5, 0.5], vec![0.25, 0.25])).unwrap();
    let c = 1.0 / 3.0;
    let init = Ensemble::delta(&make_state(vec![c, c, c]).unwrap(), 4000);
    let traj = simulate(&p, &init, &IntegratorConfig::new(1e-3), 2.0, 200, RandomSource::new(13)).unwrap();
    for snap in &traj.snapshots[1..] {
        for a in 0..3 {
            let se = (snap.moments.variance(a) / 4000.0).sqrt();
            assert!((snap.moments.mean[a] - c).abs() <= 3.0 * se, "t={} a={a} {}", snap.time, snap.moments.mean[a]);
        }
    }
}
