use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use simplex_sde::integrator::factor_diffusion;
use simplex_sde::process::*;
use simplex_sde::state::{make_state, Ensemble};
use simplex_sde::statistics::estimate_moments;
use simplex_sde::{simulate, step, IntegratorConfig, RandomSource, SquareMatrix};
use std::hint::black_box;

fn processes() -> Vec<(&'static str, ProcessDefinition)> {
    vec![
        ("beta", beta_process(&BetaParams::new(2.0, 0.5, 1.0)).unwrap()),
        ("wright_fisher", wright_fisher_process(&WrightFisherParams::new(vec![1.0; 4])).unwrap()),
        (
            "gen_dirichlet",
            gen_dirichlet_process(&GenDirichletParams::dirichlet_reduction(
                vec![2.0, 2.0, 2.0],
                vec![0.5, 0.5, 0.5],
                vec![1.0, 1.0, 1.0],
            ))
            .unwrap(),
        ),
    ]
}

fn single_step(c: &mut Criterion) {
    let cfg = IntegratorConfig::new(1e-3);
    let mut g = c.benchmark_group("step");
    for (name, p) in processes() {
        let n = p.dim();
        let state = make_state(vec![1.0 / n as f64; n]).unwrap().reduced();
        let mut rng = RandomSource::new(1).rng();
        g.bench_function(name, |b| b.iter(|| step(black_box(&state), &p, 0.0, &cfg, &mut rng).unwrap()));
    }
    g.finish();
}

fn ensemble_run(c: &mut Criterion) {
    let cfg = IntegratorConfig::new(1e-3);
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    let (m, steps) = (2000, 100);
    g.throughput(Throughput::Elements((m * steps) as u64));
    for (name, p) in processes() {
        let init = Ensemble::uniform(p.dim(), m, &mut RandomSource::new(2).rng());
        g.bench_function(name, |b| {
            b.iter(|| simulate(&p, &init, &cfg, steps as f64 * 1e-3, steps, RandomSource::new(3)).unwrap())
        });
    }
    g.finish();
}

fn factorization(c: &mut Criterion) {
    let mut g = c.benchmark_group("factor_diffusion");
    for k in [2usize, 4, 8] {
        // Wright-Fisher diffusion at the centroid: positive definite.
        let y = 1.0 / (k + 1) as f64;
        let mut b = SquareMatrix::zeros(k);
        for i in 0..k {
            for j in 0..k {
                b[(i, j)] = y * (if i == j { 1.0 } else { 0.0 } - y);
            }
        }
        g.bench_with_input(BenchmarkId::from_parameter(k), &b, |bench, b| {
            bench.iter(|| factor_diffusion(black_box(b), 1e-14).unwrap())
        });
    }
    g.finish();
}

fn moments(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate_moments");
    for m in [1_000usize, 10_000] {
        let ens = Ensemble::uniform(3, m, &mut RandomSource::new(4).rng());
        g.throughput(Throughput::Elements(m as u64));
        g.bench_with_input(BenchmarkId::from_parameter(m), &ens, |b, ens| b.iter(|| estimate_moments(ens).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, single_step, ensemble_run, factorization, moments);
criterion_main!(benches);
