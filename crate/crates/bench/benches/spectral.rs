use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use sphere_mv::kernels::coefficients;
use sphere_mv::solver::mode_seed;
use sphere_mv::specfun::gauss_jacobi_rule;
use sphere_mv::{bifurcation_points, decompose, gibbs_fixed_point, KernelSpec, SolverConfig, ZonalProfile};

fn kernels(c: &mut Criterion) {
    let specs = [
        KernelSpec::transformer(10, 2.0).unwrap(),
        KernelSpec::onsager(5).unwrap(),
        KernelSpec::heat(3, 0.05).unwrap(),
    ];
    for spec in &specs {
        c.bench_function(&format!("coefficients/{}/K64", spec.name()), |b| {
            b.iter(|| coefficients(black_box(spec), 64).unwrap())
        });
    }
    let rule = Arc::new(gauss_jacobi_rule(4, 96).unwrap());
    let profile = ZonalProfile::from_fn(rule, |t| (1.0 - t * t).sqrt() * (2.0 * t).exp()).unwrap();
    c.bench_function("decompose/n4/K64/M96", |b| b.iter(|| decompose(black_box(&profile), 64).unwrap()));
}

fn solve(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let w = coefficients(&KernelSpec::transformer(4, 1.0).unwrap(), cfg.k_max).unwrap();
    let gamma = 1.5 * bifurcation_points(&w).unwrap().points[0].gamma;
    let seed = mode_seed(cfg.basis(4).unwrap(), 1, 1.0, cfg.seed_amplitude).unwrap();
    c.bench_function("gibbs_fixed_point/transformer/n4", |b| {
        b.iter(|| gibbs_fixed_point(&w, black_box(gamma), &seed, &cfg).unwrap())
    });
}

criterion_group!(benches, kernels, solve);
criterion_main!(benches);
