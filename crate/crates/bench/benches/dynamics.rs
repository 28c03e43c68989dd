use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use sphere_mv::particles::Stepper;
use sphere_mv::{ForceModel, KernelSpec, ParticleEnsemble, SimConfig};

fn step(c: &mut Criterion) {
    let spec = KernelSpec::onsager(3).unwrap();
    let cfg = SimConfig { gamma: 13.0, ..SimConfig::default() };
    let mut group = c.benchmark_group("step");
    for (name, count, force) in [
        ("truncated_L6", 20_000, ForceModel::truncated(&spec, 6).unwrap()),
        ("truncated_L12", 20_000, ForceModel::truncated(&spec, 12).unwrap()),
        ("pairwise", 1_000, ForceModel::pairwise(&spec).unwrap()),
    ] {
        group.throughput(Throughput::Elements(count as u64));
        let ens = ParticleEnsemble::uniform(3, count, 7).unwrap();
        let mut stepper = Stepper::new(force);
        group.bench_function(name, |b| {
            b.iter_batched_ref(|| ens.clone(), |e| stepper.step(e, &cfg).unwrap(), BatchSize::LargeInput)
        });
    }
    group.finish();
}

criterion_group!(benches, step);
criterion_main!(benches);
