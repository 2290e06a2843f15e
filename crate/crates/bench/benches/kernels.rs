use criterion::{criterion_group, criterion_main, Criterion};
use skewtorus::compose::{compose_with_map, invert_near_identity};
use skewtorus::kam::kam_step;
use skewtorus::splitting::split_twisted;
use skewtorus::{solve_twisted, solve_untwisted, CompositionParams, EquationKind, KamOptions, OrbitSumParams};
use skewtorus_bench::{cat, cocycle, map, partner, perturbed_system};

fn composition(c: &mut Criterion) {
    let p = CompositionParams::default();
    let f = map(1, 0.5, 4, 1);
    let h = map(2, 0.01, 4, 3);
    c.bench_function("compose bw4", |b| b.iter(|| compose_with_map(&f, &h, &p).unwrap()));
    let h = map(3, 0.01, 2, 3);
    c.bench_function("invert bw2", |b| b.iter(|| invert_near_identity(&h, &p).unwrap()));
}

fn cohomology(c: &mut Criterion) {
    let o = OrbitSumParams::default();
    let (r, s) = cocycle(EquationKind::Untwisted, 6);
    c.bench_function("solve untwisted bw6", |b| {
        b.iter(|| solve_untwisted(&r, &s, &cat(), &partner(), &o, 1e-10).unwrap())
    });
    let (r, s) = cocycle(EquationKind::Twisted, 6);
    c.bench_function("solve twisted bw6", |b| b.iter(|| solve_twisted(&r, &s, &cat(), &partner(), &o, 1e-10).unwrap()));
    let f = map(4, 0.01, 4, 2);
    let g = map(5, 0.01, 4, 2);
    c.bench_function("split twisted bw4", |b| b.iter(|| split_twisted(&f, &g, &cat(), &partner(), &o).unwrap()));
}

fn kam(c: &mut Criterion) {
    let opts = KamOptions::default();
    let mut group = c.benchmark_group("kam");
    group.sample_size(10);
    let sys = perturbed_system(1e-3, 2);
    group.bench_function("step bw2", |b| b.iter(|| kam_step(&sys, 4.0, &opts).unwrap()));
    group.finish();
}

criterion_group!(benches, composition, cohomology, kam);
criterion_main!(benches);
