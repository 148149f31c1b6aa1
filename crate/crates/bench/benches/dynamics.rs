use std::hint::black_box;

use armlab::rne::{bias_vector, coriolis_matrix, mass_matrix, rneida, rnefda};
use armlab::SpatialLoad;
use armlab_bench::{rod_chain, spread_state, Fixture};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

fn ur5_kernels(c: &mut Criterion) {
    let f = Fixture::ur5();
    let (q, qd) = (&f.state.q, &f.state.qd);
    let qdd = DVector::from_element(6, 0.4);
    let tau = DVector::from_element(6, 1.5);
    let load = SpatialLoad::zero();
    let mut g = c.benchmark_group("ur5");
    g.bench_function("rneida", |b| b.iter(|| rneida(&f.model, black_box(q), black_box(qd), &qdd, &load).unwrap()));
    g.bench_function("bias_vector", |b| b.iter(|| bias_vector(&f.model, black_box(q), black_box(qd), &load).unwrap()));
    g.bench_function("mass_matrix", |b| b.iter(|| mass_matrix(&f.model, black_box(q)).unwrap()));
    g.bench_function("rnefda", |b| b.iter(|| rnefda(&f.model, black_box(q), black_box(qd), &tau, &load).unwrap()));
    g.bench_function("coriolis_matrix", |b| b.iter(|| coriolis_matrix(&f.model, black_box(q), black_box(qd)).unwrap()));
    g.finish();
}

fn chain_scaling(c: &mut Criterion) {
    let mut g = c.benchmark_group("rnefda_chain");
    for n in [2, 6, 12, 24] {
        let model = rod_chain(n);
        let x = spread_state(n);
        let tau = DVector::zeros(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| rnefda(&model, black_box(&x.q), black_box(&x.qd), &tau, &SpatialLoad::zero()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, ur5_kernels, chain_scaling);
criterion_main!(benches);
