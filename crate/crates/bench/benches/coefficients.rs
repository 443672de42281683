use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use landau_core::coefficients::{CoefficientTable, Landau, QuadratureScheme};
use landau_core::potential::PotentialSpec;
use landau_core::sde::em_step_with;

fn radial(c: &mut Criterion) {
    let landau = Landau::new(&PotentialSpec::with_dim(4), &QuadratureScheme::default()).unwrap();
    let mut group = c.benchmark_group("coefficients");
    group.sample_size(10);
    group.bench_function("radial_d4", |b| b.iter(|| landau.radial(black_box(1.3))));
    group.finish();
}

fn sde_step(c: &mut Criterion) {
    let landau = Landau::new(&PotentialSpec::with_dim(4), &QuadratureScheme::default()).unwrap();
    let table = CoefficientTable::build(&landau, 64, 8.0).unwrap();
    let v = [0.3, -1.1, 0.4, 0.9];
    let xi = [0.1, 0.2, -0.3, 0.4];
    c.bench_function("em_step_d4", |b| {
        b.iter(|| em_step_with(black_box(&v), 5e-3, &table, &xi))
    });
}

criterion_group!(benches, radial, sde_step);
criterion_main!(benches);
