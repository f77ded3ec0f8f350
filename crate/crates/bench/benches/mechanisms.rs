use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use meanpoint::central::{chaining_mechanism, projection_mechanism, Dataset};
use meanpoint::geometry::{chaining_decomposition, greedy_separated_set, InsertionOrder, MetricKind, Norm};
use meanpoint::harness::{gen_cone, gen_dataset, gen_random_sphere, DatasetMode};
use meanpoint::projection::{project_onto_hull, DEFAULT_TOL};

fn geometry(c: &mut Criterion) {
    let u = gen_random_sphere(32, 500, 1.0, 1).unwrap();
    c.bench_function("greedy_packing_sphere_32x500", |b| {
        b.iter(|| greedy_separated_set(&u, black_box(0.05), MetricKind::NormalizedL2, InsertionOrder::Ascending).unwrap())
    });
    c.bench_function("chaining_decomposition_sphere_32x500", |b| {
        b.iter(|| chaining_decomposition(&u, black_box(0.1), Norm::L2, 1.0).unwrap())
    });
    let y = vec![0.3; 32];
    c.bench_function("project_onto_hull_sphere_32x500", |b| {
        b.iter(|| project_onto_hull(black_box(&y), &u, DEFAULT_TOL, None).unwrap())
    });
}

fn mechanisms(c: &mut Criterion) {
    let u = gen_cone(64, 0.1, 100, 2).unwrap();
    let d: Dataset<'_> = gen_dataset(&u, 1000, &DatasetMode::IidUniform, 3).unwrap();
    c.bench_function("projection_mechanism_cone_64", |b| {
        b.iter(|| projection_mechanism(&d, black_box(0.1), 7).unwrap())
    });
    c.bench_function("chaining_mechanism_cone_64", |b| {
        b.iter(|| chaining_mechanism(&d, black_box(0.1), 0.1, 7).unwrap())
    });
}

criterion_group!(benches, geometry, mechanisms);
criterion_main!(benches);
