use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use cubesig_core::engine::{identity_signature, monomial, signature, Quadrature};
use cubesig_core::fixtures;
use cubesig_core::jacobian_field;

fn monomials(c: &mut Criterion) {
    let idx = fixtures::worked_example_index();
    let mut group = c.benchmark_group("worked_example_monomial");
    for cells in [8usize, 16, 32] {
        let field = jacobian_field(&fixtures::worked_example_map(cells).unwrap()).unwrap();
        for quad in [Quadrature::StrictGrid, Quadrature::CellExact] {
            group.bench_with_input(BenchmarkId::new(quad.name(), cells), &field, |b, f| {
                b.iter(|| monomial(black_box(f), &idx, &quad, None).unwrap())
            });
        }
    }
    group.finish();
}

fn signatures(c: &mut Criterion) {
    let mut rng = fixtures::rng(7);
    let field = jacobian_field(&fixtures::random_map(&mut rng, 3, &[8, 8]).unwrap()).unwrap();
    let mut group = c.benchmark_group("signature_n3_N8");
    group.sample_size(10);
    for level in [1usize, 2, 3] {
        group.bench_with_input(BenchmarkId::new("full", level), &level, |b, &m| {
            b.iter(|| signature(black_box(&field), m, &Quadrature::StrictGrid).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("identity_dp", level), &level, |b, &m| {
            b.iter(|| identity_signature(black_box(&field), m, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monomials, signatures);
criterion_main!(benches);
