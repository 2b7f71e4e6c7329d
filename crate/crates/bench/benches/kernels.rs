use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gotmix::distances::{got, w1_discrete, GotParams};
use gotmix::lowerbound::gauss_legendre;
use gotmix::measures::DiscreteMeasure;
use gotmix::npmle::{solve, SolverConfig};
use gotmix::polyapprox::{chebyshev_approx, convolve_gauss, dual_coefficients, LipschitzFn};
use gotmix_bench::{fixture_histogram, two_atom_fixture};

fn bench_solve(c: &mut Criterion) {
    let (fam, _) = two_atom_fixture();
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for n in [1_000u64, 10_000] {
        let h = fixture_histogram(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &h, |b, h| {
            b.iter(|| solve(&fam, black_box(h), &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_distances(c: &mut Criterion) {
    let (_, q) = two_atom_fixture();
    let q_hat = DiscreteMeasure::new(&[(0.4, 0.3), (0.9, 0.2), (1.6, 0.5)]).unwrap();
    c.bench_function("w1_discrete", |b| b.iter(|| w1_discrete(black_box(&q), black_box(&q_hat))));
    for sigma in [0.1, 1.0] {
        let p = GotParams::with_sigma(sigma).unwrap();
        c.bench_function(&format!("got/sigma={sigma}"), |b| {
            b.iter(|| got(black_box(&q), black_box(&q_hat), p).unwrap())
        });
    }
}

fn bench_polynomials(c: &mut Criterion) {
    let l = LipschitzFn::sawtooth(&[-0.8, -0.4, 0.0, 0.4, 0.8], 1.0).unwrap();
    let f = |t: f64| convolve_gauss(&l, 0.5, t);
    for k in [8usize, 32] {
        c.bench_function(&format!("chebyshev_approx/k={k}"), |b| {
            b.iter(|| chebyshev_approx(f, -1.0, 1.0, black_box(k)).unwrap())
        });
    }
    let (fam, _) = two_atom_fixture();
    c.bench_function("dual_coefficients/k=8", |b| {
        b.iter(|| dual_coefficients(&fam, &l, 1.0, black_box(8)).unwrap())
    });
    for m in [8usize, 64] {
        c.bench_function(&format!("gauss_legendre/m={m}"), |b| b.iter(|| gauss_legendre(black_box(m)).unwrap()));
    }
}

criterion_group!(benches, bench_solve, bench_distances, bench_polynomials);
criterion_main!(benches);
