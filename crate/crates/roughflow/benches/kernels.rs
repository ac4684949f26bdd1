use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roughflow::cell::{CellDomain, CellGrid};
use roughflow::diagnostics::{
    gradient_curl_check, FlattenedField, QuadGrid, Quadrature, Region, Vertical,
};
use roughflow::euler::{Forcing, StripGrid, StripSolver};
use roughflow::geometry::{DomainParams, RoughProfile};
use roughflow::ns::{NsConfig, NsSolver};
use roughflow::Exec;
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [
    ("parallel", Exec::Parallel),
    ("sequential", Exec::Sequential),
];

fn domain(eps: f64) -> DomainParams {
    DomainParams::new(eps, 2, RoughProfile::default_study()).unwrap()
}

fn ns_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("ns_step");
    g.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = NsConfig::new(domain(0.125), 1e-4);
        cfg.grid.levels = 64;
        cfg.dt = 1e-3;
        let s = NsSolver::new(cfg, exec).unwrap();
        let mut st = s.init_state();
        for _ in 0..20 {
            st = s.step(&st, None).unwrap();
        }
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| s.step(black_box(&st), None).unwrap())
        });
    }
    g.finish();
}

fn gradient_curl(c: &mut Criterion) {
    let mut g = c.benchmark_group("gradient_curl_check");
    let r = Region::rescaled_cell(&domain(0.0625));
    let v = FlattenedField::random_stream(&r, 4, &mut ChaCha8Rng::seed_from_u64(1));
    for (name, exec) in MODES {
        let q = Quadrature::new(
            &r,
            QuadGrid::default(),
            Vertical::Decaying { scale: 0.5 },
            exec,
        )
        .unwrap();
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| gradient_curl_check(|x| v.perp_gradient(x), black_box(&q)).unwrap())
        });
    }
    g.finish();
}

fn cell_and_strip(c: &mut Criterion) {
    let mut g = c.benchmark_group("setup");
    g.sample_size(10);
    let d = domain(0.25);
    g.bench_function("cell_domain", |b| {
        b.iter(|| CellDomain::new(black_box(&d), CellGrid::default()).unwrap())
    });
    for (name, exec) in MODES {
        let s = StripSolver::new(StripGrid::default(), exec).unwrap();
        let f = Forcing::default_study();
        let omega = s.values(&s.spectral(&nalgebra::DMatrix::from_fn(
            s.x2().len(),
            s.x1().len(),
            |j, i| f.curl(0.5, s.x1()[i], s.x2()[j]),
        )));
        let bottom = vec![0.0; s.x1().len()];
        g.bench_function(BenchmarkId::new("strip_poisson", name), |b| {
            b.iter(|| s.poisson(black_box(&omega), &bottom, 0.0))
        });
    }
    g.finish();
}

criterion_group!(benches, ns_step, gradient_curl, cell_and_strip);
criterion_main!(benches);
