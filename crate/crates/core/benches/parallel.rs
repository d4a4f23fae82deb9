use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use orbitcyl::action::{estimate_kappa_on_range, KappaSampling};
use orbitcyl::expr::Expr;
use orbitcyl::limit_set::loop_distance;
use orbitcyl::mane::{mane_estimate, MagneticTerm, ManeProblem};
use orbitcyl::{systems, Execution};

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn kappa(c: &mut Criterion) {
    let (sys, ss) = systems::anisotropic();
    let sampling = KappaSampling { nodes: 4, samples_per_node: 32, bounds: vec![(-2.0, 2.0); 4], epsilon: Some(0.1), seed: 3 };
    let mut g = c.benchmark_group("kappa_sampling");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| estimate_kappa_on_range(&sys, &ss, 0.0, 0.9, &sampling, exec).unwrap()));
    }
    g.finish();
}

fn mane(c: &mut Criterion) {
    let e = |s: &str| Expr::parse(s, 2).unwrap();
    let prob = ManeProblem::new(DMatrix::identity(2, 2), e("0.3*cos(q1+q2)"), MagneticTerm::Exact { primitive: vec![e("0"), e("sin(q1)")], form: None }).unwrap();
    let mut g = c.benchmark_group("mane_restarts");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| mane_estimate(&prob, 2, 16, exec).unwrap()));
    }
    g.finish();
}

fn distances(c: &mut Criterion) {
    let sigmas: Vec<f64> = (0..24).map(|i| 0.04 * i as f64).collect();
    let cyl = systems::synthetic_cylinder(&sigmas, |s| (1.0 + 2.0 * s).sqrt(), |_| 6.0, 256);
    let pairs: Vec<(usize, usize)> = (0..cyl.len()).flat_map(|i| (i + 1..cyl.len()).map(move |j| (i, j))).collect();
    let mut g = c.benchmark_group("distance_matrix");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::new(name, pairs.len()), &pairs, |b, pairs| {
            b.iter(|| exec.map(pairs, |&(i, j)| loop_distance(&cyl.orbits[i], &cyl.orbits[j])))
        });
    }
    g.finish();
}

criterion_group!(benches, kappa, mane, distances);
criterion_main!(benches);
