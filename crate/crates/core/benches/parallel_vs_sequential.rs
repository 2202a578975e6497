use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use torus_galerkin::center_manifold::{duhamel_update, prepare_cutoff, ManifoldJet, ManifoldProblem, QuadratureConfig, SplitPolicy};
use torus_galerkin::linear_ops::{excluded_measure_estimate_with, EvolutionOperatorSpec};
use torus_galerkin::par::Execution;
use torus_galerkin::spectral_space::algebra_constant;
use torus_galerkin::{ScalarFunctionSpec, SpaceParams};

const MODES: [(&str, Execution); 2] = [("auto", Execution::Auto), ("sequential", Execution::Sequential)];

fn measure(c: &mut Criterion) {
    let mut g = c.benchmark_group("excluded_measure");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| excluded_measure_estimate_with(2, 5.0, black_box(0.03), 8, 50_000, 1, exec))
        });
    }
    g.finish();
}

fn algebra(c: &mut Criterion) {
    let p = SpaceParams::new(0.0, 1.6).unwrap();
    let mut g = c.benchmark_group("algebra_constant");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| algebra_constant(2, 16, p, 32, 7, exec).unwrap()));
    }
    g.finish();
}

fn duhamel(c: &mut Criterion) {
    let spec = EvolutionOperatorSpec::new(vec![1.37], vec![1.0], 2.0);
    let f = ScalarFunctionSpec::parse("u^2 + cos(theta)*cos(x)").unwrap();
    let mut g = c.benchmark_group("duhamel_update");
    g.sample_size(10);
    for (name, exec) in MODES {
        let quad = QuadratureConfig { exec, ..Default::default() };
        let problem = ManifoldProblem::new(&spec, &f, 1e-3, 3, SplitPolicy::default(), quad, prepare_cutoff(3, 4.0).unwrap()).unwrap();
        let jet = ManifoldJet::random(&problem, 1e-3, 1);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| duhamel_update(&jet, &problem).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, measure, algebra, duhamel);
criterion_main!(benches);
