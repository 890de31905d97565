//! Parallel against sequential execution of the Monte Carlo and quadrature
//! kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use reebflow::coeffs::{CoefficientTables, PlaneQuadrature, TableOptions, Weight};
use reebflow::exec::Exec;
use reebflow::fastflow::{FastFlow, FastFlowConfig, Observable};
use reebflow::hamiltonian::{Hamiltonian, HamiltonianSpec};
use reebflow::reeb::{build_reeb, Reeb};

fn setup() -> (Hamiltonian, Reeb, CoefficientTables) {
    let h = Hamiltonian::new(HamiltonianSpec::two_well(), 3.0).unwrap();
    let cps = h.find_critical_points(128).unwrap().points;
    let reeb = build_reeb(&h, &cps, 2.0, 300).unwrap();
    let tables = CoefficientTables::build(&h, &reeb, &TableOptions::default()).unwrap();
    (h, reeb, tables)
}

fn bench(c: &mut Criterion) {
    let (h, reeb, tables) = setup();
    let weight = Weight::for_graph(&reeb.graph, 2.0, None).unwrap();
    let x1 = |x: [f64; 2]| x[0];
    let obs: [Observable<'_>; 1] = [&x1];
    let mut g = c.benchmark_group("exec");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let name = format!("{exec:?}");
        let cfg = FastFlowConfig { eps: 0.05, dt: 2e-3, paths: 2000, seed: 7, exec, ..Default::default() };
        let flow = FastFlow::new(&h, &reeb, &tables, cfg).unwrap();
        g.bench_with_input(BenchmarkId::new("semigroup_mc", &name), &flow, |b, f| {
            b.iter(|| f.estimate_semigroup([-1.0, 0.3], &[0.1], &obs).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("plane_quadrature", &name), &exec, |b, &e| {
            b.iter(|| PlaneQuadrature::new(&h, &reeb, 200, e).unwrap().integrate(&weight, |p| p.x[0] * p.x[0]))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
