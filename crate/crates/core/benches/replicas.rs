//! Replica-level throughput: the parallel driver (rayon, default feature)
//! against the sequential fallback, on the two workloads that dominate
//! experiments: graph sampling with component extraction, and limit-path
//! simulation with excursion extraction.
//!
//! Run `cargo bench -p rank2sim-core` for the parallel build and
//! `cargo bench -p rank2sim-core --no-default-features` to measure the
//! sequential driver alone.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rank2sim_core::graphgen::{top_components, GraphSampler};
use rank2sim_core::levy::{default_horizon, simulate_w, zeta_of_grid};
use rank2sim_core::params::{LimitTriple, ModelSpec, WeightVector};
use rank2sim_core::parallel::{replica_map, replica_map_seq};

fn er_spec(n: usize) -> ModelSpec {
    let w = WeightVector::constant((n as f64).powf(-2.0 / 3.0), n);
    let c_n = 1.0 / w.sigma(2);
    let q = [[0.5 * c_n, 0.5 * c_n], [0.5 * c_n, 0.5 * c_n]];
    ModelSpec::new(w.clone(), w, q, None).unwrap()
}

fn bench_graph_replicas(c: &mut Criterion) {
    let spec = er_spec(20_000);
    let sampler = GraphSampler::new(&spec);
    let replicas = 32usize;
    let work = |_, mut rng| {
        let g = sampler.sample(&mut rng);
        top_components(&g, 3).top.first().map(|c| c.mass[0]).unwrap_or(0.0)
    };

    let mut group = c.benchmark_group("graph_replicas");
    group.sample_size(20);
    group.bench_with_input(BenchmarkId::new("parallel", replicas), &replicas, |b, &n| {
        b.iter(|| replica_map(1, 0, n, work))
    });
    group.bench_with_input(BenchmarkId::new("sequential", replicas), &replicas, |b, &n| {
        b.iter(|| replica_map_seq(1, 0, n, work))
    });
    group.finish();
}

fn bench_zeta_replicas(c: &mut Criterion) {
    let triple = LimitTriple::new(0.25, vec![], 0.0).assert_in_domain();
    let horizon = default_horizon(&triple);
    let step = 1e-4 * horizon;
    let replicas = 64usize;
    let work = |_, mut rng| {
        let s = simulate_w(&triple, step, horizon, &mut rng);
        zeta_of_grid(&s.path).lengths.first().copied().unwrap_or(0.0)
    };

    let mut group = c.benchmark_group("zeta_replicas");
    group.sample_size(20);
    group.bench_with_input(BenchmarkId::new("parallel", replicas), &replicas, |b, &n| {
        b.iter(|| replica_map(2, 0, n, work))
    });
    group.bench_with_input(BenchmarkId::new("sequential", replicas), &replicas, |b, &n| {
        b.iter(|| replica_map_seq(2, 0, n, work))
    });
    group.finish();
}

criterion_group!(benches, bench_graph_replicas, bench_zeta_replicas);
criterion_main!(benches);
