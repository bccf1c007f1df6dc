//! One OBBT pass on case14 with a single worker against every available core.
//! Build with `--no-default-features` to time the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qcopf::netdata::parse_case;
use qcopf::obbt::{run, ObbtConfig};
use qcopf::par::available_workers;
use qcopf::relax::{BoundState, RelaxationKind};
use std::path::PathBuf;

fn obbt_pass(c: &mut Criterion) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/pglib/pglib_opf_case14_ieee.m");
    let net = parse_case(&std::fs::read_to_string(path).unwrap()).unwrap();
    let init = BoundState::from_network(&net);
    let mut group = c.benchmark_group("obbt_case14_tlm_pass");
    group.sample_size(10);
    let mut counts = vec![1, available_workers()];
    counts.dedup();
    for workers in counts {
        let cfg = ObbtConfig { kind: RelaxationKind::Tlm, max_iterations: 1, workers, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(workers), &cfg, |b, cfg| b.iter(|| run(&net, &init, cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, obbt_pass);
criterion_main!(benches);
