use std::hint::black_box;

use bsr::harness::{gen_gaussian_matrix, run_experiment_with, ExperimentConfig};
use bsr::par::Exec;
use bsr::rip::block_rip_constant_with;
use bsr::BlockShape;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn rip_enumeration(c: &mut Criterion) {
    let mut group = c.benchmark_group("block_rip");
    group.sample_size(10);
    for (l, d, order) in [(16, 2, 3), (20, 2, 4)] {
        let a = gen_gaussian_matrix(l * d, BlockShape::new(l, d).unwrap(), 7, true).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, format!("L{l}_d{d}_K{order}")), &a, |b, a| {
                b.iter(|| block_rip_constant_with(black_box(a), order, 10_000_000, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn experiment_grid(c: &mut Criterion) {
    let cfg: ExperimentConfig = serde_json::from_str(
        r#"{"family":"gaussian_recovery","k":[2,3],"d":[2],"l":12,"m":24,"trials":40,"seed":11}"#,
    )
    .unwrap();
    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| run_experiment_with(black_box(&cfg), exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, rip_enumeration, experiment_grid);
criterion_main!(benches);
