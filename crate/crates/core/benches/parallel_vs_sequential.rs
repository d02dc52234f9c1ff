//! Parallel vs sequential throughput on the batch-level workloads that go
//! through the execution-mode helpers: dataset synthesis and per-sample
//! quality metrics.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use facedepth::depth::{build_dataset, DegradeConfig, SynthSpec};
use facedepth::metrics::{psnr, rmse, ssim};
use facedepth::par::{map_with, ExecMode};

fn modes() -> [(&'static str, ExecMode); 2] {
    [
        ("parallel", ExecMode::Parallel),
        ("sequential", ExecMode::Sequential),
    ]
}

fn bench_dataset_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("dataset_build");
    g.sample_size(10);
    let spec = SynthSpec {
        train_identities: 6,
        test_identities: 2,
        per_identity: 2,
        seed: 11,
        degrade: DegradeConfig::default(),
    };
    for (name, mode) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                let dir = tempfile::tempdir().unwrap();
                build_dataset(dir.path(), &spec, mode).unwrap()
            });
        });
    }
    g.finish();
}

fn bench_batch_metrics(c: &mut Criterion) {
    let mut g = c.benchmark_group("batch_metrics");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs: Vec<(Array2<f64>, Array2<f64>)> = (0..32)
        .map(|_| {
            let a = Array2::from_shape_fn((128, 128), |_| rng.gen_range(0.0..1.0));
            let b = a.mapv(|v: f64| (v + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0));
            (a, b)
        })
        .collect();
    for (name, mode) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                map_with(mode, pairs.clone(), |(x, y)| {
                    (
                        psnr(&x, &y).unwrap(),
                        ssim(&x, &y).unwrap(),
                        rmse(&x, &y).unwrap(),
                    )
                })
            });
        });
    }
    g.finish();
}

criterion_group!(benches, bench_dataset_build, bench_batch_metrics);
criterion_main!(benches);
