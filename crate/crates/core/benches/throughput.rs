//! Data-parallel kernels on the default rayon pool versus a one-thread
//! pool. Build with `--no-default-features` to measure the sequential
//! fallback itself.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hazelab::haze::{synthesize_variants, synthetic_depth, synthetic_scene, DepthKind};
use hazelab::metrics::ssim;
use hazelab::nn::ConvSpec;
use hazelab::{Tape, Tensor};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let backend = if hazelab::par::is_parallel() { "rayon" } else { "sequential" };
    let n = rayon::current_num_threads();
    let mut out = vec![(
        format!("{backend}-1"),
        rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
    )];
    if n > 1 {
        out.push((
            format!("{backend}-{n}"),
            rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap(),
        ));
    }
    out
}

fn conv(c: &mut Criterion) {
    let spec = ConvSpec::same(16, 16, 3, 3);
    let x = Tensor::<f32>::randn(&[4, 16, 64, 64], 1, 1.0).unwrap();
    let w = Tensor::<f32>::randn(&[16, 16, 3, 3], 2, 0.1).unwrap();
    let b = Tensor::<f32>::zeros(&[16]).unwrap();
    let mut g = c.benchmark_group("conv2d_fwd_bwd_4x16x64x64");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| {
                pool.install(|| {
                    let mut tape = Tape::new();
                    let (xv, wv, bv) = (tape.param(x.clone()), tape.param(w.clone()), tape.param(b.clone()));
                    let y = tape.conv2d(xv, wv, bv, &spec).unwrap();
                    let l = tape.sum(y);
                    tape.backward(l).unwrap();
                })
            })
        });
    }
    g.finish();
}

fn synthesis(c: &mut Criterion) {
    let clear = synthetic_scene(320, 240, 3).unwrap();
    let depth = synthetic_depth(240, 320, DepthKind::Blobs, 3).unwrap();
    let mut g = c.benchmark_group("synthesize_3_variants_320x240");
    g.throughput(Throughput::Elements(3 * 320 * 240));
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| pool.install(|| synthesize_variants(&clear, &depth, 3, 9).unwrap()))
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let a = synthetic_scene(256, 256, 5).unwrap();
    let depth = synthetic_depth(256, 256, DepthKind::Radial, 5).unwrap();
    let b = synthesize_variants(&a, &depth, 1, 5).unwrap().remove(0).image;
    let mut g = c.benchmark_group("ssim_256x256");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| pool.install(|| ssim(&a, &b).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, conv, synthesis, metrics);
criterion_main!(benches);
