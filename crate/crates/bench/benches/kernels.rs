use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pyrdepth_bench::{conv_weights, random_tensor};
use pyrdepth_core::loss::ssim_map;
use pyrdepth_core::tensor::conv2d;
use pyrdepth_core::{Activation, Shape};

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d");
    // (in, out, h, w): first encoder layer, a mid-level decoder layer, the coarsest layer.
    for (cin, cout, h, w) in [(3, 16, 256, 512), (72, 96, 64, 128), (192, 192, 4, 8)] {
        let x = random_tensor(Shape::new(1, cin, h, w), 1);
        let weights = conv_weights(cout, cin, 2);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{cin}to{cout}_{h}x{w}")), &x, |b, x| {
            b.iter(|| conv2d(x, &weights, 1, Activation::LeakyRelu(0.2)).unwrap())
        });
    }
    group.finish();
}

fn ssim(c: &mut Criterion) {
    let a = random_tensor(Shape::new(1, 3, 128, 256), 3);
    let b = random_tensor(Shape::new(1, 3, 128, 256), 4);
    c.bench_function("ssim_map_128x256", |bench| bench.iter(|| ssim_map(&a, &b).unwrap()));
}

criterion_group!(benches, conv, ssim);
criterion_main!(benches);
