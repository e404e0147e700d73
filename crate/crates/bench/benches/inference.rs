use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pyrdepth_bench::{default_network, random_tensor};
use pyrdepth_core::{ExitLevel, Shape};

fn infer(c: &mut Criterion) {
    let net = default_network(0);
    let image = random_tensor(Shape::new(1, 3, 256, 512), 7);
    let mut group = c.benchmark_group("infer_256x512");
    group.sample_size(20);
    for exit in [ExitLevel::H, ExitLevel::Q, ExitLevel::E] {
        group.bench_with_input(BenchmarkId::from_parameter(exit), &exit, |b, &exit| {
            b.iter(|| net.infer(&image, exit).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, infer);
criterion_main!(benches);
