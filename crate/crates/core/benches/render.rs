use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deformsplat::math::Vec3;
use deformsplat::raster::{rasterize_backward, render, RenderSettings};
use deformsplat::testing;

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let mut out = vec![(
        "sequential".to_string(),
        rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool"),
    )];
    let n = std::thread::available_parallelism().map_or(1, |n| n.get());
    out.push((
        format!("rayon-{n}"),
        rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool"),
    ));
    out
}

fn bench_render(c: &mut Criterion) {
    let mut rng = testing::rng(6000);
    let gs = testing::random_gaussians(&mut rng, 10_000, 1.0, (-4.5, -3.0), 1);
    let cam = testing::random_camera(&mut rng, 256, 256);
    let settings = RenderSettings::default();
    let anchors: Vec<Vec3> = gs.iter().map(|g| g.position).collect();
    let d_image = vec![1.0; 256 * 256 * 3];

    let mut group = c.benchmark_group("render-10k-256");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("forward", &name), |b| {
            b.iter(|| pool.install(|| render(&gs, &cam, &settings).expect("valid scene")))
        });
        group.bench_function(BenchmarkId::new("forward-backward", &name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let out = render(&gs, &cam, &settings).expect("valid scene");
                    rasterize_backward(&out, &gs, &anchors, &d_image).expect("backward")
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_render);
criterion_main!(benches);
