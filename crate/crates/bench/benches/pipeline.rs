use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gsnet_core::synth::{self, SceneSpec};
use gsnet_core::{build_training_set, net, render, train, KdIndex, NetworkWeights, Vec3};

fn scene() -> synth::Scene {
    synth::generate_scene(&SceneSpec { dense_count: 20_000, ..SceneSpec::default() }).unwrap()
}

fn knn(c: &mut Criterion) {
    let s = scene();
    let points: Vec<Vec3> = s.dense.iter().map(|p| p.position).collect();
    c.bench_function("kd_build_20k", |b| b.iter(|| KdIndex::build(black_box(&points)).unwrap()));
    let index = KdIndex::build(&points).unwrap();
    c.bench_function("knn5_1k_queries", |b| {
        b.iter(|| {
            for q in s.sparse.iter().take(1000) {
                black_box(index.knn(&q.position, 5).unwrap());
            }
        })
    });
}

fn network(c: &mut Criterion) {
    let s = scene();
    let gt = synth::heuristic_gaussians(&s.dense).unwrap();
    let samples = build_training_set(&s.sparse, &gt).unwrap();
    let weights = NetworkWeights::random(Default::default(), 0);
    c.bench_function("forward_backward_64", |b| {
        let mut grads = weights.zero_gradients();
        b.iter(|| {
            for sample in samples.iter().take(64) {
                black_box(net::forward_backward(sample, &weights, &mut grads).unwrap());
            }
        })
    });
    c.bench_function("predict_scene_1k", |b| b.iter(|| train::predict_scene(black_box(&s.sparse), &weights).unwrap()));
}

fn rasterize(c: &mut Criterion) {
    let s = scene();
    let gt = synth::heuristic_gaussians(&s.dense).unwrap();
    c.bench_function("render_20k_160x120", |b| b.iter(|| render::render(black_box(&gt), &s.cameras[0])));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = knn, network, rasterize
}
criterion_main!(benches);
