//! Benchmarks for the pipeline's hot paths: metric computation, batch
//! scheduling, the convolution forward pass and face detection.

use criterion::{criterion_group, criterion_main, Criterion};
use image::{Rgb, RgbImage};
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use dfdet_core::classifier::build_model;
use dfdet_core::evaluator::{metrics_from_matrix, ConfusionMatrix};
use dfdet_core::facepipe::detector::{FaceDetector, LumaBlobDetector};
use dfdet_core::trainer::make_batches;

fn bench_metrics(c: &mut Criterion) {
    let m = ConfusionMatrix {
        tp: 1081,
        tn: 1172,
        fp: 1,
        fn_: 99,
    };
    c.bench_function("metrics_from_matrix", |b| {
        b.iter(|| metrics_from_matrix(black_box(&m)))
    });
}

fn bench_batches(c: &mut Criterion) {
    c.bench_function("make_batches_10k", |b| {
        b.iter(|| make_batches(black_box(10_000), 32, 7, 3))
    });
}

fn bench_forward(c: &mut Criterion) {
    let model = build_model("reference-small", false, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut x = Array4::<f32>::zeros((1, 3, 224, 224));
    for v in x.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    c.bench_function("backbone_forward_1x224", |b| {
        b.iter(|| model.forward(black_box(&x)).unwrap())
    });
}

fn bench_detector(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut frame = RgbImage::from_fn(256, 256, |_, _| {
        let v = rng.random_range(0u8..24);
        Rgb([v, v, v])
    });
    for y in 80..160 {
        for x in 90..170 {
            frame.put_pixel(x, y, Rgb([230, 228, 225]));
        }
    }
    c.bench_function("luma_detector_256", |b| {
        b.iter(|| LumaBlobDetector.detect(black_box(&frame)).unwrap())
    });
}

criterion_group!(benches, bench_metrics, bench_batches, bench_forward, bench_detector);
criterion_main!(benches);
