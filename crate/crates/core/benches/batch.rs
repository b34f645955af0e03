use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use uci_core::clips::Label;
use uci_core::encoder::{ClipTensor, VideoEncoder};
use uci_core::model::{Model, ModelConfig, Sample};
use uci_core::{parallel, seed_keys};

fn batch(n: usize, frames: usize, size: usize) -> Vec<Sample> {
    let mut rng = uci_core::seed::rng(seed_keys!(7u64, "bench"));
    (0..n)
        .map(|i| Sample {
            clip: ClipTensor {
                frames,
                height: size,
                width: size,
                data: (0..3 * frames * size * size).map(|_| rng.random::<f64>()).collect(),
            },
            label: if i % 2 == 0 { Label::Real } else { Label::Fake },
        })
        .collect()
}

/// Encoder + multi-view forward and backward for one clip.
fn per_clip(model: &Model, s: &Sample) -> f64 {
    let (rep, cache) = model.encoder.forward(&s.clip);
    let out = model.mve.forward(&rep).unwrap();
    let mut g = model.zeros_like();
    let drep = model.mve.backward(
        &rep,
        &out,
        &vec![0.0; out.z.len()],
        out.prob - s.label.as_f64(),
        &mut g.mve,
    );
    model.encoder.backward(&cache, &drep, &mut g.encoder);
    out.logit
}

fn per_clip_map(c: &mut Criterion) {
    let model = Model::new(ModelConfig::default(), 0).unwrap();
    let mut group = c.benchmark_group("per_clip_fwd_bwd");
    for n in [4usize, 16] {
        let samples = batch(n, 8, 64);
        group.bench_with_input(BenchmarkId::new("parallel", n), &samples, |b, s| {
            b.iter(|| black_box(parallel::map(s, |x| per_clip(&model, x))))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &samples, |b, s| {
            b.iter(|| black_box(parallel::map_seq(s, |x| per_clip(&model, x))))
        });
    }
    group.finish();
}

fn batch_gradients(c: &mut Criterion) {
    let model = Model::new(ModelConfig::default(), 0).unwrap();
    let samples = batch(16, 8, 64);
    c.bench_function("batch_gradients_16", |b| {
        b.iter(|| black_box(model.batch_gradients(&samples, 0.5, 0.1).unwrap()))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(5));
    targets = per_clip_map, batch_gradients
}
criterion_main!(benches);
