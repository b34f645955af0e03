#![cfg(feature = "parallel")]

use rand::Rng;
use uci_core::clips::Label;
use uci_core::encoder::ClipTensor;
use uci_core::model::{Model, ModelConfig, Sample};
use uci_core::seed_keys;

fn samples(n: usize) -> Vec<Sample> {
    let mut rng = uci_core::seed::rng(seed_keys!(11u64, "threads"));
    (0..n)
        .map(|i| Sample {
            clip: ClipTensor {
                frames: 8,
                height: 64,
                width: 64,
                data: (0..3 * 8 * 64 * 64).map(|_| rng.random::<f64>()).collect(),
            },
            label: if i % 2 == 0 { Label::Real } else { Label::Fake },
        })
        .collect()
}

#[test]
fn batch_gradients_do_not_depend_on_thread_count() {
    let model = Model::new(ModelConfig::default(), 3).unwrap();
    let batch = samples(8);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| model.batch_gradients(&batch, 0.5, 0.1).unwrap())
    };
    let (l1, g1) = run(1);
    let (l4, g4) = run(4);
    assert_eq!(l1, l4);
    assert_eq!(g1, g4);
}
