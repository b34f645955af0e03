use proptest::prelude::*;
use uci_core::attention::{pairwise_att, HeadDims, HeadParams};
use uci_core::augment::{self, AugmentConfig, AugmentMode};
use uci_core::checkpoint::Checkpoint;
use uci_core::clips::{load_manifest, write_manifest, ClipRecord, Frame, Label, Split, VideoClip};
use uci_core::contrastive::{loss_fake, loss_real, BatchPartition};
use uci_core::eval::{auc_of, video_score};
use uci_core::mve::{expand, se_weights, MveDims, MveParams};
use uci_core::params::Tensor;
use uci_core::seed_keys;

fn batch(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dim), n)
}

fn labels_with_both(n: usize) -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec(prop::bool::ANY, n).prop_map(|bits| {
        let mut l: Vec<Label> = bits
            .into_iter()
            .map(|b| if b { Label::Fake } else { Label::Real })
            .collect();
        l[0] = Label::Real;
        let last = l.len() - 1;
        l[last] = Label::Fake;
        l
    })
}

const DIMS: HeadDims = HeadDims {
    heads: 2,
    head_dim: 3,
    input_dim: 6,
    combine: uci_core::attention::HeadCombine::Mean,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_is_symmetric(z in batch(5, 6), seed in 0u64..1000) {
        let p = HeadParams::new(DIMS, seed).unwrap();
        let (m, _) = pairwise_att(&z, &p).unwrap();
        prop_assert!(m.is_symmetric());
    }

    #[test]
    fn attention_follows_batch_permutation(z in batch(5, 6), perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle()) {
        let p = HeadParams::new(DIMS, 1).unwrap();
        let (m, _) = pairwise_att(&z, &p).unwrap();
        let zp: Vec<Vec<f64>> = perm.iter().map(|&i| z[i].clone()).collect();
        let (mp, _) = pairwise_att(&zp, &p).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                prop_assert!((mp.get(i, j) - m.get(perm[i], perm[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn swapping_roles_swaps_the_two_losses(z in batch(6, 6), split in 2usize..5) {
        let p = HeadParams::new(DIMS, 2).unwrap();
        let (m, _) = pairwise_att(&z, &p).unwrap();
        let part = BatchPartition::new((0..split).collect(), (split..6).collect());
        prop_assume!(part.is_ok());
        let part = part.unwrap();
        let sw = part.swapped();
        prop_assert_eq!(loss_real(&m, &part, 0.1).unwrap(), loss_fake(&m, &sw, 0.1).unwrap());
        prop_assert_eq!(loss_fake(&m, &part, 0.1).unwrap(), loss_real(&m, &sw, 0.1).unwrap());
    }

    #[test]
    fn auc_is_in_range_and_rank_invariant(
        (scores, labels) in (4usize..60).prop_flat_map(|n| (prop::collection::vec(0.0f64..1.0, n), labels_with_both(n))),
        a in 0.1f64..5.0,
        b in -3.0f64..3.0,
    ) {
        let base = auc_of(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let moved: Vec<f64> = scores.iter().map(|s| (a * s + b).exp()).collect();
        prop_assert_eq!(auc_of(&moved, &labels).unwrap(), base);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc_of(&flipped, &labels).unwrap() - (1.0 - base)).abs() < 1e-12);
    }

    #[test]
    fn video_score_ignores_clip_order(
        probs in prop::collection::vec(0.0f64..=1.0, 1..20).prop_shuffle(),
    ) {
        let mut sorted = probs.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(video_score(&probs).unwrap(), video_score(&sorted).unwrap());
    }

    #[test]
    fn view_weights_lie_in_the_open_unit_interval(rep in prop::collection::vec(-3.0f64..3.0, 16), seed in 0u64..100) {
        let p = MveParams::new(MveDims { rep_dim: 16, views: 8, ratio: 4, kernel: 3 }, seed).unwrap();
        let w = se_weights(&expand(&rep, &p).unwrap(), &p).unwrap();
        prop_assert!(w.0.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn checkpoint_bytes_round_trip(
        arrays in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 1..12), 0..4),
        step in 0u64..1_000_000,
    ) {
        let ck = Checkpoint {
            meta: serde_json::json!({ "step": step }),
            arrays: arrays
                .into_iter()
                .enumerate()
                .map(|(i, d)| (format!("t{i}"), Tensor::from_vec(&[d.len()], d)))
                .collect(),
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, ck);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn augmentation_keeps_frame_count_and_size(
        frames in 2usize..6,
        side in 64usize..80,
        mode in prop_oneof![Just(AugmentMode::Off), Just(AugmentMode::TemporalPreserved), Just(AugmentMode::NonTemporal)],
        seed in 0u64..1000,
    ) {
        let clip = VideoClip::new(
            (0..frames).map(|t| Frame::filled(side, side, [t as u8 * 20, 90, 10]).unwrap()).collect(),
            "p",
        )
        .unwrap();
        let cfg = AugmentConfig { mode, ..AugmentConfig::scaled_to(64) };
        let mut rng = uci_core::seed::rng(seed_keys!(seed, "prop"));
        let out = augment::apply(&clip, &mut rng, &cfg).unwrap();
        prop_assert_eq!(out.len(), frames);
        prop_assert!(out.frames().iter().all(|f| f.width() == 64 && f.height() == 64));
    }

    #[test]
    fn manifest_round_trips(
        rows in prop::collection::vec(("[a-z]{1,6}", prop::bool::ANY, "[A-D]", 0usize..3, 1usize..500), 1..8),
    ) {
        let tmp = tempfile::tempdir().unwrap();
        let records: Vec<ClipRecord> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (id, fake, domain, split, frames))| ClipRecord {
                video_id: format!("{id}{i}"),
                frame_dir: tmp.path().join("videos").join(format!("{id}{i}")),
                label: if fake { Label::Fake } else { Label::Real },
                domain,
                split: [Split::Train, Split::Val, Split::Test][split],
                frame_count: frames,
            })
            .collect();
        let path = tmp.path().join("manifest.tsv");
        write_manifest(&path, &records).unwrap();
        prop_assert_eq!(load_manifest(&path).unwrap(), records);
    }
}
