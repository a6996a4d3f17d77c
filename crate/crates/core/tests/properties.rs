use std::collections::HashSet;

use milhard::bagdata::{
    augment_training_set, bag_size_stats, generate_synthetic, Bag, Dataset, Instance, Origin,
    SynthConfig,
};
use milhard::metrics::{confusion, roc_auc_exact, run_metrics};
use milhard::milnet::{forward, Dims};
use milhard::mining::{
    build_hard_pool, extract_features, generate_bags, GenConfig, Strategy as GenStrategy,
};
use milhard::optim::{init_model, train, AdamHyper};
use milhard::preprocess::{histogram, histogram_equalize, Dihedral, Patch};
use proptest::prelude::*;

fn patch_strategy() -> impl Strategy<Value = Patch> {
    (1usize..6, 1usize..4).prop_flat_map(|(side, channels)| {
        prop::collection::vec(any::<u8>(), side * side * channels)
            .prop_map(move |data| Patch::new(side, channels, data, (0, 0)).unwrap())
    })
}

fn channel_histograms(p: &Patch) -> Vec<[u64; 256]> {
    (0..p.channels)
        .map(|c| histogram(p.data.iter().skip(c).step_by(p.channels).copied()))
        .collect()
}

fn bits(data: &[f64]) -> Vec<u64> {
    data.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #[test]
    fn equalization_is_idempotent_up_to_one_count(p in patch_strategy()) {
        let once = histogram_equalize(&p);
        let twice = histogram_equalize(&once);
        for (a, b) in channel_histograms(&once).iter().zip(&channel_histograms(&twice)) {
            for v in 0..256 {
                prop_assert!(a[v].abs_diff(b[v]) <= 1, "bin {v}: {} vs {}", a[v], b[v]);
            }
        }
    }

    #[test]
    fn dihedral_preserves_pixel_multiset(p in patch_strategy(), k in 0usize..8) {
        let g = Dihedral::all().nth(k).unwrap();
        let mut before = p.data.clone();
        let mut after = g.apply(&p).data;
        before.sort_unstable();
        after.sort_unstable();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn forward_is_permutation_invariant(
        seed in any::<u64>(),
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..8),
        rotate in 0usize..8,
    ) {
        let dims = Dims { feature_dim: 3, hidden: vec![5], embed_dim: 4, attention_dim: 3 };
        let model = init_model::<f64>(&dims, 2.0, seed).unwrap();
        let bag = Bag::new("p", 1, rows.iter().cloned().map(Instance::new).collect(), Origin::Natural).unwrap();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        let r = rotate % shuffled.len();
        shuffled.rotate_left(r);
        let other = Bag::new("q", 1, shuffled.into_iter().map(Instance::new).collect(), Origin::Natural).unwrap();
        let a = forward(&model, &bag).unwrap();
        let b = forward(&model, &other).unwrap();
        prop_assert!((a.probability - b.probability).abs() <= 1e-9);
        prop_assert!((a.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn fpr_is_one_minus_specificity(
        pairs in prop::collection::vec((0.0f64..=1.0, 0u8..2), 1..40),
    ) {
        let probs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let conf = confusion(&probs, &labels, 0.5).unwrap();
        let m = run_metrics(&conf, &probs, &labels).unwrap();
        let negatives = labels.iter().filter(|&&l| l == 0).count();
        let true_negatives = probs.iter().zip(&labels).filter(|&(&p, &l)| l == 0 && p < 0.5).count();
        match m.fpr {
            Some(fpr) => prop_assert!((fpr - (1.0 - true_negatives as f64 / negatives as f64)).abs() < 1e-12),
            None => prop_assert_eq!(negatives, 0),
        }
    }

    #[test]
    fn flipped_scores_complement_auc(
        pairs in prop::collection::vec((0u32..1_000_000, 0u8..2), 2..40),
    ) {
        let distinct: HashSet<u32> = pairs.iter().map(|p| p.0).collect();
        prop_assume!(distinct.len() == pairs.len());
        let probs: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 1e6).collect();
        let flipped: Vec<f64> = probs.iter().map(|p| 1.0 - p).collect();
        let labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let a = roc_auc_exact(&probs, &labels).unwrap();
        let b = roc_auc_exact(&flipped, &labels).unwrap();
        match (a, b) {
            (Some(a), Some(b)) => prop_assert_eq!(a + b, num_rational::Ratio::from_integer(1)),
            (a, b) => prop_assert!(a.is_none() && b.is_none()),
        }
    }
}

fn confuser_data(seed: u64) -> Dataset<f64> {
    let config = SynthConfig {
        n_bags: 40,
        seed,
        ..SynthConfig::with_dim(4)
    };
    generate_synthetic(&config).unwrap()
}

#[test]
fn mined_bags_come_only_from_negative_bags() {
    let data = confuser_data(11);
    let dims = Dims {
        feature_dim: 4,
        hidden: vec![],
        embed_dim: 4,
        attention_dim: 2,
    };
    let model = init_model::<f64>(&dims, 2.0, 5).unwrap();
    let pool = build_hard_pool(&model, &data).unwrap();
    assert!(
        !pool.is_empty(),
        "untrained model should flag some negatives"
    );

    let negative_rows: HashSet<Vec<u64>> = data
        .bags()
        .iter()
        .filter(|b| b.label == 0)
        .flat_map(|b| b.instances.iter().map(|i| bits(&i.features)))
        .collect();
    let negative_ids: HashSet<&str> = data
        .bags()
        .iter()
        .filter(|b| b.label == 0)
        .map(|b| b.bag_id.as_str())
        .collect();
    for e in &pool.entries {
        assert!(negative_ids.contains(e.source_bag_id.as_str()));
    }

    let features = extract_features(&model, &pool).unwrap();
    for strategy in GenStrategy::ALL {
        let config = GenConfig {
            strategy,
            bag_count: 12,
            size_stats: bag_size_stats(&data),
            clusters: pool.len().min(3),
            seed: 9,
        };
        let bags = generate_bags(&pool, &features, &config).unwrap();
        for bag in &bags {
            assert_eq!(bag.label, 0);
            assert_eq!(bag.origin, strategy.origin());
            for inst in &bag.instances {
                assert!(negative_rows.contains(&bits(&inst.features)));
            }
        }
    }
}

#[test]
fn augmented_retraining_round_trip() {
    let data = confuser_data(11);
    let dims = Dims {
        feature_dim: 4,
        hidden: vec![],
        embed_dim: 4,
        attention_dim: 2,
    };
    let init = init_model::<f64>(&dims, 2.0, 5).unwrap();
    let hyper = AdamHyper {
        epochs: 2,
        ..AdamHyper::default()
    };
    let base = train(&init, &data, &hyper, 2.0, 4).unwrap();
    let pool = build_hard_pool(&init, &data).unwrap();
    let features = extract_features(&init, &pool).unwrap();
    let config = GenConfig {
        strategy: GenStrategy::Fmb,
        bag_count: 8,
        size_stats: bag_size_stats(&data),
        clusters: pool.len().min(4),
        seed: 2,
    };
    let hard = generate_bags(&pool, &features, &config).unwrap();
    let augmented = augment_training_set(&data, &hard).unwrap();
    assert_eq!(augmented.len(), data.len() + hard.len());
    assert_eq!(&augmented.bags()[..data.len()], data.bags());

    let retrained = train(&init, &augmented, &hyper, 2.0, 4).unwrap();
    assert_eq!(retrained.losses.len(), 2);
    assert_ne!(retrained.best_model, base.best_model);
}
