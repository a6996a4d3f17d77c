use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{MilError, Result};
use crate::scalar::Scalar;

/// One cross-validation fold.
#[derive(Debug, Clone)]
pub struct Fold<T> {
    pub index: usize,
    pub train: Dataset<T>,
    pub test: Dataset<T>,
}

/// Stratified k-fold split.
///
/// Positives and negatives are shuffled separately, concatenated, and dealt
/// round-robin, so fold sizes and per-fold positive counts each differ by at
/// most one. Bags keep their dataset order inside each split.
pub fn kfold_split<T: Scalar>(dataset: &Dataset<T>, k: usize, seed: u64) -> Result<Vec<Fold<T>>> {
    if k < 2 {
        return Err(MilError::config("k", format!("{k} folds; need at least 2")));
    }
    if k > dataset.len() {
        return Err(MilError::config(
            "k",
            format!("{k} folds but only {} bags", dataset.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| dataset.bags()[i].is_positive());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let mut assignment = vec![0usize; dataset.len()];
    for (slot, &bag) in pos.iter().chain(&neg).enumerate() {
        assignment[bag] = slot % k;
    }

    (0..k)
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..dataset.len()).partition(|&i| assignment[i] == fold);
            Ok(Fold {
                index: fold,
                train: dataset.subset(
                    &train,
                    format!("{} [fold {fold}/{k} train]", dataset.provenance),
                )?,
                test: dataset.subset(
                    &test,
                    format!("{} [fold {fold}/{k} test]", dataset.provenance),
                )?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagdata::{Bag, Instance, Origin};
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn dataset(n_pos: usize, n_neg: usize) -> Dataset<f64> {
        let bags = (0..n_pos + n_neg)
            .map(|i| {
                Bag::new(
                    format!("b{i}"),
                    u8::from(i < n_pos),
                    vec![Instance::new(vec![i as f64])],
                    Origin::Natural,
                )
                .unwrap()
            })
            .collect();
        Dataset::new(1, "t", bags).unwrap()
    }

    fn test_ids(folds: &[Fold<f64>]) -> Vec<Vec<String>> {
        folds
            .iter()
            .map(|f| f.test.bags().iter().map(|b| b.bag_id.clone()).collect())
            .collect()
    }

    #[test]
    fn hundred_bags_ten_folds() {
        let ds = dataset(50, 50);
        let folds = kfold_split(&ds, 10, 1).unwrap();
        assert_eq!(folds.len(), 10);
        let mut seen = HashMap::new();
        for f in &folds {
            assert_eq!(f.test.len(), 10);
            assert_eq!(f.train.len(), 90);
            let pos = f.test.positives();
            assert!((4..=6).contains(&pos), "fold has {pos} positives");
            for b in f.test.bags() {
                *seen.entry(b.bag_id.clone()).or_insert(0) += 1;
            }
        }
        assert_eq!(seen.len(), 100);
        assert!(seen.values().all(|&c| c == 1));
    }

    #[test]
    fn fifty_eight_bags_four_folds() {
        let ds = dataset(26, 32);
        let mut sizes: Vec<usize> = kfold_split(&ds, 4, 9)
            .unwrap()
            .iter()
            .map(|f| f.test.len())
            .collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![14, 14, 15, 15]);
    }

    #[test]
    fn k_bounds() {
        let ds = dataset(2, 2);
        assert!(kfold_split(&ds, 5, 0).is_err());
        assert!(kfold_split(&ds, 1, 0).is_err());
        assert!(kfold_split(&ds, 4, 0).is_ok());
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = dataset(20, 30);
        assert_eq!(
            test_ids(&kfold_split(&ds, 5, 3).unwrap()),
            test_ids(&kfold_split(&ds, 5, 3).unwrap())
        );
        assert_ne!(
            test_ids(&kfold_split(&ds, 5, 3).unwrap()),
            test_ids(&kfold_split(&ds, 5, 4).unwrap())
        );
    }

    proptest! {
        #[test]
        fn partition_property(n_pos in 0usize..30, n_neg in 0usize..30, k in 2usize..8, seed: u64) {
            prop_assume!(n_pos + n_neg >= k);
            let ds = dataset(n_pos, n_neg);
            let folds = kfold_split(&ds, k, seed).unwrap();
            let mut in_test = HashMap::new();
            let mut in_train = HashMap::new();
            for f in &folds {
                for b in f.test.bags() { *in_test.entry(b.bag_id.clone()).or_insert(0) += 1; }
                for b in f.train.bags() { *in_train.entry(b.bag_id.clone()).or_insert(0) += 1; }
            }
            for b in ds.bags() {
                prop_assert_eq!(in_test.get(&b.bag_id).copied(), Some(1));
                prop_assert_eq!(in_train.get(&b.bag_id).copied().unwrap_or(0), k - 1);
            }
            let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let global = n_pos as f64 / (n_pos + n_neg) as f64;
            for f in &folds {
                let expected = global * f.test.len() as f64;
                prop_assert!((f.test.positives() as f64 - expected).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
