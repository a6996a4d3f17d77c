use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, ClusterSet, DEFAULT_MAX_ITER};
use super::pool::HardPool;
use crate::bagdata::{Bag, BagSizeStats, Origin};
use crate::error::{MilError, Result};
use crate::scalar::Scalar;
use crate::seed;

pub const DEFAULT_CLUSTERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// One bag holding the whole pool.
    Sb,
    /// Many bags sampled uniformly from the pool.
    Mb,
    /// Many bags sampled through feature clusters.
    Fmb,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Sb, Strategy::Mb, Strategy::Fmb];

    pub fn origin(self) -> Origin {
        match self {
            Strategy::Sb => Origin::GeneratedSb,
            Strategy::Mb => Origin::GeneratedMb,
            Strategy::Fmb => Origin::GeneratedFmb,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Sb => "sb",
            Strategy::Mb => "mb",
            Strategy::Fmb => "fmb",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = MilError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sb" => Ok(Strategy::Sb),
            "mb" => Ok(Strategy::Mb),
            "fmb" => Ok(Strategy::Fmb),
            other => Err(MilError::config(
                "strategy",
                format!("unknown strategy {other:?}; expected sb, mb or fmb"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub strategy: Strategy,
    pub bag_count: usize,
    pub size_stats: BagSizeStats,
    pub clusters: usize,
    pub seed: u64,
}

impl GenConfig {
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.bag_count == 0 {
            return Err(MilError::config("bag_count", "must be at least 1"));
        }
        BagSizeStats::new(
            self.size_stats.mu,
            self.size_stats.sigma,
            self.size_stats.z_min,
            self.size_stats.z_max,
        )?;
        if self.strategy == Strategy::Fmb && (self.clusters == 0 || self.clusters > pool_size) {
            return Err(MilError::config(
                "clusters",
                format!(
                    "{} clusters requested for a pool of {pool_size}",
                    self.clusters
                ),
            ));
        }
        Ok(())
    }
}

/// Default cluster count for a pool: min(4, pool size).
pub fn default_clusters(pool_size: usize) -> usize {
    DEFAULT_CLUSTERS.min(pool_size).max(1)
}

/// round(Normal(μ, σ)) clamped into [Z_min, Z_max].
pub fn sample_bag_size<R: Rng + ?Sized>(stats: &BagSizeStats, rng: &mut R) -> usize {
    let draw = if stats.sigma > 0.0 {
        Normal::new(stats.mu, stats.sigma)
            .expect("finite sigma")
            .sample(rng)
    } else {
        stats.mu
    };
    let lo = stats.z_min.max(1) as f64;
    let hi = stats.z_max.max(stats.z_min).max(1) as f64;
    draw.round().clamp(lo, hi) as usize
}

/// Picks index j with probability sizes[j] / Σ sizes.
pub fn pick_cluster<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> usize {
    let total: usize = sizes.iter().sum();
    let mut r = rng.random_range(0..total);
    for (j, &n) in sizes.iter().enumerate() {
        if r < n {
            return j;
        }
        r -= n;
    }
    unreachable!("r < total")
}

/// FMB bag contents as pool indices: cluster by P_j, then uniformly within
/// the cluster, resampling within-bag duplicates up to pool-size attempts.
pub fn sample_clustered_bags<T: Scalar, R: Rng + ?Sized>(
    clusters: &ClusterSet<T>,
    bag_sizes: &[usize],
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let members: Vec<Vec<usize>> = (0..clusters.c).map(|j| clusters.members(j)).collect();
    let pool_size = clusters.assignments.len();
    bag_sizes
        .iter()
        .map(|&size| {
            let mut seen = HashSet::new();
            let mut bag = Vec::with_capacity(size);
            for _ in 0..size {
                let mut pick = 0;
                for _ in 0..pool_size.max(1) {
                    let j = pick_cluster(&clusters.sizes, rng);
                    pick = members[j][rng.random_range(0..members[j].len())];
                    if !seen.contains(&pick) {
                        break;
                    }
                }
                seen.insert(pick);
                bag.push(pick);
            }
            bag
        })
        .collect()
}

fn uniform_bag<R: Rng + ?Sized>(pool_size: usize, size: usize, rng: &mut R) -> Vec<usize> {
    if size <= pool_size {
        return index::sample(rng, pool_size, size).into_vec();
    }
    let mut bag = index::sample(rng, pool_size, pool_size).into_vec();
    bag.extend((pool_size..size).map(|_| rng.random_range(0..pool_size)));
    bag
}

fn to_bag<T: Scalar>(
    pool: &HardPool<T>,
    strategy: Strategy,
    i: usize,
    picks: &[usize],
) -> Result<Bag<T>> {
    let instances = picks
        .iter()
        .map(|&p| pool.entries[p].instance.clone())
        .collect();
    Bag::new(
        format!("hard-{strategy}-{i:04}"),
        0,
        instances,
        strategy.origin(),
    )
}

/// Hard negative bags from a mined pool. `features` rows align with the pool
/// and are only used by FMB.
pub fn generate_bags<T: Scalar>(
    pool: &HardPool<T>,
    features: &[Vec<T>],
    config: &GenConfig,
) -> Result<Vec<Bag<T>>> {
    if pool.is_empty() {
        return Err(MilError::NothingToMine);
    }
    config.validate(pool.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[0]));
    match config.strategy {
        Strategy::Sb => {
            let all: Vec<usize> = (0..pool.len()).collect();
            Ok(vec![to_bag(pool, Strategy::Sb, 0, &all)?])
        }
        Strategy::Mb => (0..config.bag_count)
            .map(|i| {
                let size = sample_bag_size(&config.size_stats, &mut rng);
                let picks = uniform_bag(pool.len(), size, &mut rng);
                to_bag(pool, Strategy::Mb, i, &picks)
            })
            .collect(),
        Strategy::Fmb => {
            if features.len() != pool.len() {
                return Err(MilError::Dimension(format!(
                    "{} feature rows for a pool of {}",
                    features.len(),
                    pool.len()
                )));
            }
            let clusters = kmeans(
                features,
                config.clusters,
                seed::derive(config.seed, &[1]),
                DEFAULT_MAX_ITER,
            )?;
            let sizes: Vec<usize> = (0..config.bag_count)
                .map(|_| sample_bag_size(&config.size_stats, &mut rng))
                .collect();
            sample_clustered_bags(&clusters, &sizes, &mut rng)
                .iter()
                .enumerate()
                .map(|(i, picks)| to_bag(pool, Strategy::Fmb, i, picks))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagdata::Instance;
    use crate::mining::HardEntry;

    fn pool(n: usize) -> HardPool<f64> {
        HardPool {
            entries: (0..n)
                .map(|i| HardEntry {
                    instance: Instance::new(vec![i as f64]),
                    source_bag_id: format!("n{}", i % 3),
                    weight: 0.5,
                })
                .collect(),
        }
    }

    fn feats(p: &HardPool<f64>) -> Vec<Vec<f64>> {
        p.entries
            .iter()
            .map(|e| e.instance.features.clone())
            .collect()
    }

    fn config(strategy: Strategy, seed: u64) -> GenConfig {
        GenConfig {
            strategy,
            bag_count: 12,
            size_stats: BagSizeStats::new(5.0, 2.0, 2, 8).unwrap(),
            clusters: 3,
            seed,
        }
    }

    #[test]
    fn sb_is_the_pool() {
        let p = pool(7);
        let bags = generate_bags(&p, &[], &config(Strategy::Sb, 1)).unwrap();
        assert_eq!(bags.len(), 1);
        assert_eq!(bags[0].len(), 7);
        assert_eq!(bags[0].label, 0);
        assert_eq!(bags[0].origin, Origin::GeneratedSb);
        let got: Vec<_> = bags[0].instances.iter().collect();
        assert_eq!(
            got,
            p.entries.iter().map(|e| &e.instance).collect::<Vec<_>>()
        );
    }

    #[test]
    fn mb_and_fmb_respect_sizes_and_uniqueness() {
        let p = pool(20);
        let f = feats(&p);
        for strategy in [Strategy::Mb, Strategy::Fmb] {
            let cfg = config(strategy, 5);
            let bags = generate_bags(&p, &f, &cfg).unwrap();
            assert_eq!(bags.len(), 12);
            for b in &bags {
                assert!((2..=8).contains(&b.len()));
                assert_eq!(b.origin, strategy.origin());
                assert_eq!(b.label, 0);
                let distinct: HashSet<u64> = b
                    .instances
                    .iter()
                    .map(|i| i.features[0].to_bits())
                    .collect();
                assert_eq!(distinct.len(), b.len());
            }
            assert_eq!(bags, generate_bags(&p, &f, &cfg).unwrap());
        }
    }

    #[test]
    fn oversized_bags_exhaust_the_pool_first() {
        let p = pool(3);
        let mut cfg = config(Strategy::Mb, 2);
        cfg.size_stats = BagSizeStats::new(6.0, 0.0, 6, 6).unwrap();
        for b in generate_bags(&p, &feats(&p), &cfg).unwrap() {
            assert_eq!(b.len(), 6);
            let distinct: HashSet<u64> = b
                .instances
                .iter()
                .map(|i| i.features[0].to_bits())
                .collect();
            assert_eq!(distinct.len(), 3);
        }
        cfg.strategy = Strategy::Fmb;
        cfg.clusters = 2;
        for b in generate_bags(&p, &feats(&p), &cfg).unwrap() {
            assert_eq!(b.len(), 6);
        }
    }

    #[test]
    fn empty_pool_and_bad_clusters() {
        let empty = HardPool::<f64>::default();
        assert!(matches!(
            generate_bags(&empty, &[], &config(Strategy::Mb, 0)),
            Err(MilError::NothingToMine)
        ));
        let p = pool(2);
        assert!(matches!(
            generate_bags(&p, &feats(&p), &config(Strategy::Fmb, 0)),
            Err(MilError::Config {
                field: "clusters",
                ..
            })
        ));
        assert!(generate_bags(
            &p,
            &feats(&p)[..1],
            &GenConfig {
                clusters: 1,
                ..config(Strategy::Fmb, 0)
            }
        )
        .is_err());
    }

    #[test]
    fn bag_size_clamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fixed = BagSizeStats::new(6.4, 0.0, 1, 10).unwrap();
        assert_eq!(sample_bag_size(&fixed, &mut rng), 6);
        let high = BagSizeStats::new(50.0, 0.0, 1, 10).unwrap();
        assert_eq!(sample_bag_size(&high, &mut rng), 10);
        let wide = BagSizeStats::new(20.0, 5.0, 5, 40).unwrap();
        let draws: Vec<usize> = (0..10_000)
            .map(|_| sample_bag_size(&wide, &mut rng))
            .collect();
        assert!(draws.iter().all(|d| (5..=40).contains(d)));
        let mean = draws.iter().sum::<usize>() as f64 / draws.len() as f64;
        assert!((mean - 20.0).abs() < 0.5, "{mean}");
    }

    #[test]
    fn strategy_names() {
        for s in Strategy::ALL {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!(matches!(
            "xb".parse::<Strategy>(),
            Err(MilError::Config {
                field: "strategy",
                ..
            })
        ));
        assert_eq!(default_clusters(2), 2);
        assert_eq!(default_clusters(50), 4);
    }
}
