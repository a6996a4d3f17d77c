//! Hard negative mining from false-positive bags and hard bag generation.

mod generate;
mod kmeans;
mod pool;

pub use generate::{
    default_clusters, generate_bags, pick_cluster, sample_bag_size, sample_clustered_bags,
    GenConfig, Strategy, DEFAULT_CLUSTERS,
};
pub use kmeans::{kmeans, selection_probabilities, ClusterSet, DEFAULT_MAX_ITER};
pub use pool::{
    build_hard_pool, extract_features, find_false_positives, select_hard_instances,
    FalsePositiveBag, HardEntry, HardPool, DECISION_THRESHOLD,
};

pub use crate::bagdata::augment_training_set;
