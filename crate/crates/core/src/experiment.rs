//! Cross-validated train → mine → retrain experiments over method variants.

use std::fmt;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bagdata::{bag_size_stats, kfold_split, Dataset, Fold};
use crate::error::{MilError, Result};
use crate::metrics::{aggregate, evaluate, format_table, AggregateReport, RunMetrics};
use crate::milnet::{forward, Dims, MilModel};
use crate::mining::{
    build_hard_pool, default_clusters, extract_features, generate_bags, GenConfig, Strategy,
};
use crate::optim::{init_model, train, AdamHyper};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Colon,
    Ucsb,
    Synthetic,
}

impl Profile {
    /// (learning rate, weight decay, epochs, folds)
    pub fn settings(self) -> (f64, f64, usize, usize) {
        match self {
            Profile::Colon => (5e-5, 5e-4, 120, 10),
            Profile::Ucsb => (5e-6, 1e-4, 300, 4),
            Profile::Synthetic => (1e-3, 1e-4, 60, 5),
        }
    }
}

impl FromStr for Profile {
    type Err = MilError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "colon" => Ok(Profile::Colon),
            "ucsb" => Ok(Profile::Ucsb),
            "synthetic" => Ok(Profile::Synthetic),
            other => Err(MilError::config(
                "profile",
                format!("unknown profile {other:?}; expected colon, ucsb or synthetic"),
            )),
        }
    }
}

/// Method rows of the results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "base-λ1")]
    BaseLambda1,
    #[serde(rename = "ours")]
    Ours,
    #[serde(rename = "ours+SB")]
    OursSb,
    #[serde(rename = "ours+MB")]
    OursMb,
    #[serde(rename = "ours+FMB")]
    OursFmb,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BaseLambda1,
        Variant::Ours,
        Variant::OursSb,
        Variant::OursMb,
        Variant::OursFmb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BaseLambda1 => "base-λ1",
            Variant::Ours => "ours",
            Variant::OursSb => "ours+SB",
            Variant::OursMb => "ours+MB",
            Variant::OursFmb => "ours+FMB",
        }
    }

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            Variant::OursSb => Some(Strategy::Sb),
            Variant::OursMb => Some(Strategy::Mb),
            Variant::OursFmb => Some(Strategy::Fmb),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub folds: usize,
    pub lambda: f64,
    pub repetitions: usize,
    /// Draw a new fold split for every repetition.
    pub reshuffle_folds: bool,
    pub variants: Vec<Variant>,
    /// FMB cluster count; `None` means min(4, pool size).
    pub clusters: Option<usize>,
    /// Generated bags per MB/FMB run; `None` means the fold's natural negative count.
    pub bag_count: Option<usize>,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub attention_dim: usize,
    pub seed: u64,
    /// Worker threads; 0 uses all cores. Never affects results.
    #[serde(skip)]
    pub jobs: usize,
}

impl PipelineConfig {
    pub fn for_profile(profile: Profile, seed: u64) -> Self {
        let (learning_rate, weight_decay, epochs, folds) = profile.settings();
        let dims = Dims::standard(1);
        PipelineConfig {
            profile,
            learning_rate,
            weight_decay,
            epochs,
            folds,
            lambda: 2.0,
            repetitions: 5,
            reshuffle_folds: true,
            variants: Variant::ALL.to_vec(),
            clusters: None,
            bag_count: None,
            hidden: dims.hidden,
            embed_dim: dims.embed_dim,
            attention_dim: dims.attention_dim,
            seed,
            jobs: 0,
        }
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            ..AdamHyper::default()
        }
    }

    pub fn dims(&self, feature_dim: usize) -> Dims {
        Dims {
            feature_dim,
            hidden: self.hidden.clone(),
            embed_dim: self.embed_dim,
            attention_dim: self.attention_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper().validate()?;
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return Err(MilError::config(
                "lambda",
                format!("{} must be a finite value >= 1", self.lambda),
            ));
        }
        if self.folds < 2 {
            return Err(MilError::config("folds", "need at least 2"));
        }
        if self.repetitions == 0 {
            return Err(MilError::config("repetitions", "need at least 1"));
        }
        if self.variants.is_empty() {
            return Err(MilError::config("variants", "no method variants selected"));
        }
        if self.clusters == Some(0) {
            return Err(MilError::config("clusters", "must be at least 1"));
        }
        if self.bag_count == Some(0) {
            return Err(MilError::config("bag_count", "must be at least 1"));
        }
        self.dims(1).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub metrics: RunMetrics,
    pub best_epoch: usize,
    pub pool_size: Option<usize>,
    pub generated_bags: usize,
    /// Set when the pool was empty and the base model stood in.
    pub reused_base: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub repetition: usize,
    pub fold: usize,
    pub train_bags: usize,
    pub test_bag_ids: Vec<String>,
    pub test_labels: Vec<u8>,
    pub results: Vec<VariantResult>,
    /// Test-set probabilities per variant, aligned with `results`.
    pub probabilities: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    /// One entry per repetition, from that repetition's pooled test predictions.
    pub repetitions: Vec<RunMetrics>,
    pub report: AggregateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config: PipelineConfig,
    pub dataset: String,
    pub bags: usize,
    pub feature_dim: usize,
    pub folds: Vec<FoldRecord>,
    pub summary: Vec<VariantReport>,
}

impl ExperimentRecord {
    pub fn report(&self, variant: Variant) -> Option<&AggregateReport> {
        self.summary
            .iter()
            .find(|r| r.variant == variant)
            .map(|r| &r.report)
    }

    pub fn table(&self) -> String {
        let rows: Vec<(String, AggregateReport)> = self
            .summary
            .iter()
            .map(|r| (r.variant.name().to_string(), r.report.clone()))
            .collect();
        format_table(&rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn predict<T: Scalar>(model: &MilModel<T>, dataset: &Dataset<T>) -> Result<Vec<f64>> {
    dataset
        .bags()
        .iter()
        .map(|b| Ok(forward(model, b)?.probability.as_f64()))
        .collect()
}

fn labels<T: Scalar>(dataset: &Dataset<T>) -> Vec<u8> {
    dataset.bags().iter().map(|b| b.label).collect()
}

struct Trained<T> {
    model: MilModel<T>,
    best_epoch: usize,
}

fn fit<T: Scalar>(
    config: &PipelineConfig,
    trainset: &Dataset<T>,
    lambda: f64,
    init_seed: u64,
    train_seed: u64,
) -> Result<Trained<T>> {
    let init = init_model::<T>(&config.dims(trainset.feature_dim), lambda, init_seed)?;
    let report = train(&init, trainset, &config.hyper(), lambda, train_seed)?;
    Ok(Trained {
        model: report.best_model,
        best_epoch: report.best_epoch,
    })
}

fn run_fold<T: Scalar>(
    config: &PipelineConfig,
    repetition: usize,
    fold: &Fold<T>,
) -> Result<FoldRecord> {
    if let Some(bad) = fold.test.bags().iter().find(|b| !b.origin.is_natural()) {
        return Err(MilError::Precondition(format!(
            "generated bag {} in a test fold",
            bad.bag_id
        )));
    }
    let job = [repetition as u64, fold.index as u64];
    let init_seed = seed::derive(config.seed, &[1, job[0], job[1]]);
    let train_seed = seed::derive(config.seed, &[2, job[0], job[1]]);
    let gen_seed = seed::derive(config.seed, &[3, job[0], job[1]]);
    let test_labels = labels(&fold.test);
    let mut results = Vec::new();
    let mut probabilities = Vec::new();
    let mut record = |result: VariantResult, probs: Vec<f64>| {
        results.push(result);
        probabilities.push(probs);
    };
    let score = |model: &MilModel<T>| -> Result<(RunMetrics, Vec<f64>)> {
        let probs = predict(model, &fold.test)?;
        Ok((evaluate(&probs, &test_labels)?, probs))
    };

    let needs_ours = config.variants.iter().any(|v| *v != Variant::BaseLambda1);
    let ours = if needs_ours {
        Some(fit(
            config,
            &fold.train,
            config.lambda,
            init_seed,
            train_seed,
        )?)
    } else {
        None
    };
    let ours_scored = ours.as_ref().map(|o| score(&o.model)).transpose()?;
    let pool = match &ours {
        Some(o) if config.variants.iter().any(|v| v.strategy().is_some()) => {
            Some(build_hard_pool(&o.model, &fold.train)?)
        }
        _ => None,
    };
    let features = match (&ours, &pool) {
        (Some(o), Some(p)) if !p.is_empty() => extract_features(&o.model, p)?,
        _ => Vec::new(),
    };

    for &variant in &config.variants {
        match variant {
            Variant::BaseLambda1 => {
                let base = fit(config, &fold.train, 1.0, init_seed, train_seed)?;
                let (metrics, probs) = score(&base.model)?;
                record(
                    VariantResult {
                        variant,
                        metrics,
                        best_epoch: base.best_epoch,
                        pool_size: None,
                        generated_bags: 0,
                        reused_base: false,
                    },
                    probs,
                );
            }
            Variant::Ours => {
                let (o, (metrics, probs)) = (
                    ours.as_ref().expect("fitted"),
                    ours_scored.clone().expect("scored"),
                );
                record(
                    VariantResult {
                        variant,
                        metrics,
                        best_epoch: o.best_epoch,
                        pool_size: None,
                        generated_bags: 0,
                        reused_base: false,
                    },
                    probs,
                );
            }
            _ => {
                let strategy = variant.strategy().expect("mining variant");
                let o = ours.as_ref().expect("fitted");
                let pool = pool.as_ref().expect("mined");
                if pool.is_empty() {
                    info!("repetition {repetition} fold {}: empty hard pool, {variant} reuses the base model", fold.index);
                    let (metrics, probs) = ours_scored.clone().expect("scored");
                    record(
                        VariantResult {
                            variant,
                            metrics,
                            best_epoch: o.best_epoch,
                            pool_size: Some(0),
                            generated_bags: 0,
                            reused_base: true,
                        },
                        probs,
                    );
                    continue;
                }
                let natural_negatives = fold
                    .train
                    .bags()
                    .iter()
                    .filter(|b| b.origin.is_natural() && !b.is_positive())
                    .count();
                let gen = GenConfig {
                    strategy,
                    bag_count: config.bag_count.unwrap_or(natural_negatives).max(1),
                    size_stats: bag_size_stats(&fold.train),
                    clusters: config
                        .clusters
                        .unwrap_or_else(|| default_clusters(pool.len()))
                        .min(pool.len()),
                    seed: gen_seed,
                };
                let hard = generate_bags(pool, &features, &gen)?;
                let augmented = fold.train.augmented(&hard)?;
                let retrained = fit(config, &augmented, config.lambda, init_seed, train_seed)?;
                let (metrics, probs) = score(&retrained.model)?;
                record(
                    VariantResult {
                        variant,
                        metrics,
                        best_epoch: retrained.best_epoch,
                        pool_size: Some(pool.len()),
                        generated_bags: hard.len(),
                        reused_base: false,
                    },
                    probs,
                );
            }
        }
    }
    info!("repetition {repetition} fold {} done", fold.index);
    Ok(FoldRecord {
        repetition,
        fold: fold.index,
        train_bags: fold.train.len(),
        test_bag_ids: fold.test.bags().iter().map(|b| b.bag_id.clone()).collect(),
        test_labels,
        results,
        probabilities,
    })
}

fn summarize(config: &PipelineConfig, folds: &[FoldRecord]) -> Result<Vec<VariantReport>> {
    config
        .variants
        .iter()
        .enumerate()
        .map(|(k, &variant)| {
            let repetitions = (0..config.repetitions)
                .map(|rep| {
                    let (mut probs, mut labels) = (Vec::new(), Vec::new());
                    for f in folds.iter().filter(|f| f.repetition == rep) {
                        probs.extend_from_slice(&f.probabilities[k]);
                        labels.extend_from_slice(&f.test_labels);
                    }
                    evaluate(&probs, &labels)
                })
                .collect::<Result<Vec<_>>>()?;
            let report = aggregate(&repetitions)?;
            Ok(VariantReport {
                variant,
                repetitions,
                report,
            })
        })
        .collect()
}

/// Runs every (repetition, fold) job, in parallel over `config.jobs`
/// threads, and aggregates per variant.
pub fn run_experiment<T: Scalar>(
    dataset: &Dataset<T>,
    config: &PipelineConfig,
) -> Result<ExperimentRecord> {
    config.validate()?;
    if let Some(bad) = dataset.bags().iter().find(|b| !b.origin.is_natural()) {
        return Err(MilError::Precondition(format!(
            "input dataset contains generated bag {}",
            bad.bag_id
        )));
    }
    let mut splits = Vec::new();
    for rep in 0..config.repetitions {
        let split_seed = if config.reshuffle_folds {
            seed::derive(config.seed, &[0, rep as u64])
        } else {
            seed::derive(config.seed, &[0])
        };
        for fold in kfold_split(dataset, config.folds, split_seed)? {
            splits.push((rep, fold));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| MilError::Precondition(format!("thread pool: {e}")))?;
    let folds = pool.install(|| {
        splits
            .par_iter()
            .map(|(rep, fold)| run_fold(config, *rep, fold))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(config, &folds)?;
    Ok(ExperimentRecord {
        config: config.clone(),
        dataset: dataset.provenance.clone(),
        bags: dataset.len(),
        feature_dim: dataset.feature_dim,
        folds,
        summary,
    })
}
