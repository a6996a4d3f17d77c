use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::info;
use milhard::bagdata::{
    append_bag, bag_size_stats, generate_synthetic, load_bags, save_bags, SynthConfig,
};
use milhard::experiment::{predict, run_experiment, ExperimentRecord, PipelineConfig, Variant};
use milhard::metrics::{confusion, roc_csv, roc_curve, run_metrics, DEFAULT_THRESHOLD};
use milhard::milnet::{grad_check_trials, load_model, save_model};
use milhard::mining::{
    build_hard_pool, default_clusters, extract_features, find_false_positives, generate_bags,
    GenConfig, Strategy,
};
use milhard::optim::{accuracy, init_model, train};
use milhard::preprocess::{image_to_bag, PreprocessConfig, RasterImage};
use milhard::{Dataset, MilError};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "milhard",
    version,
    about = "Attention MIL with hard negative bag mining"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic witness/confuser bag dataset.
    GenData(GenDataArgs),
    /// Turn PNM images into bags of patches.
    Preprocess(PreprocessArgs),
    /// Train a model from scratch.
    Train(TrainArgs),
    /// Mine hard negatives from false-positive bags and generate hard bags.
    Mine(MineArgs),
    /// Train from scratch on the dataset plus generated hard bags.
    Retrain(RetrainArgs),
    /// Score a model on a bag file.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients on random models.
    Gradcheck(GradcheckArgs),
    /// Cross-validated comparison of all method variants.
    RunExperiment(ExperimentArgs),
    /// Print the results table of a saved experiment record.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    bags: usize,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    confuser_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    positive_fraction: f64,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Manifest with one "<label> <image path>" per line; paths are relative to the manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 27)]
    patch_side: usize,
    #[arg(long, default_value_t = 0.25)]
    tissue_fraction: f64,
}

#[derive(Args)]
struct TrainingArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    profile: String,
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
    /// Overrides the profile's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
}

impl TrainingArgs {
    fn config(&self) -> Result<PipelineConfig, Failure> {
        let mut config = PipelineConfig::for_profile(self.profile.parse()?, self.seed);
        config.lambda = self.lambda;
        if let Some(e) = self.epochs {
            config.epochs = e;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training bags to mine.
    #[arg(long)]
    data: PathBuf,
    /// Generated bags are appended here in the bag JSONL format.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSONL dump of the hard instance pool.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "fmb")]
    strategy: String,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    bag_count: Option<usize>,
}

#[derive(Args)]
struct RetrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Generated hard bags from `mine`.
    #[arg(long)]
    hard: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write ROC points as CSV.
    #[arg(long)]
    roc_csv: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    data: PathBuf,
    /// Record path; the record is also printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    training: TrainingArgs,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    bag_count: Option<usize>,
    /// Restrict to one mining strategy (plus the two unmined variants).
    #[arg(long)]
    strategy: Option<String>,
    /// Keep one fold split for all repetitions.
    #[arg(long)]
    fixed_folds: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment record written by run-experiment.
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<MilError> for Failure {
    fn from(e: MilError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Outcome = Result<String, Failure>;

fn pretty(value: Value) -> Outcome {
    Ok(serde_json::to_string_pretty(&value).map_err(MilError::from)?)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn gen_data(a: &GenDataArgs) -> Outcome {
    if a.dim < 2 {
        return Err(Failure::Validation(
            "invalid configuration: dim: need at least 2".into(),
        ));
    }
    let mut config = SynthConfig::with_dim(a.dim);
    config.n_bags = a.bags;
    config.confuser_rate = a.confuser_rate;
    config.positive_fraction = a.positive_fraction;
    config.seed = a.seed;
    let data: Dataset = generate_synthetic(&config)?;
    save_bags(&data, &a.out)?;
    eprintln!(
        "wrote {} bags ({} positive, D={}) to {}",
        data.len(),
        data.positives(),
        data.feature_dim,
        a.out.display()
    );
    pretty(json!({
        "out": a.out,
        "bags": data.len(),
        "positives": data.positives(),
        "feature_dim": data.feature_dim,
        "config": config,
    }))
}

fn preprocess(a: &PreprocessArgs) -> Outcome {
    let manifest = fs::read_to_string(&a.data)
        .map_err(|e| Failure::Validation(format!("{}: {e}", a.data.display())))?;
    let base = a.data.parent().unwrap_or(Path::new("."));
    let mut config = PreprocessConfig {
        patch_side: a.patch_side,
        ..PreprocessConfig::default()
    };
    config.keep_rule.tissue_fraction = a.tissue_fraction;
    let mut bags = Vec::new();
    let mut summaries = Vec::new();
    for (n, line) in manifest.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, path) = line.split_once(char::is_whitespace).ok_or_else(|| {
            Failure::Validation(format!(
                "manifest line {}: expected \"<label> <path>\"",
                n + 1
            ))
        })?;
        let label: u8 = label.parse().map_err(|_| {
            Failure::Validation(format!("manifest line {}: bad label {label:?}", n + 1))
        })?;
        let path = base.join(path.trim());
        let img = RasterImage::read_pnm(&path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("image{n}"));
        let (bag, summary) = image_to_bag::<f64>(&img, &id, label, &config)?;
        eprintln!("{id}: kept {}/{} patches", summary.kept, summary.tiles);
        summaries.push(json!({ "bag_id": id, "label": label, "summary": summary }));
        bags.push(bag);
    }
    let dim = bags.first().map(|b| b.dim()).unwrap_or(0);
    let data = Dataset::new(dim, a.data.display().to_string(), bags)?;
    save_bags(&data, &a.out)?;
    pretty(json!({ "out": a.out, "bags": data.len(), "feature_dim": dim, "images": summaries }))
}

fn fit(data: &Dataset, config: &PipelineConfig, seed: u64, out: &Path) -> Outcome {
    let init = init_model::<f64>(&config.dims(data.feature_dim), config.lambda, seed)?;
    let report = train(&init, data, &config.hyper(), config.lambda, seed)?;
    save_model(&report.best_model, out)?;
    let acc = accuracy(&report.best_model, data)?;
    eprintln!(
        "trained {} epochs on {} bags: best epoch {} (loss {:.4}), training accuracy {acc:.3}; checkpoint {}",
        report.losses.len(),
        data.len(),
        report.best_epoch,
        report.losses[report.best_epoch],
        out.display()
    );
    pretty(json!({
        "losses": report.losses,
        "best_epoch": report.best_epoch,
        "checkpoint": out,
        "train_accuracy": acc,
        "bags": data.len(),
    }))
}

fn cmd_train(a: &TrainArgs) -> Outcome {
    let config = a.training.config()?;
    let data: Dataset = load_bags(&a.data)?;
    fit(&data, &config, a.training.seed, &a.out)
}

fn mine(a: &MineArgs) -> Outcome {
    let strategy: Strategy = a.strategy.parse()?;
    let model = load_model::<f64>(&a.model)?;
    let data: Dataset = load_bags(&a.data)?;
    let fps = find_false_positives(&model, &data)?;
    let pool = build_hard_pool(&model, &data)?;
    if let Some(path) = &a.pool {
        pool.save(path)?;
    }
    eprintln!(
        "{} false-positive bags, {} hard instances",
        fps.len(),
        pool.len()
    );
    if pool.is_empty() {
        return Err(MilError::NothingToMine.into());
    }
    let features = extract_features(&model, &pool)?;
    let natural_negatives = data
        .bags()
        .iter()
        .filter(|b| b.origin.is_natural() && !b.is_positive())
        .count();
    let gen = GenConfig {
        strategy,
        bag_count: a.bag_count.unwrap_or(natural_negatives),
        size_stats: bag_size_stats(&data),
        clusters: a.clusters.unwrap_or_else(|| default_clusters(pool.len())),
        seed: a.seed,
    };
    let bags = generate_bags(&pool, &features, &gen)?;
    for bag in &bags {
        append_bag(&a.out, bag, &data.provenance)?;
    }
    eprintln!(
        "appended {} {strategy} bags to {}",
        bags.len(),
        a.out.display()
    );
    pretty(json!({
        "false_positives": fps.iter().map(|f| &f.bag_id).collect::<Vec<_>>(),
        "pool_size": pool.len(),
        "generated": bags.len(),
        "strategy": strategy,
        "clusters": gen.clusters,
        "out": a.out,
    }))
}

fn retrain(a: &RetrainArgs) -> Outcome {
    let config = a.training.config()?;
    let data: Dataset = load_bags(&a.data)?;
    let hard: Dataset = load_bags(&a.hard)?;
    if let Some(bad) = hard.bags().iter().find(|b| b.label != 0) {
        return Err(Failure::Validation(format!(
            "hard bag {} is not labeled 0",
            bad.bag_id
        )));
    }
    let augmented = data.augmented(hard.bags())?;
    info!(
        "retraining on {} natural + {} generated bags",
        data.len(),
        hard.len()
    );
    fit(&augmented, &config, a.training.seed, &a.out)
}

fn eval(a: &EvalArgs) -> Outcome {
    let model = load_model::<f64>(&a.model)?;
    let data: Dataset = load_bags(&a.data)?;
    let probs = predict(&model, &data)?;
    let labels: Vec<u8> = data.bags().iter().map(|b| b.label).collect();
    let conf = confusion(&probs, &labels, DEFAULT_THRESHOLD)?;
    let metrics = run_metrics(&conf, &probs, &labels)?;
    if let Some(path) = &a.roc_csv {
        write_text(path, &roc_csv(&roc_curve(&probs, &labels)?))?;
    }
    let show = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "NA".into());
    eprintln!(
        "accuracy {}  precision {}  recall {}  f-score {}  auc {}  fpr {}",
        show(metrics.accuracy),
        show(metrics.precision),
        show(metrics.recall),
        show(metrics.f_score),
        show(metrics.auc),
        show(metrics.fpr)
    );
    pretty(json!({ "confusion": conf, "metrics": metrics, "probabilities": probs }))
}

fn gradcheck(a: &GradcheckArgs) -> Outcome {
    let r = grad_check_trials(a.trials, a.seed, a.eps)?;
    let pass = r.max_relative_error < 1e-4;
    eprintln!(
        "max relative error {:.3e} over {} trials ({}[{}]): {}",
        r.max_relative_error,
        r.trials,
        r.worst.tensor,
        r.worst.index,
        if pass { "pass" } else { "FAIL" }
    );
    let value = pretty(json!({ "result": r, "tolerance": 1e-4, "pass": pass }))?;
    if pass {
        Ok(value)
    } else {
        println!("{value}");
        Err(Failure::Runtime(
            "gradient check exceeded tolerance 1e-4".into(),
        ))
    }
}

fn experiment(a: &ExperimentArgs) -> Outcome {
    let mut config = a.training.config()?;
    if let Some(k) = a.folds {
        config.folds = k;
    }
    if let Some(r) = a.repetitions {
        config.repetitions = r;
    }
    config.jobs = a.jobs;
    config.clusters = a.clusters;
    config.bag_count = a.bag_count;
    config.reshuffle_folds = !a.fixed_folds;
    if let Some(s) = &a.strategy {
        let strategy: Strategy = s.parse()?;
        config.variants = Variant::ALL
            .into_iter()
            .filter(|v| v.strategy().is_none_or(|x| x == strategy))
            .collect();
    }
    config.validate()?;
    let data: Dataset = load_bags(&a.data)?;
    let record = run_experiment(&data, &config)?;
    let text = record.to_json()?;
    if let Some(path) = &a.out {
        write_text(path, &text)?;
    }
    eprint!("{}", record.table());
    Ok(text)
}

fn report(a: &ReportArgs) -> Outcome {
    let text = fs::read_to_string(&a.input)
        .map_err(|e| Failure::Validation(format!("{}: {e}", a.input.display())))?;
    let record: ExperimentRecord = serde_json::from_str(&text).map_err(MilError::from)?;
    eprint!("{}", record.table());
    pretty(json!({ "summary": record.summary, "table": record.table() }))
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => cmd_train(a),
        Command::Mine(a) => mine(a),
        Command::Retrain(a) => retrain(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::RunExperiment(a) => experiment(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MILHARD_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(value) => {
            println!("{value}");
            ExitCode::SUCCESS
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
