//! `vulnclass` command line: fetch, preprocess, train, evaluate, serve, classify.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classify::{ClassifyRequest, Classifier, DEFAULT_MAX_LEN};
use crate::dataset::{self, DEFAULT_SEED, DEFAULT_TRAIN_FRACTION};
use crate::eval::{self, ErrorScope};
use crate::ingest::{self, FeedSource};
use crate::model::{self, EncoderAssetsSpec, ModelConfig};
use crate::service::{self, ServiceConfig};
use crate::taxonomy::{default_taxonomy, TypeTaxonomy};
use crate::train::{self, EpochLog, TrainConfig};
use crate::{Error, Result};

pub const DEFAULT_DATA_DIR: &str = "data/processed";
pub const DEFAULT_RAW_DIR: &str = "data/raw";
pub const DEFAULT_ENCODER_DIR: &str = "models/encoder";
pub const DEFAULT_REPORTS_DIR: &str = "reports";
pub const TRAINING_RECORD: &str = "training.json";

#[derive(Debug, Parser)]
#[command(name = "vulnclass", version, about = "Severity and type classification of vulnerability descriptions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download or decompress an NVD JSON 1.1 feed.
    Fetch(FetchArgs),
    /// Parse a feed, tokenize, split and write train/validation JSONL.
    Preprocess(PreprocessArgs),
    /// Generate a small randomly initialised encoder and vocabulary from feed text.
    InitEncoder(InitEncoderArgs),
    /// Fine-tune the dual-head classifier on preprocessed data.
    Train(TrainArgs),
    /// Compute metrics and plots for a trained model.
    Evaluate(EvaluateArgs),
    /// Run the HTTP classification service.
    Serve(ServeArgs),
    /// Classify one description and print the result as JSON.
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
struct FetchArgs {
    /// Feed URL (http, https, file) or local path; a `.gz` suffix means gzip.
    #[arg(long)]
    input: String,
    #[arg(long, default_value = DEFAULT_RAW_DIR)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// NVD JSON 1.1 feed file (plain or gzip).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = DEFAULT_DATA_DIR)]
    out_dir: PathBuf,
    /// Encoder asset directory supplying the vocabulary.
    #[arg(long, default_value = DEFAULT_ENCODER_DIR)]
    assets: PathBuf,
    /// JSON file with `names` and `cwe_map`; the built-in table otherwise.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
}

#[derive(Debug, Args)]
struct InitEncoderArgs {
    /// Feed whose descriptions train the vocabulary.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = DEFAULT_ENCODER_DIR)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = EncoderAssetsSpec::default().vocab_size)]
    vocab_size: usize,
    #[arg(long, default_value_t = EncoderAssetsSpec::default().hidden_size)]
    hidden_size: usize,
    #[arg(long, default_value_t = EncoderAssetsSpec::default().num_layers)]
    layers: usize,
    #[arg(long, default_value_t = EncoderAssetsSpec::default().num_heads)]
    heads: usize,
    #[arg(long, default_value_t = EncoderAssetsSpec::default().intermediate_size)]
    intermediate_size: usize,
    #[arg(long, default_value_t = EncoderAssetsSpec::default().dropout)]
    dropout: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Preprocessed data directory.
    #[arg(long, default_value = DEFAULT_DATA_DIR)]
    data: PathBuf,
    /// Pre-trained encoder asset directory.
    #[arg(long, default_value = DEFAULT_ENCODER_DIR)]
    assets: PathBuf,
    #[arg(long, default_value = service::DEFAULT_MODEL_DIR)]
    out_dir: PathBuf,
    #[arg(long, default_value = DEFAULT_REPORTS_DIR)]
    reports: PathBuf,
    /// Training configuration JSON; individual flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Type decision threshold stored with the model.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    Validation,
    Full,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, default_value = service::DEFAULT_MODEL_DIR)]
    model: PathBuf,
    #[arg(long, default_value = DEFAULT_DATA_DIR)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Validation)]
    split: SplitChoice,
    #[arg(long, default_value = DEFAULT_REPORTS_DIR)]
    out_dir: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Defaults to $MODEL_DIR, then models/bert_classifier.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Defaults to $BIND_ADDR, then 127.0.0.1:8080.
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated CORS origins; defaults to $ALLOWED_ORIGINS.
    #[arg(long)]
    allowed_origins: Option<String>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long, default_value = service::DEFAULT_MODEL_DIR)]
    model: PathBuf,
    /// Description text to classify.
    #[arg(long)]
    text: String,
    #[arg(long)]
    threshold: Option<f64>,
}

/// Parses `argv` and runs the chosen subcommand. Returns the process exit code:
/// 0 on success, 1 on a domain error, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version go to stdout with status 0, usage errors to stderr with 2.
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", diagnostic(&e));
            1
        }
    }
}

/// Single-line JSON diagnostic for a domain error.
pub fn diagnostic(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fetch(a) => fetch(a),
        Command::Preprocess(a) => preprocess(a),
        Command::InitEncoder(a) => init_encoder(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Serve(a) => serve(a),
        Command::Classify(a) => classify(a),
    }
}

fn fetch(args: FetchArgs) -> Result<()> {
    let source = FeedSource::detect(args.input)?;
    let name = source
        .location()
        .rsplit('/')
        .next()
        .filter(|n| !n.is_empty())
        .unwrap_or("feed.json")
        .trim_end_matches(".gz")
        .to_string();
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let path = ingest::fetch_feed(&source, &args.out_dir.join(name))?;
    log::info!("feed available at {}", path.display());
    Ok(())
}

fn preprocess(args: PreprocessArgs) -> Result<()> {
    let taxonomy = match &args.taxonomy {
        Some(p) => TypeTaxonomy::from_json_file(p)?,
        None => default_taxonomy(),
    };
    let tokenizer = crate::tokenize::TokenizerAssets::load(&args.assets)?;
    let (records, stats) = ingest::parse_feed(&args.input)?;
    log::info!(
        "{} entries: kept {}, dropped {} (severity {}, description {}, rejected {}, duplicate {}, malformed {})",
        stats.total,
        stats.kept,
        stats.dropped(),
        stats.dropped_missing_severity,
        stats.dropped_missing_description,
        stats.dropped_rejected,
        stats.dropped_duplicate,
        stats.dropped_malformed
    );
    let examples = dataset::build_examples(&records, &taxonomy, args.max_len, &tokenizer)?;
    let split = dataset::stratified_split(&examples, args.train_fraction, args.seed)?;
    let manifest = dataset::persist(&split, &args.out_dir, &taxonomy, args.max_len)?;
    let stats_path = args.out_dir.join("ingest_stats.json");
    std::fs::write(&stats_path, serde_json::to_vec_pretty(&stats)?).map_err(|e| Error::io(&stats_path, e))?;
    log::info!(
        "{} train / {} validation examples; manifest {}",
        split.train.len(),
        split.validation.len(),
        manifest.display()
    );
    Ok(())
}

fn init_encoder(args: InitEncoderArgs) -> Result<()> {
    let (records, _) = ingest::parse_feed(&args.input)?;
    if records.is_empty() {
        return Err(Error::Data(format!("{} has no usable descriptions", args.input.display())));
    }
    let spec = EncoderAssetsSpec {
        vocab_size: args.vocab_size,
        hidden_size: args.hidden_size,
        num_layers: args.layers,
        num_heads: args.heads,
        intermediate_size: args.intermediate_size,
        max_positions: EncoderAssetsSpec::default().max_positions,
        dropout: args.dropout,
        seed: args.seed,
    };
    let config = model::init_encoder_assets(records.iter().map(|r| r.description.as_str()), &spec, &args.out_dir)?;
    log::info!(
        "wrote encoder ({} tokens, hidden {}) to {}",
        config.vocab_size,
        config.hidden_size,
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainingRecord<'a> {
    config: &'a TrainConfig,
    data: &'a Path,
    assets: &'a Path,
    epochs: &'a [EpochLog],
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => TrainConfig::from_json_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.lr {
        config.learning_rate = v;
    }
    if let Some(v) = args.weight_decay {
        config.weight_decay = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    let manifest = dataset::load_manifest(&args.data)?;
    config.max_len = manifest.max_len;
    config.validate()?;
    let split = dataset::load(&args.data)?;

    let encoder = model::read_encoder_config(&args.assets)?;
    let name = args
        .assets
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "encoder".into());
    let mut model_config = ModelConfig::for_encoder(name, encoder.hidden_size);
    model_config.head_seed = config.seed;
    if let Some(t) = args.threshold {
        model_config.type_threshold = t;
    }
    let mut model = model::build_model(&model_config, &args.assets)?;
    model.set_type_names(manifest.taxonomy.clone())?;

    let outcome = train::train(&mut model, &split, &config, &args.out_dir)?;
    let curve = train::export_learning_curve(&outcome.logs, &args.reports)?;
    let record = TrainingRecord {
        config: &config,
        data: &args.data,
        assets: &args.assets,
        epochs: &outcome.logs,
    };
    let path = args.out_dir.join(TRAINING_RECORD);
    std::fs::write(&path, serde_json::to_vec_pretty(&record)?).map_err(|e| Error::io(&path, e))?;
    log::info!("model saved to {}; learning curve {}", outcome.final_dir.display(), curve.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let model = model::load_model(&args.model)?;
    let threshold = args.threshold.unwrap_or(model.config().type_threshold);
    let split = dataset::load(&args.data)?;
    let (name, examples) = match args.split {
        SplitChoice::Validation => ("validation", split.validation),
        SplitChoice::Full => ("full", split.full()),
    };
    if examples.is_empty() {
        return Err(Error::Data(format!("{name} partition is empty")));
    }
    let predictions = eval::predict(&model, &examples, args.batch_size, threshold)?;
    let report = eval::evaluate_predictions(
        name,
        &examples,
        &predictions,
        threshold,
        model.type_names().to_vec(),
        ErrorScope::default(),
    )?;
    let written = eval::render_artifacts(&report, &args.out_dir)?;
    log::info!(
        "{name}: severity accuracy {:.4}, macro F1 {:.4}; type micro F1 {:.4}, Hamming {:.4}; {} files in {}",
        report.severity.accuracy,
        report.severity.macro_f1,
        report.types.micro_f1,
        report.types.hamming_loss,
        written.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut config = ServiceConfig::from_env()?;
    if let Some(m) = args.model {
        config.model_dir = m;
    }
    if let Some(b) = args.bind {
        config.bind = b;
    }
    if let Some(t) = args.threshold {
        config.threshold = Some(t);
    }
    if let Some(o) = args.allowed_origins {
        config.allowed_origins = service::parse_origins(&o);
    }
    service::start(&config)
}

fn classify(args: ClassifyArgs) -> Result<()> {
    let classifier = Classifier::load(&args.model)?;
    let response = classifier.classify(&ClassifyRequest {
        description: args.text,
        threshold: args.threshold,
    })?;
    println!("{}", serde_json::to_string(&response)?);
    Ok(())
}
