//! Command-line front end: synthetic corpora, TF-IDF tables, augmentation,
//! training, evaluation and label-budget experiments.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

use mixnl::augment::{augment, OpSpec};
use mixnl::corpus::{example_record, Dataset, UnlabeledRecord};
use mixnl::error::{Error, Result};
use mixnl::harness::experiment::{ExperimentPlan, SampleSize};
use mixnl::harness::synth::{gen_synthetic, write_synthetic, SynthSpec};
use mixnl::harness::train::{load_labeled, AugmentResources, TrainData};
use mixnl::harness::{
    evaluate, load_trained, run_experiment, train, write_metrics, Method, Task, TrainConfig,
};
use mixnl::sampling::{build_tfidf, RngStream};

#[derive(Parser)]
#[command(
    name = "mixnl",
    version,
    about = "Augmentation and semi-supervised training for tagging and span classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled/unlabeled/dev/test corpus.
    Synth(SynthArgs),
    /// Print the TF-IDF table of one or more JSONL files.
    Tfidf(TfidfArgs),
    /// Augment every example of a labeled file.
    Augment(AugmentArgs),
    /// Train a model and keep the best dev checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a labeled file.
    Evaluate(EvaluateArgs),
    /// Run the label-budget experiment and write a CSV table.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "tagging")]
    task: Task,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    labeled: Option<usize>,
    #[arg(long)]
    unlabeled: Option<usize>,
    #[arg(long)]
    dev: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
}

#[derive(Args)]
struct TfidfArgs {
    /// JSONL files; only the `tokens` field is read.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Tab-separated output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "tagging")]
    task: Task,
    #[arg(long, default_value = "TR")]
    op: String,
    #[arg(long)]
    polarity_guard: bool,
    #[arg(long)]
    polarity_lexicon: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Extra sentences for the TF-IDF and co-occurrence tables.
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Every training setting; unset flags keep the config-file or default value.
#[derive(Args, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
struct TrainArgs {
    /// JSON file with the same keys as the flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    op: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    polarity_guard: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_len: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    clip_norm: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    layers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ff_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dropout: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_adjust: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    per_batch_lambda: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_aug: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_mix: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_u: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    guess_warmup_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dev: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    unlabeled: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    polarity_lexicon: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<PathBuf>,
}

impl TrainArgs {
    /// Config file (or defaults) with the given flags laid over it.
    fn resolve(&self) -> Result<TrainConfig> {
        let mut base = match &self.config {
            Some(p) => serde_json::to_value(TrainConfig::from_file(p)?)?,
            None => serde_json::to_value(TrainConfig::default())?,
        };
        let Value::Object(overrides) = serde_json::to_value(self)? else {
            unreachable!("flags serialize to an object")
        };
        let obj: &mut Map<String, Value> = base
            .as_object_mut()
            .expect("config serializes to an object");
        obj.extend(overrides);
        serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Also write the scores as metrics JSON lines.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated sizes; `full` is the whole training file.
    #[arg(long, value_delimiter = ',', default_values_t = vec!["250".to_string(), "500".into(), "750".into(), "1000".into(), "full".into()])]
    sizes: Vec<String>,
    #[arg(long, default_value_t = 3)]
    samples: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec!["baseline".to_string(), "da".into(), "mixda".into(), "mixmatch".into()])]
    methods: Vec<String>,
    /// Seed of the subsample draws.
    #[arg(long, default_value_t = 0)]
    plan_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        task: a.task,
        labeled: a.labeled.unwrap_or(d.labeled),
        unlabeled: a.unlabeled.unwrap_or(d.unlabeled),
        dev: a.dev.unwrap_or(d.dev),
        test: a.test.unwrap_or(d.test),
        ..d
    };
    let corpus = gen_synthetic(&spec, &RngStream::new(a.seed))?;
    std::fs::create_dir_all(&a.out)?;
    write_synthetic(&a.out, &corpus)
}

fn read_token_lists(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UnlabeledRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec.tokens);
    }
    Ok(out)
}

fn run_tfidf(a: &TfidfArgs) -> Result<()> {
    let mut docs = Vec::new();
    for p in &a.inputs {
        docs.extend(read_token_lists(p)?);
    }
    let table = build_tfidf(&docs)?;
    let mut w: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    writeln!(w, "token\tdf\tidf\tscore")?;
    for (tok, df, idf, score) in table.rows() {
        writeln!(w, "{tok}\t{df}\t{idf}\t{score}")?;
    }
    w.flush()?;
    Ok(())
}

fn run_augment(a: &AugmentArgs) -> Result<()> {
    let config = TrainConfig {
        task: a.task,
        op: a.op.parse()?,
        polarity_guard: a.polarity_guard,
        polarity_lexicon: a.polarity_lexicon.clone(),
        embeddings: a.embeddings.clone(),
        ..TrainConfig::default()
    };
    let train = load_labeled(&a.input, a.task, None)?;
    let unlabeled = match &a.unlabeled {
        Some(p) => mixnl::corpus::load_unlabeled(p, &train.schema)?,
        None => Vec::new(),
    };
    let data = TrainData {
        dev: Dataset::new(train.schema.clone(), Vec::new()),
        train,
        unlabeled,
    };
    let resources = AugmentResources::build(&config, &data)?;
    let schema = &data.train.schema;
    let tables = resources.tables(schema);
    let spec = OpSpec::new(config.op).with_guard(config.polarity_guard);
    let root = RngStream::new(a.seed);
    let mut w = BufWriter::new(File::create(&a.out)?);
    for (i, ex) in data.train.examples.iter().enumerate() {
        let aug = augment(ex, &spec, &tables, &mut root.child("example", i as u64))?;
        let mut rec = example_record(&aug.example, schema);
        let obj = rec.as_object_mut().expect("records are objects");
        obj.insert("op".into(), Value::from(aug.op.name()));
        obj.insert("edits".into(), serde_json::to_value(&aug.edits)?);
        if !aug.flags.is_empty() {
            obj.insert("flags".into(), serde_json::to_value(&aug.flags)?);
        }
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let config = a.resolve()?;
    let out = train(&config)?;
    let dev: Map<String, Value> = out
        .best_dev
        .metrics()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.into()))
        .collect();
    println!(
        "{}",
        serde_json::json!({ "best-epoch": out.best_epoch, "dev": dev })
    );
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let t = load_trained(&a.checkpoint)?;
    let task = if t.schema.is_tagging() {
        Task::Tagging
    } else {
        Task::Spancls
    };
    let data = load_labeled(&a.data, task, Some(&t.schema))?;
    let scores = evaluate(&t.model, &t.vocab, &data)?;
    if let Some(p) = &a.metrics {
        write_metrics(p, &scores.records(0, "eval"))?;
    }
    let obj: Map<String, Value> = scores
        .metrics()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.into()))
        .collect();
    println!("{}", Value::Object(obj));
    Ok(())
}

fn run_experiment_cmd(a: &ExperimentArgs) -> Result<()> {
    let config = a.train.resolve()?;
    let plan = ExperimentPlan {
        sizes: a
            .sizes
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<SampleSize>>>()?,
        samples: a.samples,
        runs: a.runs,
        methods: a
            .methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<Method>>>()?,
        seed: a.plan_seed,
    };
    let data = TrainData::load(&config)?;
    if plan.methods.contains(&Method::Mixmatch) && data.unlabeled.is_empty() {
        return Err(Error::Config(
            "method mixmatch needs an unlabeled file".into(),
        ));
    }
    let test = load_labeled(&a.test, config.task, Some(&data.train.schema))?;
    let table = run_experiment(&plan, &config, &data, &test)?;
    table.save_csv(&a.out)?;
    let metric = if config.task == Task::Tagging {
        "f1"
    } else {
        "macro-f1"
    };
    for ((size, method), mean) in table.means(metric) {
        println!("{size}\t{}\t{metric}\t{mean:.4}", method.name());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Tfidf(a) => run_tfidf(a),
        Command::Augment(a) => run_augment(a),
        Command::Train(a) => run_train(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Experiment(a) => run_experiment_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
