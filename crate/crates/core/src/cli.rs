//! Command-line front end. Every command writes a JSON manifest next to its
//! main output recording the arguments, resolved configuration and seeds;
//! `replay --manifest` re-executes it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{parse_corpus, parse_corpus_with_vocab, parse_ground_truth, ground_truth_to_jsonl, PlanCorpus};
use crate::evaluation::{
    benchmark_training, cross_validate, rows_to_csv, sort_rows, train_kind, Cell, ExperimentSpec, Masking,
};
use crate::recognizer::{recognize, ContextEncoding, RecognitionConfig};
use crate::rng;
use crate::synthesis::{
    alignment_to_jsonl, cooccurrence_similarity, generate_ground_truth, parse_alignment,
    parse_similarity_table, synthesize_corpus, EntropyPreset, GeneratorConfig, GroundTruth,
    SimilarityMatrix, SynthesisConfig,
};
use crate::trainer::{EmbeddingModel, ModelKind, TrainingConfig};

/// Environment variable holding the log filter (e.g. `info`, `udup=debug`).
pub const LOG_ENV: &str = "UDUP_LOG";

const STREAMS: [&str; 5] = ["synthesis", "masking", "folds", "init", "resampling"];

#[derive(Parser, Debug)]
#[command(name = "udup", version, about = "Action-distribution embeddings and plan completion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize an uncertain corpus from ground-truth traces.
    Synth(SynthArgs),
    /// Train an embedding model on a corpus.
    Train(TrainArgs),
    /// Fill the missing steps of a query corpus.
    Recognize(RecognizeArgs),
    /// Run the evaluation protocol.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Describe stored artifacts.
    #[command(subcommand)]
    Inspect(InspectCommand),
    /// Generate a ground-truth plan library.
    Groundtruth(GroundTruthArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Cross-validate every model over the PER × entropy × length grid.
    Grid(EvalArgs),
    /// Cross-validate one model on a given corpus and alignment.
    Cv(CvArgs),
    /// Training wall-time per model and sample count.
    Bench(EvalArgs),
}

#[derive(Subcommand, Debug)]
pub enum InspectCommand {
    Model { path: PathBuf },
}

fn parse_rate(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_entropy(s: &str) -> Result<EntropyPreset, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// Ground-truth traces, JSON Lines of action-name arrays.
    #[arg(long)]
    pub gt: PathBuf,
    /// Distribution size.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, default_value_t = 0.0, value_parser = parse_rate)]
    pub per: f64,
    #[arg(long, default_value = "standard", value_parser = parse_entropy)]
    pub entropy: EntropyPreset,
    /// Entropy weights drawn per step.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pub w_entropy: Vec<f64>,
    /// Similarity table, JSON Lines of `[action, action, s]`.
    #[arg(long)]
    pub similarity: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.alignment.jsonl`.
    #[arg(long)]
    pub alignment: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_model)]
    pub model: ModelKind,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long = "lr", default_value_t = 0.025)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Top paths kept and resampled per trace (RBM only).
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    /// Report errors as the true KL divergence.
    #[arg(long)]
    pub include_z: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RecognizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Query corpus; `null` steps are missing.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Recommendations per missing position.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub topk: u64,
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    #[arg(long, default_value_t = 10)]
    pub max_sweeps: usize,
    /// Context encoding; defaults to the one matching the model kind.
    #[arg(long, value_parser = ["distribution", "argmax"])]
    pub context: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct EvalArgs {
    /// JSON experiment spec; flags override its values.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Ground truth; the built-in generator is used when absent.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub similarity: Option<PathBuf>,
    /// Corpus to evaluate (`cv`, required) or time (`bench`, instead of a
    /// synthesized one).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    pub models: Option<Vec<ModelKind>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_rate)]
    pub per: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_entropy)]
    pub entropy: Option<Vec<EntropyPreset>>,
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<usize>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub w_entropy: Option<Vec<f64>>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub folds: Option<u64>,
    #[arg(long, conflicts_with = "mask_fraction")]
    pub mask_count: Option<usize>,
    #[arg(long)]
    pub mask_fraction: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub topk: Option<u64>,
    /// Count only the filled action, not the whole top-k list.
    #[arg(long)]
    pub strict_argmax: bool,
    /// Fill the train_seconds column (makes the CSV run-dependent).
    #[arg(long)]
    pub record_time: bool,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct CvArgs {
    #[arg(long, value_parser = parse_model)]
    pub model: ModelKind,
    /// Ground-truth action per step, JSON Lines.
    #[arg(long)]
    pub alignment: PathBuf,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GeneratorArgs {
    #[arg(long)]
    pub gen_stages: Option<usize>,
    #[arg(long)]
    pub gen_variants: Option<usize>,
    #[arg(long)]
    pub gen_main_probability: Option<f64>,
    #[arg(long)]
    pub gen_traces: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct GroundTruthArgs {
    #[arg(long, default_value_t = 30)]
    pub length: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Record written next to every output artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name; `replay` parses them again.
    pub args: Vec<String>,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_seconds: f64,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn default_alignment_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".alignment.jsonl");
    PathBuf::from(name)
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn seeds_for(seed: Option<u64>) -> BTreeMap<String, u64> {
    let Some(seed) = seed else {
        return BTreeMap::new();
    };
    let mut seeds = BTreeMap::from([("base".to_string(), seed)]);
    for name in STREAMS {
        seeds.insert(name.to_string(), rng::derive_seed(seed, name, 0));
    }
    seeds
}

struct Outcome {
    config: Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn ground_truth_from(path: &Path) -> anyhow::Result<GroundTruth> {
    let raw = parse_ground_truth(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    Ok(GroundTruth::from_symbols(&raw)?)
}

fn similarity_for(gt: &GroundTruth, table: Option<&Path>) -> anyhow::Result<SimilarityMatrix> {
    Ok(match table {
        Some(path) => parse_similarity_table(&read(path)?, &gt.vocab)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => cooccurrence_similarity(&gt.traces, gt.vocab.len())?,
    })
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<Outcome> {
    let gt = ground_truth_from(&a.gt)?;
    let sim = similarity_for(&gt, a.similarity.as_deref())?;
    let config = SynthesisConfig {
        k: a.k as usize,
        w_entropy_choices: a.w_entropy.clone(),
        per: a.per,
        entropy: a.entropy,
        seed: a.seed,
    };
    let (corpus, alignment) = synthesize_corpus(&gt, &sim, &config)?;
    let align_path = a.alignment.clone().unwrap_or_else(|| default_alignment_path(&a.out));
    write(&a.out, &corpus.to_jsonl())?;
    write(&align_path, &alignment_to_jsonl(&alignment, &gt.vocab))?;
    log::info!("synthesized {} traces over {} actions", corpus.len(), corpus.vocab().len());
    let mut inputs = vec![a.gt.clone()];
    inputs.extend(a.similarity.clone());
    Ok(Outcome {
        config: json!({ "synthesis": config, "similarity": if a.similarity.is_some() { "table" } else { "cooccurrence" } }),
        seed: Some(a.seed),
        inputs,
        outputs: vec![a.out.clone(), align_path],
    })
}

fn load_corpus(path: &Path) -> anyhow::Result<PlanCorpus> {
    parse_corpus(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_train(a: &TrainArgs) -> anyhow::Result<Outcome> {
    let corpus = load_corpus(&a.corpus)?;
    let config = TrainingConfig {
        dim: a.dim,
        window: a.window,
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        workers: a.workers,
        seed: a.seed,
        include_constant_z: a.include_z,
    };
    let samples = (a.model == ModelKind::Rbm).then_some(a.samples as usize);
    let resample_seed = rng::derive_seed(a.seed, "resampling", 0);
    let model = train_kind(a.model, &corpus, samples, &config, resample_seed)?;
    let error = crate::trainer::mean_corpus_error(
        &model,
        &crate::evaluation::prepare_training_corpus(a.model, &corpus, samples, resample_seed)?,
        a.window,
        a.include_z,
    )?;
    log::info!("trained {} model, mean pair error {error:.6}", a.model);
    write(&a.out, &model.to_json())?;
    Ok(Outcome {
        config: json!({ "model": a.model, "training": config, "samples": samples, "mean_pair_error": error }),
        seed: Some(a.seed),
        inputs: vec![a.corpus.clone()],
        outputs: vec![a.out.clone()],
    })
}

fn load_model(path: &Path) -> anyhow::Result<EmbeddingModel> {
    EmbeddingModel::from_json(&read(path)?).with_context(|| format!("loading model {}", path.display()))
}

fn cmd_recognize(a: &RecognizeArgs) -> anyhow::Result<Outcome> {
    let model = load_model(&a.model)?;
    let corpus = parse_corpus_with_vocab(&read(&a.corpus)?, model.vocab())
        .with_context(|| format!("query {} does not match the model vocabulary", a.corpus.display()))?;
    let config = RecognitionConfig {
        window: a.window,
        recommendations: a.topk as usize,
        max_sweeps: a.max_sweeps,
        context: a.context.as_deref().map(|c| match c {
            "argmax" => ContextEncoding::Argmax,
            _ => ContextEncoding::Distribution,
        }),
    };
    let vocab = model.vocab();
    let mut out = String::new();
    for (ti, trace) in corpus.traces().iter().enumerate() {
        let r = recognize(trace, &model, &config).with_context(|| format!("trace {ti}"))?;
        let filled: BTreeMap<String, &str> = r
            .filled
            .iter()
            .map(|(p, a)| (p.to_string(), vocab.symbol(*a)))
            .collect();
        let recs: BTreeMap<String, Vec<(&str, f64)>> = r
            .recommendations
            .iter()
            .map(|(p, list)| {
                (p.to_string(), list.iter().map(|(a, s)| (vocab.symbol(*a), *s)).collect())
            })
            .collect();
        let line = json!({
            "trace": ti,
            "filled": filled,
            "score": r.score,
            "recommendations": recs,
            "sweeps": r.sweeps,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    write(&a.out, &out)?;
    Ok(Outcome {
        config: json!({ "recognition": config, "model_kind": model.kind() }),
        seed: None,
        inputs: vec![a.model.clone(), a.corpus.clone()],
        outputs: vec![a.out.clone()],
    })
}

/// Defaults, then the spec file, then flags.
pub fn resolve_spec(a: &EvalArgs) -> anyhow::Result<ExperimentSpec> {
    let mut spec = match &a.spec {
        Some(path) => serde_json::from_str(&read(path)?)
            .with_context(|| format!("parsing spec {}", path.display()))?,
        None => ExperimentSpec::default(),
    };
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value.clone() {
                $field = v;
            }
        };
    }
    set!(spec.models, a.models);
    set!(spec.per, a.per);
    set!(spec.entropy, a.entropy);
    set!(spec.lengths, a.lengths);
    set!(spec.samples, a.samples);
    set!(spec.k, a.k);
    set!(spec.w_entropy_choices, a.w_entropy);
    set!(spec.training.dim, a.dim);
    set!(spec.training.window, a.window);
    set!(spec.training.epochs, a.epochs);
    set!(spec.training.learning_rate, a.learning_rate);
    set!(spec.training.workers, a.workers);
    set!(spec.repetitions, a.repetitions);
    set!(spec.seed, a.seed);
    if let Some(f) = a.folds {
        spec.folds = f as usize;
    }
    if let Some(r) = a.topk {
        spec.recognition.recommendations = r as usize;
    }
    if let Some(w) = a.window {
        spec.recognition.window = w;
    }
    if let Some(c) = a.mask_count {
        spec.masking = Masking::Count(c);
    }
    if let Some(f) = a.mask_fraction {
        spec.masking = Masking::Fraction(f);
    }
    spec.strict_argmax |= a.strict_argmax;
    spec.record_time |= a.record_time;
    spec.validate()?;
    Ok(spec)
}

fn generator_config(g: &GeneratorArgs, length: usize, seed: u64) -> GeneratorConfig {
    let d = GeneratorConfig::default();
    GeneratorConfig {
        stages: g.gen_stages.unwrap_or(d.stages),
        variants: g.gen_variants.unwrap_or(d.variants),
        main_probability: g.gen_main_probability.unwrap_or(d.main_probability),
        traces: g.gen_traces.unwrap_or(d.traces),
        length,
        seed,
    }
}

fn eval_ground_truth(a: &EvalArgs, spec: &ExperimentSpec) -> anyhow::Result<(GroundTruth, Value)> {
    match &a.gt {
        Some(path) => Ok((ground_truth_from(path)?, json!({ "file": path }))),
        None => {
            let length = spec.lengths.iter().copied().max().unwrap_or(2);
            let config = generator_config(&a.generator, length, spec.seed);
            let raw = generate_ground_truth(&config)?;
            Ok((GroundTruth::from_symbols(&raw)?, json!({ "generator": config })))
        }
    }
}

fn eval_inputs(a: &EvalArgs) -> Vec<PathBuf> {
    [&a.spec, &a.gt, &a.similarity, &a.corpus]
        .into_iter()
        .flatten()
        .cloned()
        .collect()
}

fn cmd_grid(a: &EvalArgs) -> anyhow::Result<Outcome> {
    let spec = resolve_spec(a)?;
    let (gt, source) = eval_ground_truth(a, &spec)?;
    let sim = similarity_for(&gt, a.similarity.as_deref())?;
    let rows = crate::evaluation::run_grid(&spec, &gt, &sim)?;
    write(&a.out, &rows_to_csv(&rows)?)?;
    Ok(Outcome {
        config: json!({ "spec": spec, "ground_truth": source }),
        seed: Some(spec.seed),
        inputs: eval_inputs(a),
        outputs: vec![a.out.clone()],
    })
}

fn mismatch_rate(corpus: &PlanCorpus, alignment: &[Vec<usize>]) -> f64 {
    let (mut wrong, mut total) = (0usize, 0usize);
    for (trace, truth) in corpus.traces().iter().zip(alignment) {
        for (step, &g) in trace.steps().iter().zip(truth) {
            if let Some(d) = step.known() {
                total += 1;
                wrong += usize::from(d.argmax() != g);
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        wrong as f64 / total as f64
    }
}

fn cmd_cv(a: &CvArgs) -> anyhow::Result<Outcome> {
    let spec = resolve_spec(&a.eval)?;
    let Some(corpus_path) = &a.eval.corpus else {
        bail!("eval cv needs --corpus");
    };
    let corpus = load_corpus(corpus_path)?;
    let alignment = parse_alignment(&read(&a.alignment)?, corpus.vocab())
        .with_context(|| format!("parsing {}", a.alignment.display()))?;
    let cell = Cell {
        model: a.model,
        per: mismatch_rate(&corpus, &alignment),
        entropy: spec.entropy.first().copied().unwrap_or(EntropyPreset::Standard),
        length: corpus.traces().iter().map(|t| t.len()).max().unwrap_or(0),
        samples: (a.model == ModelKind::Rbm)
            .then(|| spec.samples.first().copied())
            .flatten(),
    };
    let mut rows = cross_validate(&spec, &cell, &corpus, &alignment)?;
    sort_rows(&mut rows);
    write(&a.eval.out, &rows_to_csv(&rows)?)?;
    let mut inputs = eval_inputs(&a.eval);
    inputs.push(a.alignment.clone());
    Ok(Outcome {
        config: json!({ "spec": spec, "model": a.model }),
        seed: Some(spec.seed),
        inputs,
        outputs: vec![a.eval.out.clone()],
    })
}

fn cmd_bench(a: &EvalArgs) -> anyhow::Result<Outcome> {
    let mut spec = resolve_spec(a)?;
    if a.samples.is_none() && a.spec.is_none() {
        spec.samples = vec![5, 10, 15, 20, 25];
    }
    let per = spec.per.first().copied().unwrap_or(0.0);
    let entropy = spec.entropy.first().copied().unwrap_or(EntropyPreset::Standard);
    let (corpus, source, length) = match &a.corpus {
        Some(path) => {
            let c = load_corpus(path)?;
            let len = c.traces().iter().map(|t| t.len()).max().unwrap_or(0);
            (c, json!({ "corpus": path }), len)
        }
        None => {
            let (gt, source) = eval_ground_truth(a, &spec)?;
            let length = spec.lengths.iter().copied().max().unwrap_or(2);
            let sim = similarity_for(&gt, a.similarity.as_deref())?;
            let synth = SynthesisConfig {
                k: spec.k,
                w_entropy_choices: spec.w_entropy_choices.clone(),
                per,
                entropy,
                seed: spec.seed,
            };
            let (c, _) = synthesize_corpus(&gt.truncated(length), &sim, &synth)?;
            (c, json!({ "ground_truth": source, "synthesis": synth }), length)
        }
    };
    let rows = benchmark_training(&spec, &corpus, (per, entropy, length))?;
    write(&a.out, &rows_to_csv(&rows)?)?;
    Ok(Outcome {
        config: json!({ "spec": spec, "source": source }),
        seed: Some(spec.seed),
        inputs: eval_inputs(a),
        outputs: vec![a.out.clone()],
    })
}

fn cmd_inspect_model(path: &Path) -> anyhow::Result<()> {
    let model = load_model(path)?;
    let vocab = model.vocab();
    let norms: Vec<f64> = (0..vocab.len())
        .map(|a| model.embedding_row(a).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let summary = json!({
        "kind": model.kind(),
        "dim": model.dim(),
        "actions": vocab.len(),
        "inner_nodes": model.tree().inner_node_count(),
        "max_code_length": model.tree().max_depth(),
        "vocabulary": vocab.symbols().iter().zip(vocab.counts()).zip(&norms)
            .map(|((s, c), n)| json!({ "action": s, "count": c, "embedding_norm": n }))
            .collect::<Vec<_>>(),
    });
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", serde_json::to_string_pretty(&summary)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn cmd_groundtruth(a: &GroundTruthArgs) -> anyhow::Result<Outcome> {
    let config = generator_config(&a.generator, a.length, a.seed);
    let raw = generate_ground_truth(&config)?;
    write(&a.out, &ground_truth_to_jsonl(&raw))?;
    Ok(Outcome {
        config: json!({ "generator": config }),
        seed: Some(a.seed),
        inputs: vec![],
        outputs: vec![a.out.clone()],
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Train(_) => "train",
        Command::Recognize(_) => "recognize",
        Command::Eval(EvalCommand::Grid(_)) => "eval grid",
        Command::Eval(EvalCommand::Cv(_)) => "eval cv",
        Command::Eval(EvalCommand::Bench(_)) => "eval bench",
        Command::Inspect(_) => "inspect model",
        Command::Groundtruth(_) => "groundtruth",
        Command::Replay { .. } => "replay",
    }
}

/// Executes already-split arguments (without the program name).
pub fn run(args: &[String]) -> anyhow::Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("udup".to_string()).chain(args.iter().cloned()))?;
    let start = Instant::now();
    let outcome = match &cli.command {
        Command::Synth(a) => cmd_synth(a)?,
        Command::Train(a) => cmd_train(a)?,
        Command::Recognize(a) => cmd_recognize(a)?,
        Command::Eval(EvalCommand::Grid(a)) => cmd_grid(a)?,
        Command::Eval(EvalCommand::Cv(a)) => cmd_cv(a)?,
        Command::Eval(EvalCommand::Bench(a)) => cmd_bench(a)?,
        Command::Groundtruth(a) => cmd_groundtruth(a)?,
        Command::Inspect(InspectCommand::Model { path }) => return cmd_inspect_model(path),
        Command::Replay { manifest } => {
            let m: RunManifest = serde_json::from_str(&read(manifest)?)
                .with_context(|| format!("parsing manifest {}", manifest.display()))?;
            if m.tool != env!("CARGO_PKG_NAME") {
                bail!("manifest was written by {:?}", m.tool);
            }
            log::info!("replaying `{}`", m.command);
            return run(&m.args);
        }
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command_name(&cli.command).into(),
        args: args.to_vec(),
        config: outcome.config,
        seeds: seeds_for(outcome.seed),
        inputs: outcome.inputs,
        outputs: outcome.outputs.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write(&manifest_path(&outcome.outputs[0]), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Process entry point; returns the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => 0,
        Err(e) => match e.downcast_ref::<clap::Error>() {
            Some(ce) => {
                let _ = ce.print();
                ce.exit_code()
            }
            None => {
                eprintln!("error: {e:#}");
                1
            }
        },
    }
}
