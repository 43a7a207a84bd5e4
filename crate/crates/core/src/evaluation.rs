//! Measurement protocol: masking, accuracy, k-fold cross-validation, model
//! comparison grids and training-time benchmarks.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DistributionTrace, PlanCorpus};
use crate::error::{Error, Result};
use crate::recognizer::{recognize, RecognitionConfig};
use crate::resampler::rbm_prepare;
use crate::rng;
use crate::synthesis::{synthesize_corpus, Alignment, EntropyPreset, GroundTruth, SimilarityProvider, SynthesisConfig};
use crate::trainer::{train_corpus, EmbeddingModel, ModelKind, TrainingConfig};

/// How many steps of each test trace to hide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Masking {
    Count(usize),
    /// `round(f · T)`, at least one.
    Fraction(f64),
}

impl Masking {
    pub fn count_for(self, len: usize) -> Result<usize> {
        let count = match self {
            Masking::Count(c) => c,
            Masking::Fraction(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Config(format!("mask fraction {f} outside (0, 1)")));
                }
                ((f * len as f64).round() as usize).max(1)
            }
        };
        if count == 0 {
            return Err(Error::Config("mask count must be at least 1".into()));
        }
        if count >= len {
            return Err(Error::Config(format!(
                "cannot mask {count} of {len} steps: at least one must stay known"
            )));
        }
        Ok(count)
    }
}

/// Hides uniformly chosen steps; returns the masked trace and the ground truth
/// of every hidden position.
pub fn mask_positions<R: Rng + ?Sized>(
    trace: &DistributionTrace,
    truth: &[usize],
    masking: Masking,
    rng: &mut R,
) -> Result<(DistributionTrace, BTreeMap<usize, usize>)> {
    if truth.len() != trace.len() {
        return Err(Error::Config("alignment length differs from trace length".into()));
    }
    let count = masking.count_for(trace.len())?;
    let mut positions = rand::seq::index::sample(rng, trace.len(), count).into_vec();
    positions.sort_unstable();
    let hidden = positions.iter().map(|&p| (p, truth[p])).collect();
    Ok((trace.with_missing(&positions), hidden))
}

/// Mean over test traces of `correct_i / masked_i`.
pub fn accuracy(results: &[(usize, usize)]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut sum = 0.0;
    for &(correct, masked) in results {
        if masked == 0 || correct > masked {
            return Err(Error::Config(format!(
                "invalid result: {correct} correct of {masked} masked"
            )));
        }
        sum += correct as f64 / masked as f64;
    }
    Ok(sum / results.len() as f64)
}

/// Seeded shuffle split into `folds` near-equal parts; the first `n % folds`
/// parts get one extra trace.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config("folds must be at least 2".into()));
    }
    if n < folds {
        return Err(Error::Config(format!("{n} traces cannot fill {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "folds", 0));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let mut part = order[start..start + size].to_vec();
        part.sort_unstable();
        out.push(part);
        start += size;
    }
    Ok(out)
}

/// Training epochs of the experiment protocol; the small synthetic corpora
/// leave models undertrained at the trainer's default.
pub const EXPERIMENT_EPOCHS: usize = 30;

/// Axes and settings of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub models: Vec<ModelKind>,
    pub per: Vec<f64>,
    pub entropy: Vec<EntropyPreset>,
    pub lengths: Vec<usize>,
    /// Resampler `N` grid (RBM only in grids, every model in benchmarks).
    pub samples: Vec<usize>,
    /// Distribution size of synthesized steps.
    pub k: usize,
    pub w_entropy_choices: Vec<f64>,
    pub masking: Masking,
    pub folds: usize,
    pub training: TrainingConfig,
    pub recognition: RecognitionConfig,
    /// Count a prediction correct only if it is the filled action rather than
    /// anywhere in the top-R list.
    pub strict_argmax: bool,
    /// Fill in training wall-time in cross-validation rows.
    pub record_time: bool,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Nm, ModelKind::Rbm, ModelKind::Distr2Vec],
            per: vec![0.25, 0.5, 0.75, 1.0],
            entropy: vec![EntropyPreset::Standard],
            lengths: vec![10, 20, 30],
            samples: vec![15],
            k: 3,
            w_entropy_choices: vec![0.0, 1.0],
            masking: Masking::Count(1),
            folds: 6,
            training: TrainingConfig {
                epochs: EXPERIMENT_EPOCHS,
                ..TrainingConfig::default()
            },
            recognition: RecognitionConfig::default(),
            strict_argmax: false,
            record_time: false,
            repetitions: 3,
            seed: 1,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.per.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("PER values must lie in [0, 1]".into()));
        }
        if self.samples.iter().any(|&n| n == 0) {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if self.lengths.iter().any(|&l| l < 2) {
            return Err(Error::Config("trace lengths must be at least 2".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.training.validate()?;
        self.recognition.validate()
    }

    fn synthesis(&self, per: f64, entropy: EntropyPreset) -> SynthesisConfig {
        SynthesisConfig {
            k: self.k,
            w_entropy_choices: self.w_entropy_choices.clone(),
            per,
            entropy,
            seed: self.seed,
        }
    }

    fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            seed: self.seed,
            ..self.training.clone()
        }
    }
}

/// One experiment cell: a model (with its sample count for RBM) on one
/// synthesized corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub model: ModelKind,
    pub per: f64,
    pub entropy: EntropyPreset,
    pub length: usize,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: ModelKind,
    pub per: f64,
    pub entropy: EntropyPreset,
    pub length: usize,
    pub samples: Option<usize>,
    pub fold: Option<usize>,
    pub accuracy: Option<f64>,
    pub train_seconds: Option<f64>,
}

impl MetricsRow {
    fn new(cell: &Cell) -> Self {
        Self {
            model: cell.model,
            per: cell.per,
            entropy: cell.entropy,
            length: cell.length,
            samples: cell.samples,
            fold: None,
            accuracy: None,
            train_seconds: None,
        }
    }
}

/// Deterministic order: model, PER, entropy, length, N, fold.
pub fn sort_rows(rows: &mut [MetricsRow]) {
    rows.sort_by(|a, b| {
        a.model
            .cmp(&b.model)
            .then(a.per.total_cmp(&b.per))
            .then(a.entropy.cmp(&b.entropy))
            .then(a.length.cmp(&b.length))
            .then(a.samples.cmp(&b.samples))
            .then(a.fold.cmp(&b.fold))
    });
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "model",
            "per",
            "entropy",
            "length",
            "samples",
            "fold",
            "accuracy",
            "train_seconds",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Model-specific training corpus: argmax reduction for NM, top-N resampling
/// for RBM, raw distributions for Distr2Vec.
pub fn prepare_training_corpus(
    kind: ModelKind,
    corpus: &PlanCorpus,
    samples: Option<usize>,
    seed: u64,
) -> Result<PlanCorpus> {
    match kind {
        ModelKind::Nm => Ok(corpus.argmax_reduced()),
        ModelKind::Rbm => {
            let n = samples.ok_or_else(|| Error::Config("RBM needs a sample count".into()))?;
            rbm_prepare(corpus, n, n, seed)
        }
        ModelKind::Distr2Vec => Ok(corpus.clone()),
    }
}

/// Preprocesses and trains one model.
pub fn train_kind(
    kind: ModelKind,
    corpus: &PlanCorpus,
    samples: Option<usize>,
    config: &TrainingConfig,
    resample_seed: u64,
) -> Result<EmbeddingModel> {
    let prepared = prepare_training_corpus(kind, corpus, samples, resample_seed)?;
    Ok(train_corpus(&prepared, config)?.with_kind(kind))
}

/// Masks and recognizes every trace in `test`, returning
/// `(correct, masked)` per trace.
pub fn evaluate_traces(
    model: &EmbeddingModel,
    corpus: &PlanCorpus,
    alignment: &Alignment,
    test: &[usize],
    spec: &ExperimentSpec,
) -> Result<Vec<(usize, usize)>> {
    test.iter()
        .map(|&ti| {
            let mut rng = rng::stream(spec.seed, "masking", ti as u64);
            let (masked, hidden) =
                mask_positions(&corpus.traces()[ti], &alignment[ti], spec.masking, &mut rng)?;
            let result = recognize(&masked, model, &spec.recognition)?;
            let correct = hidden
                .iter()
                .filter(|(p, gt)| {
                    if spec.strict_argmax {
                        result.filled.get(p) == Some(gt)
                    } else {
                        result.recommendations[p].iter().any(|(a, _)| a == *gt)
                    }
                })
                .count();
            Ok((correct, hidden.len()))
        })
        .collect()
}

/// k-fold cross-validation of one cell; one row per fold.
pub fn cross_validate(
    spec: &ExperimentSpec,
    cell: &Cell,
    corpus: &PlanCorpus,
    alignment: &Alignment,
) -> Result<Vec<MetricsRow>> {
    spec.validate()?;
    if alignment.len() != corpus.len() {
        return Err(Error::Config("alignment and corpus sizes differ".into()));
    }
    let folds = fold_partition(corpus.len(), spec.folds, spec.seed)?;
    let config = spec.training_config();
    let mut rows = Vec::with_capacity(folds.len());
    for (f, test) in folds.iter().enumerate() {
        let train_ids: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, part)| part.iter().copied())
            .collect();
        let train = corpus.subset(&train_ids);
        let resample_seed = rng::derive_seed(spec.seed, "resampling", f as u64);
        let start = Instant::now();
        let model = train_kind(cell.model, &train, cell.samples, &config, resample_seed)?;
        let seconds = start.elapsed().as_secs_f64();
        let results = evaluate_traces(&model, corpus, alignment, test, spec)?;
        let acc = accuracy(&results)?;
        log::debug!("{} per={} len={} fold={f}: {acc:.3}", cell.model, cell.per, cell.length);
        rows.push(MetricsRow {
            fold: Some(f),
            accuracy: Some(acc),
            train_seconds: spec.record_time.then_some(seconds),
            ..MetricsRow::new(cell)
        });
    }
    Ok(rows)
}

fn cells_for(spec: &ExperimentSpec, per: f64, entropy: EntropyPreset, length: usize) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &model in &spec.models {
        let samples: Vec<Option<usize>> = match model {
            ModelKind::Rbm => spec.samples.iter().copied().map(Some).collect(),
            _ => vec![None],
        };
        for samples in samples {
            cells.push(Cell {
                model,
                per,
                entropy,
                length,
                samples,
            });
        }
    }
    cells
}

/// Synthesizes one corpus per (length, PER, entropy) and cross-validates every
/// model on it. Rows come back sorted.
pub fn run_grid(
    spec: &ExperimentSpec,
    gt: &GroundTruth,
    provider: &dyn SimilarityProvider,
) -> Result<Vec<MetricsRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &length in &spec.lengths {
        let truncated = gt.truncated(length);
        if spec.per.is_empty() || spec.entropy.is_empty() || spec.models.is_empty() {
            continue;
        }
        if truncated.traces.len() < spec.folds {
            return Err(Error::Config(format!(
                "only {} ground-truth traces reach length {length}",
                truncated.traces.len()
            )));
        }
        for &per in &spec.per {
            for &entropy in &spec.entropy {
                let (corpus, alignment) =
                    synthesize_corpus(&truncated, provider, &spec.synthesis(per, entropy))?;
                for cell in cells_for(spec, per, entropy, length) {
                    rows.extend(cross_validate(spec, &cell, &corpus, &alignment)?);
                }
            }
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Mean wall-time of preprocessing plus training on the whole corpus, per
/// model and per `N` of the grid. Repetitions run round-robin over the cells
/// so that machine-wide drift hits every cell alike; the first pass is a
/// discarded warm-up.
pub fn benchmark_training(
    spec: &ExperimentSpec,
    corpus: &PlanCorpus,
    tags: (f64, EntropyPreset, usize),
) -> Result<Vec<MetricsRow>> {
    spec.validate()?;
    let config = spec.training_config();
    let resample_seed = rng::derive_seed(spec.seed, "resampling", 0);
    let cells: Vec<Cell> = spec
        .models
        .iter()
        .flat_map(|&model| {
            spec.samples.iter().map(move |&n| Cell {
                model,
                per: tags.0,
                entropy: tags.1,
                length: tags.2,
                samples: Some(n),
            })
        })
        .collect();
    let run = |cell: &Cell| -> Result<f64> {
        let start = Instant::now();
        let m = train_kind(cell.model, corpus, cell.samples, &config, resample_seed)?;
        std::hint::black_box(&m);
        Ok(start.elapsed().as_secs_f64())
    };
    let mut totals = vec![0.0; cells.len()];
    for pass in 0..=spec.repetitions {
        for (cell, total) in cells.iter().zip(totals.iter_mut()) {
            let t = run(cell)?;
            if pass > 0 {
                *total += t;
            }
        }
    }
    let mut rows: Vec<MetricsRow> = cells
        .iter()
        .zip(totals)
        .map(|(cell, total)| MetricsRow {
            train_seconds: Some(total / spec.repetitions as f64),
            ..MetricsRow::new(cell)
        })
        .collect();
    sort_rows(&mut rows);
    Ok(rows)
}

/// Mean accuracy over all rows matching `pred`.
pub fn mean_accuracy(rows: &[MetricsRow], pred: impl Fn(&MetricsRow) -> bool) -> Option<f64> {
    let acc: Vec<f64> = rows.iter().filter(|r| pred(r)).filter_map(|r| r.accuracy).collect();
    (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
}
