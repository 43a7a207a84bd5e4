//! Distribution-to-vector embeddings trained with a KL + hierarchical-softmax
//! objective.
//!
//! The input step's distribution is projected through the embedding matrix
//! (`h = Σ c_k · W_E[a_k]`), and every action of the target distribution is
//! scored by the product of sigmoids along its Huffman path. With one-hot
//! steps everywhere the update is exactly a skip-gram hierarchical-softmax step.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{ActionDistribution, ActionVocab, ObservationStep, PlanCorpus};
use crate::error::{Error, Result};
use crate::huffman::{HuffmanTree, LEFT};
use crate::rng;

/// Sigmoid arguments are clamped to this magnitude.
pub const SIGMOID_CLAMP: f64 = 30.0;

/// The learning rate never decays below this fraction of its initial value.
pub const MIN_LR_FRACTION: f64 = 1e-4;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn ln_sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    -(-x).exp().ln_1p()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How a training corpus was prepared before skip-gram / Distr2Vec training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Argmax-reduced ("naive") corpus.
    Nm,
    /// Top-N path resampling.
    Rbm,
    /// Raw distributions.
    Distr2Vec,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nm => "nm",
            ModelKind::Rbm => "rbm",
            ModelKind::Distr2Vec => "distr2vec",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nm" => Ok(ModelKind::Nm),
            "rbm" => Ok(ModelKind::Rbm),
            "distr2vec" | "d2v" => Ok(ModelKind::Distr2Vec),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub dim: usize,
    /// Context radius in steps.
    pub window: usize,
    /// Initial learning rate; decays linearly over all training pairs.
    pub learning_rate: f64,
    pub epochs: usize,
    pub workers: usize,
    pub seed: u64,
    /// Add the target-entropy constant so reported errors equal the true KL.
    pub include_constant_z: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 1,
            learning_rate: 0.025,
            epochs: 5,
            workers: 1,
            seed: 1,
            include_constant_z: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Embedding matrix plus hierarchical-softmax inner-node vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    vocab: ActionVocab,
    tree: HuffmanTree,
    kind: ModelKind,
    dim: usize,
    /// `|vocab| × dim`, row-major.
    embeddings: Vec<f64>,
    /// `(|vocab| - 1) × dim`, row-major.
    inner: Vec<f64>,
}

impl EmbeddingModel {
    /// Embeddings uniform in `[-0.5/dim, 0.5/dim]` from the seed's "init"
    /// stream; inner-node vectors zero.
    pub fn init(vocab: ActionVocab, tree: HuffmanTree, config: &TrainingConfig) -> Result<Self> {
        config.validate()?;
        if tree.leaves() != vocab.len() {
            return Err(Error::Config(format!(
                "tree has {} leaves but vocabulary has {} actions",
                tree.leaves(),
                vocab.len()
            )));
        }
        let dim = config.dim;
        let mut rng = rng::stream(config.seed, "init", 0);
        let bound = 0.5 / dim as f64;
        let embeddings = (0..vocab.len() * dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let inner = vec![0.0; tree.inner_node_count() * dim];
        Ok(Self {
            vocab,
            tree,
            kind: ModelKind::Distr2Vec,
            dim,
            embeddings,
            inner,
        })
    }

    pub fn from_parts(
        vocab: ActionVocab,
        tree: HuffmanTree,
        dim: usize,
        embeddings: Vec<f64>,
        inner: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Model("dim must be at least 1".into()));
        }
        if tree.leaves() != vocab.len() {
            return Err(Error::Model("tree and vocabulary sizes differ".into()));
        }
        if embeddings.len() != vocab.len() * dim || inner.len() != tree.inner_node_count() * dim
        {
            return Err(Error::Model("matrix shapes do not match header".into()));
        }
        if embeddings.iter().chain(&inner).any(|x| !x.is_finite()) {
            return Err(Error::Model("non-finite parameter".into()));
        }
        Ok(Self {
            vocab,
            tree,
            kind: ModelKind::Distr2Vec,
            dim,
            embeddings,
            inner,
        })
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &ActionVocab {
        &self.vocab
    }

    pub fn tree(&self) -> &HuffmanTree {
        &self.tree
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn inner_vectors(&self) -> &[f64] {
        &self.inner
    }

    pub fn embeddings_mut(&mut self) -> &mut [f64] {
        &mut self.embeddings
    }

    pub fn inner_vectors_mut(&mut self) -> &mut [f64] {
        &mut self.inner
    }

    pub fn embedding_row(&self, action: usize) -> &[f64] {
        &self.embeddings[action * self.dim..(action + 1) * self.dim]
    }

    pub fn inner_row(&self, node: usize) -> &[f64] {
        &self.inner[node * self.dim..(node + 1) * self.dim]
    }

    /// `h = W_E^T · encode(d)`.
    pub fn hidden(&self, d: &ActionDistribution) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        for &(a, c) in d.entries() {
            for (hj, w) in h.iter_mut().zip(self.embedding_row(a)) {
                *hj += c * w;
            }
        }
        h
    }

    /// `Σ_i ln σ(code_i · v_i · h)` along the path of `action`.
    pub fn log_hs_probability(&self, h: &[f64], action: usize) -> f64 {
        let (path, code) = self.tree.path(action);
        path.iter()
            .zip(code)
            .map(|(&n, &d)| ln_sigmoid(f64::from(d) * dot(self.inner_row(n as usize), h)))
            .sum()
    }

    pub fn hs_probability(&self, h: &[f64], action: usize) -> f64 {
        let (path, code) = self.tree.path(action);
        path.iter()
            .zip(code)
            .map(|(&n, &d)| sigmoid(f64::from(d) * dot(self.inner_row(n as usize), h)))
            .product()
    }

    /// Predicted distribution over the whole vocabulary.
    pub fn leaf_distribution(&self, h: &[f64]) -> Vec<f64> {
        (0..self.vocab.len())
            .map(|a| self.hs_probability(h, a))
            .collect()
    }

    fn check(&self, d: &ActionDistribution) -> Result<()> {
        d.entries()
            .iter()
            .try_for_each(|&(a, _)| self.vocab.check_id(a))
    }

    // -- model file ---------------------------------------------------------

    pub fn to_json(&self) -> String {
        let n = self.vocab.len();
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.kind,
            dim: self.dim,
            vocab: self.vocab.symbols().to_vec(),
            counts: self.vocab.counts().to_vec(),
            huffman: HuffmanArrays {
                parent: self
                    .tree
                    .parent_array()
                    .iter()
                    .map(|p| p.map_or(-1, |p| p as i64))
                    .collect(),
                direction: self.tree.direction_array().to_vec(),
            },
            embeddings: self.embeddings.chunks(self.dim).map(<[f64]>::to_vec).collect(),
            inner: self.inner.chunks(self.dim).map(<[f64]>::to_vec).collect(),
        };
        debug_assert_eq!(file.embeddings.len(), n);
        let mut s = serde_json::to_string(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported format version {}",
                file.format_version
            )));
        }
        let vocab = ActionVocab::from_parts(file.vocab, file.counts)
            .map_err(|e| Error::Model(e.to_string()))?;
        let parent = file
            .huffman
            .parent
            .iter()
            .map(|&p| usize::try_from(p).ok())
            .collect();
        let tree = HuffmanTree::from_parent_arrays(vocab.len(), parent, file.huffman.direction)?;
        let flatten = |rows: Vec<Vec<f64>>| -> Result<Vec<f64>> {
            if rows.iter().any(|r| r.len() != file.dim) {
                return Err(Error::Model("row width differs from dim".into()));
            }
            Ok(rows.into_iter().flatten().collect())
        };
        let embeddings = flatten(file.embeddings)?;
        let inner = flatten(file.inner)?;
        Ok(Self::from_parts(vocab, tree, file.dim, embeddings, inner)?.with_kind(file.kind))
    }
}

#[derive(Serialize, Deserialize)]
struct HuffmanArrays {
    parent: Vec<i64>,
    direction: Vec<i8>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: ModelKind,
    dim: usize,
    vocab: Vec<String>,
    counts: Vec<u64>,
    huffman: HuffmanArrays,
    embeddings: Vec<Vec<f64>>,
    inner: Vec<Vec<f64>>,
}

/// `Σ_k p_k ln(p_k / q_k)`, skipping terms with `p_k = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Config(format!(
            "length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&pk, &qk)) in p.iter().zip(q).enumerate() {
        if pk == 0.0 {
            continue;
        }
        if qk <= 0.0 {
            return Err(Error::InfiniteDivergence { index: i });
        }
        total += pk * (pk / qk).ln();
    }
    Ok(total)
}

/// Negative entropy `Σ c ln c` of a distribution (the constant Z).
pub fn neg_entropy(d: &ActionDistribution) -> f64 {
    d.entries().iter().map(|&(_, c)| c * c.ln()).sum()
}

/// Error of predicting `target` from `input`:
/// `[Z(target)] − Σ_k c_k Σ_i ln σ(code_i · v_i · h(input))`.
pub fn pair_error(
    input: &ActionDistribution,
    target: &ActionDistribution,
    model: &EmbeddingModel,
    include_constant_z: bool,
) -> f64 {
    let h = model.hidden(input);
    let cross: f64 = target
        .entries()
        .iter()
        .map(|&(a, c)| c * model.log_hs_probability(&h, a))
        .sum();
    let z = if include_constant_z {
        neg_entropy(target)
    } else {
        0.0
    };
    z - cross
}

/// Parameter access used by the SGD step; lets the same step run on plain
/// slices or on shared atomics.
trait ParamStore {
    fn emb(&self, i: usize) -> f64;
    fn emb_sub(&mut self, i: usize, delta: f64);
    fn inner(&self, i: usize) -> f64;
    fn inner_sub(&mut self, i: usize, delta: f64);
}

struct DenseParams<'a> {
    emb: &'a mut [f64],
    inner: &'a mut [f64],
}

impl ParamStore for DenseParams<'_> {
    #[inline]
    fn emb(&self, i: usize) -> f64 {
        self.emb[i]
    }
    #[inline]
    fn emb_sub(&mut self, i: usize, delta: f64) {
        self.emb[i] -= delta;
    }
    #[inline]
    fn inner(&self, i: usize) -> f64 {
        self.inner[i]
    }
    #[inline]
    fn inner_sub(&mut self, i: usize, delta: f64) {
        self.inner[i] -= delta;
    }
}

/// Shared parameters for lock-free multi-worker training. Reads and writes are
/// relaxed; concurrent read-modify-write may lose updates.
struct SharedParams {
    emb: Vec<AtomicU64>,
    inner: Vec<AtomicU64>,
}

impl SharedParams {
    fn from_slices(emb: &[f64], inner: &[f64]) -> Self {
        let wrap = |s: &[f64]| s.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        Self {
            emb: wrap(emb),
            inner: wrap(inner),
        }
    }

    fn copy_into(&self, emb: &mut [f64], inner: &mut [f64]) {
        for (dst, a) in emb.iter_mut().zip(&self.emb) {
            *dst = f64::from_bits(a.load(Ordering::Relaxed));
        }
        for (dst, a) in inner.iter_mut().zip(&self.inner) {
            *dst = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }
}

struct SharedView<'a>(&'a SharedParams);

#[inline]
fn atomic_sub(cell: &AtomicU64, delta: f64) {
    let v = f64::from_bits(cell.load(Ordering::Relaxed)) - delta;
    cell.store(v.to_bits(), Ordering::Relaxed);
}

impl ParamStore for SharedView<'_> {
    #[inline]
    fn emb(&self, i: usize) -> f64 {
        f64::from_bits(self.0.emb[i].load(Ordering::Relaxed))
    }
    #[inline]
    fn emb_sub(&mut self, i: usize, delta: f64) {
        atomic_sub(&self.0.emb[i], delta);
    }
    #[inline]
    fn inner(&self, i: usize) -> f64 {
        f64::from_bits(self.0.inner[i].load(Ordering::Relaxed))
    }
    #[inline]
    fn inner_sub(&mut self, i: usize, delta: f64) {
        atomic_sub(&self.0.inner[i], delta);
    }
}

#[derive(Default)]
struct Scratch {
    h: Vec<f64>,
    grad_h: Vec<f64>,
    node_grads: Vec<(usize, f64)>,
}

fn sgd_step<P: ParamStore>(
    params: &mut P,
    tree: &HuffmanTree,
    dim: usize,
    input: &ActionDistribution,
    target: &ActionDistribution,
    alpha: f64,
    scratch: &mut Scratch,
) {
    let Scratch {
        h,
        grad_h,
        node_grads,
    } = scratch;
    h.clear();
    h.resize(dim, 0.0);
    grad_h.clear();
    grad_h.resize(dim, 0.0);
    node_grads.clear();

    for &(a, c) in input.entries() {
        let base = a * dim;
        for (j, hj) in h.iter_mut().enumerate() {
            *hj += c * params.emb(base + j);
        }
    }

    // node gradients and δ_h from pre-update node vectors
    for &(a, c) in target.entries() {
        let (path, code) = tree.path(a);
        for (&node, &dir) in path.iter().zip(code) {
            let base = node as usize * dim;
            let mut x = 0.0;
            for (j, hj) in h.iter().enumerate() {
                x += params.inner(base + j) * hj;
            }
            let label = if dir == LEFT { 1.0 } else { 0.0 };
            let g = c * (sigmoid(x) - label);
            for (j, gj) in grad_h.iter_mut().enumerate() {
                *gj += g * params.inner(base + j);
            }
            node_grads.push((base, g));
        }
    }

    for &(base, g) in node_grads.iter() {
        let step = alpha * g;
        for (j, hj) in h.iter().enumerate() {
            params.inner_sub(base + j, step * hj);
        }
    }

    for &(a, c) in input.entries() {
        let base = a * dim;
        let step = alpha * c;
        for (j, gj) in grad_h.iter().enumerate() {
            params.emb_sub(base + j, step * gj);
        }
    }
}

/// One gradient step on a single (input, target) pair.
pub fn sgd_pair(
    input: &ActionDistribution,
    target: &ActionDistribution,
    model: &mut EmbeddingModel,
    alpha: f64,
) -> Result<()> {
    model.check(input)?;
    model.check(target)?;
    let dim = model.dim;
    let mut params = DenseParams {
        emb: &mut model.embeddings,
        inner: &mut model.inner,
    };
    sgd_step(
        &mut params,
        &model.tree,
        dim,
        input,
        target,
        alpha,
        &mut Scratch::default(),
    );
    Ok(())
}

/// Enumerates the (input step, target step) index pairs of one trace, in
/// training order.
pub fn context_pairs(len: usize, window: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len).flat_map(move |t| {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(len.saturating_sub(1));
        (lo..=hi).filter(move |&u| u != t).map(move |u| (t, u))
    })
}

/// Learning rate after `done` of `total` pairs.
pub fn decayed_rate(initial: f64, done: u64, total: u64) -> f64 {
    if total == 0 {
        return initial;
    }
    initial * (1.0 - done as f64 / total as f64).max(MIN_LR_FRACTION)
}

fn known_steps(corpus: &PlanCorpus) -> Result<Vec<Vec<&ActionDistribution>>> {
    corpus
        .traces()
        .iter()
        .enumerate()
        .map(|(ti, trace)| {
            trace
                .steps()
                .iter()
                .enumerate()
                .map(|(si, s)| match s {
                    ObservationStep::Known(d) => Ok(d),
                    ObservationStep::Missing => Err(Error::MissingStep {
                        trace: ti,
                        step: si,
                    }),
                })
                .collect()
        })
        .collect()
}

/// Builds the Huffman tree from the corpus counts, initializes and trains.
pub fn train_corpus(corpus: &PlanCorpus, config: &TrainingConfig) -> Result<EmbeddingModel> {
    config.validate()?;
    corpus.ensure_complete()?;
    let tree = HuffmanTree::build(corpus.vocab().counts())?;
    let mut model = EmbeddingModel::init(corpus.vocab().clone(), tree, config)?;
    train_model(&mut model, corpus, config)?;
    Ok(model)
}

/// Continues training `model` on `corpus`. Single-worker runs are
/// bit-deterministic; with several workers, traces are split round-robin and
/// parameters are shared without locking.
pub fn train_model(
    model: &mut EmbeddingModel,
    corpus: &PlanCorpus,
    config: &TrainingConfig,
) -> Result<()> {
    config.validate()?;
    if corpus.vocab().len() != model.vocab.len() {
        return Err(Error::Config("corpus and model vocabularies differ".into()));
    }
    let traces = known_steps(corpus)?;
    for steps in &traces {
        for d in steps {
            model.check(d)?;
        }
    }
    let per_epoch: u64 = traces
        .iter()
        .map(|s| context_pairs(s.len(), config.window).count() as u64)
        .sum();
    let total = per_epoch * config.epochs as u64;
    let dim = model.dim;
    let tree = &model.tree;

    if config.workers == 1 {
        let mut params = DenseParams {
            emb: &mut model.embeddings,
            inner: &mut model.inner,
        };
        let mut scratch = Scratch::default();
        let mut done = 0u64;
        for _ in 0..config.epochs {
            for steps in &traces {
                for (t, u) in context_pairs(steps.len(), config.window) {
                    let alpha = decayed_rate(config.learning_rate, done, total);
                    sgd_step(&mut params, tree, dim, steps[t], steps[u], alpha, &mut scratch);
                    done += 1;
                }
            }
        }
        return Ok(());
    }

    let shared = SharedParams::from_slices(&model.embeddings, &model.inner);
    let done = AtomicU64::new(0);
    thread::scope(|scope| {
        for w in 0..config.workers {
            let shared = &shared;
            let done = &done;
            let traces = &traces;
            scope.spawn(move || {
                let mut view = SharedView(shared);
                let mut scratch = Scratch::default();
                for _ in 0..config.epochs {
                    for steps in traces.iter().skip(w).step_by(config.workers) {
                        for (t, u) in context_pairs(steps.len(), config.window) {
                            let n = done.fetch_add(1, Ordering::Relaxed);
                            let alpha = decayed_rate(config.learning_rate, n, total);
                            sgd_step(&mut view, tree, dim, steps[t], steps[u], alpha, &mut scratch);
                        }
                    }
                }
            });
        }
    });
    shared.copy_into(&mut model.embeddings, &mut model.inner);
    Ok(())
}

/// Mean pair error over all context pairs of a complete corpus.
pub fn mean_corpus_error(
    model: &EmbeddingModel,
    corpus: &PlanCorpus,
    window: usize,
    include_constant_z: bool,
) -> Result<f64> {
    let traces = known_steps(corpus)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for steps in &traces {
        for (t, u) in context_pairs(steps.len(), window) {
            sum += pair_error(steps[t], steps[u], model, include_constant_z);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}
