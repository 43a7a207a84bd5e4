//! Controlled uncertain corpora from ground-truth action traces.
//!
//! Each ground-truth step becomes a distribution over the true action and its
//! `K-1` most similar actions. Perception errors are then injected by swapping
//! the confidence of the true action with that of a distractor.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ActionDistribution, ActionVocab, DistributionTrace, ObservationStep, PlanCorpus};
use crate::error::{Error, Result};
use crate::rng;

/// Co-occurrence radius used by [`CooccurrenceSimilarity`].
pub const COOCCURRENCE_WINDOW: usize = 2;

/// Confidence margin of the true action under [`EntropyPreset::High`].
pub const HIGH_ENTROPY_MARGIN: f64 = 1e-3;

/// Symmetric similarity in `[0, 1]` between actions, `s(a, a) = 1`.
pub trait SimilarityProvider {
    fn len(&self) -> usize;

    fn similarity(&self, a: usize, b: usize) -> f64;

    /// Up to `k` actions other than `a` with positive similarity, most similar
    /// first, ties to the lowest id.
    fn neighbors(&self, a: usize, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = (0..self.len())
            .filter(|&b| b != a)
            .map(|b| (b, self.similarity(a, b)))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        all.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        all.truncate(k);
        all
    }
}

/// Dense similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for a in 0..n {
            values[a * n + a] = 1.0;
        }
        Self { n, values }
    }

    fn set(&mut self, a: usize, b: usize, s: f64) {
        self.values[a * self.n + b] = s;
        self.values[b * self.n + a] = s;
    }
}

impl SimilarityProvider for SimilarityMatrix {
    fn len(&self) -> usize {
        self.n
    }

    fn similarity(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }
}

/// Cosine similarity of add-one-smoothed co-occurrence count vectors
/// (radius [`COOCCURRENCE_WINDOW`]), rescaled over all off-diagonal pairs into
/// `[0.1, 0.9]`.
pub fn cooccurrence_similarity(traces: &[Vec<usize>], n: usize) -> Result<SimilarityMatrix> {
    if traces.is_empty() {
        return Err(Error::Config("empty ground-truth corpus".into()));
    }
    let mut counts = vec![1.0f64; n * n];
    for trace in traces {
        for (i, &a) in trace.iter().enumerate() {
            let lo = i.saturating_sub(COOCCURRENCE_WINDOW);
            let hi = (i + COOCCURRENCE_WINDOW).min(trace.len() - 1);
            for (j, &b) in trace.iter().enumerate().take(hi + 1).skip(lo) {
                if j != i {
                    counts[a * n + b] += 1.0;
                }
            }
        }
    }
    let row = |a: usize| &counts[a * n..(a + 1) * n];
    let norms: Vec<f64> = (0..n)
        .map(|a| row(a).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut cosine = vec![0.0; n * n];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for a in 0..n {
        for b in (a + 1)..n {
            let c = row(a).iter().zip(row(b)).map(|(x, y)| x * y).sum::<f64>() / (norms[a] * norms[b]);
            cosine[a * n + b] = c;
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    let mut sim = SimilarityMatrix::identity(n);
    for a in 0..n {
        for b in (a + 1)..n {
            let s = if hi > lo {
                0.1 + 0.8 * (cosine[a * n + b] - lo) / (hi - lo)
            } else {
                0.5
            };
            sim.set(a, b, s);
        }
    }
    Ok(sim)
}

/// Parses an external similarity table: JSON Lines of `[action, action, s]`.
/// Pairs involving actions outside `vocab` are ignored; absent pairs have
/// similarity 0.
pub fn parse_similarity_table(text: &str, vocab: &ActionVocab) -> Result<SimilarityMatrix> {
    let mut sim = SimilarityMatrix::identity(vocab.len());
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| Error::Parse {
            line: lineno + 1,
            message,
        };
        let (a, b, s): (String, String, f64) =
            serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        if !(0.0..=1.0).contains(&s) {
            return Err(at(format!("similarity {s} outside [0, 1]")));
        }
        if let (Some(a), Some(b)) = (vocab.id_of(&a), vocab.id_of(&b)) {
            if a != b {
                sim.set(a, b, s);
            }
        }
    }
    Ok(sim)
}

/// Confidence shape of synthesized distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyPreset {
    /// Similarity-weighted confidences with a per-step entropy weight.
    Standard,
    /// True action 0.9, the rest shared equally by the distractors.
    Low,
    /// Near-uniform, the true action ahead by [`HIGH_ENTROPY_MARGIN`].
    High,
}

impl EntropyPreset {
    pub fn name(self) -> &'static str {
        match self {
            EntropyPreset::Standard => "standard",
            EntropyPreset::Low => "low",
            EntropyPreset::High => "high",
        }
    }
}

impl std::fmt::Display for EntropyPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EntropyPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" | "fixed" => Ok(EntropyPreset::Standard),
            "low" => Ok(EntropyPreset::Low),
            "high" => Ok(EntropyPreset::High),
            other => Err(Error::Config(format!("unknown entropy preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Distribution size (true action plus `k - 1` distractors).
    pub k: usize,
    /// Entropy weights drawn uniformly per step (standard preset only).
    pub w_entropy_choices: Vec<f64>,
    /// Perception error rate.
    pub per: f64,
    pub entropy: EntropyPreset,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            k: 3,
            w_entropy_choices: vec![0.0, 1.0],
            per: 0.0,
            entropy: EntropyPreset::Standard,
            seed: 1,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.per) {
            return Err(Error::Config(format!("PER {} outside [0, 1]", self.per)));
        }
        if self.w_entropy_choices.is_empty()
            || self.w_entropy_choices.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return Err(Error::Config(
                "w_entropy choices must be nonempty and nonnegative".into(),
            ));
        }
        if self.k == 1 && self.per > 0.0 {
            return Err(Error::NoDistractor);
        }
        Ok(())
    }
}

fn strict_argmax_check(gt: f64, distractors: impl Iterator<Item = f64>) -> Result<()> {
    let top = distractors.fold(f64::NEG_INFINITY, f64::max);
    if gt > top {
        Ok(())
    } else {
        Err(Error::GroundTruthNotArgmax { gt, distractor: top })
    }
}

/// Similarity-weighted confidences:
/// `c(d_k) = s_k / (1 + w_entropy + Σ s_i)`, `c(gt) = 1 − Σ c(d_k)`.
pub fn assign_confidences(
    gt: usize,
    distractors: &[(usize, f64)],
    w_entropy: f64,
) -> Result<ActionDistribution> {
    if distractors.iter().any(|&(a, _)| a == gt) {
        return Err(Error::DuplicateAction { id: gt });
    }
    let denom = 1.0 + w_entropy + distractors.iter().map(|d| d.1).sum::<f64>();
    let conf: Vec<(usize, f64)> = distractors.iter().map(|&(a, s)| (a, s / denom)).collect();
    let c_gt = 1.0 - conf.iter().map(|c| c.1).sum::<f64>();
    strict_argmax_check(c_gt, conf.iter().map(|c| c.1))?;
    let mut entries = Vec::with_capacity(conf.len() + 1);
    entries.push((gt, c_gt));
    entries.extend(conf);
    ActionDistribution::new(entries)
}

/// Fixed-shape confidences for the low and high entropy presets.
pub fn preset_confidences(
    gt: usize,
    distractors: &[usize],
    preset: EntropyPreset,
) -> Result<ActionDistribution> {
    let m = distractors.len();
    if m == 0 {
        return Ok(ActionDistribution::one_hot(gt));
    }
    let (c_gt, c_d) = match preset {
        EntropyPreset::Low => (0.9, 0.1 / m as f64),
        EntropyPreset::High => {
            let d = (1.0 - HIGH_ENTROPY_MARGIN) / (m + 1) as f64;
            (1.0 - m as f64 * d, d)
        }
        EntropyPreset::Standard => {
            return Err(Error::Config("standard preset uses assign_confidences".into()))
        }
    };
    strict_argmax_check(c_gt, std::iter::once(c_d))?;
    let mut entries = vec![(gt, c_gt)];
    entries.extend(distractors.iter().map(|&a| (a, c_d)));
    ActionDistribution::new(entries)
}

/// Ground-truth traces over an interned vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub vocab: ActionVocab,
    pub traces: Vec<Vec<usize>>,
}

impl GroundTruth {
    pub fn from_symbols(traces: &[Vec<String>]) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::Config("empty ground-truth corpus".into()));
        }
        let mut vocab = ActionVocab::new();
        let ids = traces
            .iter()
            .map(|t| {
                if t.is_empty() {
                    return Err(Error::EmptyTrace);
                }
                Ok(t.iter().map(|s| vocab.intern(s)).collect())
            })
            .collect::<Result<Vec<Vec<usize>>>>()?;
        let counts = {
            let mut c = vec![0u64; vocab.len()];
            ids.iter().flatten().for_each(|&a| c[a] += 1);
            c
        };
        let vocab = ActionVocab::from_parts(vocab.symbols().to_vec(), counts)?;
        Ok(Self { vocab, traces: ids })
    }

    pub fn to_symbols(&self) -> Vec<Vec<String>> {
        self.traces
            .iter()
            .map(|t| t.iter().map(|&a| self.vocab.symbol(a).to_owned()).collect())
            .collect()
    }

    /// First `len` steps of every trace at least that long.
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            vocab: self.vocab.clone(),
            traces: self
                .traces
                .iter()
                .filter(|t| t.len() >= len)
                .map(|t| t[..len].to_vec())
                .collect(),
        }
    }
}

/// Ground-truth action per (trace, step) of a synthesized corpus.
pub type Alignment = Vec<Vec<usize>>;

pub fn alignment_to_jsonl(alignment: &Alignment, vocab: &ActionVocab) -> String {
    let symbols: Vec<Vec<String>> = alignment
        .iter()
        .map(|t| t.iter().map(|&a| vocab.symbol(a).to_owned()).collect())
        .collect();
    crate::corpus::ground_truth_to_jsonl(&symbols)
}

pub fn parse_alignment(text: &str, vocab: &ActionVocab) -> Result<Alignment> {
    crate::corpus::parse_ground_truth(text)?
        .into_iter()
        .map(|t| {
            t.into_iter()
                .map(|s| vocab.id_of(&s).ok_or(Error::UnknownSymbol(s)))
                .collect()
        })
        .collect()
}

/// Number of corrupted steps in a trace of length `len`.
pub fn error_count(per: f64, len: usize) -> usize {
    (per * len as f64).round() as usize
}

/// Swaps the true action's confidence with a uniformly chosen distractor's in
/// exactly `round(per · T)` uniformly chosen steps of every trace.
pub fn inject_perception_errors(
    corpus: &PlanCorpus,
    alignment: &Alignment,
    per: f64,
    seed: u64,
) -> Result<PlanCorpus> {
    if !(0.0..=1.0).contains(&per) {
        return Err(Error::Config(format!("PER {per} outside [0, 1]")));
    }
    if alignment.len() != corpus.len() {
        return Err(Error::Config("alignment and corpus sizes differ".into()));
    }
    let mut traces = corpus.traces().to_vec();
    for (ti, (trace, truth)) in traces.iter_mut().zip(alignment).enumerate() {
        if truth.len() != trace.len() {
            return Err(Error::Config(format!("alignment of trace {ti} has wrong length")));
        }
        for (si, step) in trace.steps().iter().enumerate() {
            match step {
                ObservationStep::Known(d) if d.argmax() == truth[si] => {}
                ObservationStep::Known(_) => {
                    return Err(Error::Config(format!(
                        "trace {ti} step {si}: ground truth is not the argmax before injection"
                    )))
                }
                ObservationStep::Missing => return Err(Error::MissingStep { trace: ti, step: si }),
            }
        }
        let count = error_count(per, trace.len());
        if count == 0 {
            continue;
        }
        let mut rng = rng::stream(seed, "perception", ti as u64);
        let chosen = rand::seq::index::sample(&mut rng, trace.len(), count).into_vec();
        let steps = trace.steps_mut();
        for si in chosen {
            let ObservationStep::Known(d) = &mut steps[si] else {
                unreachable!("checked complete above");
            };
            let gt = truth[si];
            let others: Vec<usize> = d.entries().iter().map(|e| e.0).filter(|&a| a != gt).collect();
            let swap = *others.choose(&mut rng).ok_or(Error::NoDistractor)?;
            d.swap_confidences(gt, swap)?;
        }
    }
    PlanCorpus::new(corpus.vocab().clone(), traces)
}

/// Builds a distribution per ground-truth step, then injects perception errors.
pub fn synthesize_corpus(
    gt: &GroundTruth,
    provider: &dyn SimilarityProvider,
    config: &SynthesisConfig,
) -> Result<(PlanCorpus, Alignment)> {
    config.validate()?;
    if gt.traces.is_empty() {
        return Err(Error::Config("empty ground-truth corpus".into()));
    }
    if provider.len() != gt.vocab.len() {
        return Err(Error::Config("similarity provider does not match vocabulary".into()));
    }
    let neighbor_cache: HashMap<usize, Vec<(usize, f64)>> = gt
        .traces
        .iter()
        .flatten()
        .map(|&a| (a, provider.neighbors(a, config.k - 1)))
        .collect();

    let mut traces = Vec::with_capacity(gt.traces.len());
    for (ti, truth) in gt.traces.iter().enumerate() {
        let mut rng = rng::stream(config.seed, "synthesis", ti as u64);
        let steps = truth
            .iter()
            .map(|&a| {
                let nb = &neighbor_cache[&a];
                let d = match config.entropy {
                    EntropyPreset::Standard => {
                        let w = config.w_entropy_choices
                            [rng.gen_range(0..config.w_entropy_choices.len())];
                        assign_confidences(a, nb, w)?
                    }
                    preset => {
                        let ids: Vec<usize> = nb.iter().map(|x| x.0).collect();
                        preset_confidences(a, &ids, preset)?
                    }
                };
                Ok(ObservationStep::Known(d))
            })
            .collect::<Result<Vec<_>>>()?;
        traces.push(DistributionTrace::new(steps)?);
    }
    let clean = PlanCorpus::new(gt.vocab.clone(), traces)?;
    let alignment: Alignment = gt.traces.clone();
    let corpus = inject_perception_errors(&clean, &alignment, config.per, config.seed)?.recount();
    Ok((corpus, alignment))
}

/// Parameters of the built-in ground-truth plan generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Stages of the underlying recipe, visited cyclically.
    pub stages: usize,
    /// Rare alternatives per stage besides its main action.
    pub variants: usize,
    /// Probability that a stage is realized by its main action.
    pub main_probability: f64,
    pub traces: usize,
    pub length: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            stages: 8,
            variants: 4,
            main_probability: 0.97,
            traces: 54,
            length: 30,
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn actions(&self) -> usize {
        self.stages * (1 + self.variants)
    }
}

/// Recipe-like plan library. Traces walk a fixed cycle of stages from a
/// uniform start; each stage is usually its main action and otherwise one of
/// its interchangeable variants, uniformly.
pub fn generate_ground_truth(config: &GeneratorConfig) -> Result<Vec<Vec<String>>> {
    if config.stages < 2 || config.traces == 0 || config.length == 0 {
        return Err(Error::Config(
            "generator needs ≥ 2 stages, ≥ 1 trace and length ≥ 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.main_probability)
        || (config.variants == 0 && config.main_probability < 1.0)
    {
        return Err(Error::Config("main probability must lie in [0, 1]".into()));
    }
    let mut rng = rng::stream(config.seed, "groundtruth", 0);
    let mut order: Vec<usize> = (0..config.stages).collect();
    order.shuffle(&mut rng);
    let width = (config.stages - 1).to_string().len();
    let name = |stage: usize, v: usize| format!("s{stage:0width$}_{v}");
    Ok((0..config.traces)
        .map(|_| {
            let start = rng.gen_range(0..config.stages);
            (0..config.length)
                .map(|t| {
                    let stage = order[(start + t) % config.stages];
                    let v = if rng.gen::<f64>() < config.main_probability {
                        0
                    } else {
                        rng.gen_range(1..=config.variants)
                    };
                    name(stage, v)
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(traces: &[&[usize]]) -> Vec<Vec<usize>> {
        traces.iter().map(|t| t.to_vec()).collect()
    }

    #[test]
    fn confidence_examples() {
        let d = assign_confidences(0, &[(1, 0.5), (2, 0.5)], 0.0).unwrap();
        assert_eq!(d.entries(), &[(0, 0.5), (1, 0.25), (2, 0.25)]);
        let d = assign_confidences(0, &[(1, 0.5), (2, 0.5)], 1.0).unwrap();
        assert!((d.confidence_of(0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.confidence_of(1).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((d.confidence_of(2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        // s = 1 with w = 0 ties the distractor with the truth
        assert!(matches!(
            assign_confidences(0, &[(1, 1.0)], 0.0),
            Err(Error::GroundTruthNotArgmax { .. })
        ));
    }

    #[test]
    fn higher_entropy_weight_sharpens() {
        let s = [(1, 0.3), (2, 0.7)];
        let d0 = assign_confidences(0, &s, 0.0).unwrap();
        let d1 = assign_confidences(0, &s, 1.0).unwrap();
        assert!(d1.confidence_of(0) > d0.confidence_of(0));
        for a in [1, 2] {
            assert!(d1.confidence_of(a) < d0.confidence_of(a));
        }
    }

    #[test]
    fn presets() {
        let d = preset_confidences(4, &[1, 2], EntropyPreset::Low).unwrap();
        assert_eq!(d.entries(), &[(4, 0.9), (1, 0.05), (2, 0.05)]);
        let d = preset_confidences(4, &[1, 2], EntropyPreset::High).unwrap();
        let gt = d.confidence_of(4).unwrap();
        let other = d.confidence_of(1).unwrap();
        assert!((gt - other - HIGH_ENTROPY_MARGIN).abs() < 1e-12);
        assert_eq!(d.argmax(), 4);
    }

    #[test]
    fn cooccurrence_follows_hand_counts() {
        // a=0 b=1 c=2, single trace a b c c
        let traces = ids(&[&[0, 1, 2, 2]]);
        // window-2 counts (+1 smoothing), rows a, b, c:
        //   a: [1, 1+1, 1+1]
        //   b: [1+1, 1, 1+2]
        //   c: [1+1, 1+2, 1+2]
        let rows = [[1.0, 2.0, 2.0], [2.0, 1.0, 3.0], [2.0, 3.0, 3.0]];
        let cos = |x: &[f64; 3], y: &[f64; 3]| {
            let d: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx: f64 = x.iter().map(|p| p * p).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|p| p * p).sum::<f64>().sqrt();
            d / (nx * ny)
        };
        let ab = cos(&rows[0], &rows[1]);
        let ac = cos(&rows[0], &rows[2]);
        let bc = cos(&rows[1], &rows[2]);
        let lo = ab.min(ac).min(bc);
        let hi = ab.max(ac).max(bc);
        let scale = |c: f64| 0.1 + 0.8 * (c - lo) / (hi - lo);
        let s = cooccurrence_similarity(&traces, 3).unwrap();
        assert!((s.similarity(0, 1) - scale(ab)).abs() < 1e-12);
        assert!((s.similarity(1, 2) - scale(bc)).abs() < 1e-12);
        assert!((s.similarity(2, 0) - scale(ac)).abs() < 1e-12);
        for a in 0..3 {
            assert_eq!(s.similarity(a, a), 1.0);
        }
        assert!(s.neighbors(0, 2).iter().all(|&(b, _)| b != 0));
    }

    #[test]
    fn single_action_vocab_has_no_neighbors() {
        let s = cooccurrence_similarity(&ids(&[&[0, 0, 0]]), 1).unwrap();
        assert!(s.neighbors(0, 2).is_empty());
        let gt = GroundTruth::from_symbols(&[vec!["x".into(), "x".into()]]).unwrap();
        let (c, _) = synthesize_corpus(&gt, &s, &SynthesisConfig::default()).unwrap();
        assert!(c.traces()[0].steps().iter().all(|st| st.known().unwrap().len() == 1));
    }

    fn library() -> GroundTruth {
        let raw = generate_ground_truth(&GeneratorConfig {
            stages: 4,
            variants: 2,
            main_probability: 0.7,
            traces: 12,
            length: 10,
            ..GeneratorConfig::default()
        })
        .unwrap();
        GroundTruth::from_symbols(&raw).unwrap()
    }

    #[test]
    fn synthesis_invariants() {
        let gt = library();
        let sim = cooccurrence_similarity(&gt.traces, gt.vocab.len()).unwrap();
        for per in [0.0, 0.25, 0.5, 1.0] {
            let cfg = SynthesisConfig {
                per,
                ..SynthesisConfig::default()
            };
            let (c, align) = synthesize_corpus(&gt, &sim, &cfg).unwrap();
            for (trace, truth) in c.traces().iter().zip(&align) {
                let mut wrong = 0;
                for (s, &g) in trace.steps().iter().zip(truth) {
                    let d = s.known().unwrap();
                    assert_eq!(d.len(), 3);
                    assert!((d.entries().iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-9);
                    assert!(d.confidence_of(g).is_some());
                    if d.argmax() != g {
                        wrong += 1;
                    }
                }
                assert_eq!(wrong, error_count(per, trace.len()));
            }
            if per == 0.0 {
                let reduced = c.argmax_reduced();
                for (t, truth) in reduced.traces().iter().zip(&gt.traces) {
                    let acts: Vec<usize> = t.steps().iter().map(|s| s.known().unwrap().argmax()).collect();
                    assert_eq!(&acts, truth);
                }
            }
        }
    }

    #[test]
    fn one_hot_when_k_is_one_and_deterministic() {
        let gt = library();
        let sim = cooccurrence_similarity(&gt.traces, gt.vocab.len()).unwrap();
        let cfg = SynthesisConfig {
            k: 1,
            ..SynthesisConfig::default()
        };
        let (c, _) = synthesize_corpus(&gt, &sim, &cfg).unwrap();
        assert!(c.traces().iter().all(|t| t.steps().iter().all(|s| s.known().unwrap().len() == 1)));
        let bad = SynthesisConfig {
            k: 1,
            per: 0.5,
            ..SynthesisConfig::default()
        };
        assert!(matches!(synthesize_corpus(&gt, &sim, &bad), Err(Error::NoDistractor)));

        let cfg = SynthesisConfig {
            per: 0.5,
            seed: 42,
            ..SynthesisConfig::default()
        };
        let a = synthesize_corpus(&gt, &sim, &cfg).unwrap().0.to_jsonl();
        let b = synthesize_corpus(&gt, &sim, &cfg).unwrap().0.to_jsonl();
        assert_eq!(a, b);
    }

    #[test]
    fn injection_counts() {
        assert_eq!(error_count(0.5, 10), 5);
        assert_eq!(error_count(0.25, 10), 3);
        assert_eq!(error_count(1.0, 7), 7);
        assert_eq!(error_count(0.0, 7), 0);
    }

    #[test]
    fn similarity_table_parsing() {
        let gt = GroundTruth::from_symbols(&[vec!["a".into(), "b".into(), "c".into()]]).unwrap();
        let t = parse_similarity_table("[\"a\",\"b\",0.7]\n[\"c\",\"zz\",0.2]\n", &gt.vocab).unwrap();
        assert_eq!(t.similarity(1, 0), 0.7);
        assert_eq!(t.similarity(0, 2), 0.0);
        assert_eq!(t.neighbors(0, 2), vec![(1, 0.7)]);
        assert!(parse_similarity_table("[\"a\",\"b\",1.7]", &gt.vocab).is_err());
    }

    #[test]
    fn generator_shape() {
        let raw = generate_ground_truth(&GeneratorConfig::default()).unwrap();
        assert_eq!(raw.len(), 54);
        assert!(raw.iter().all(|t| t.len() == 30));
        assert_eq!(raw, generate_ground_truth(&GeneratorConfig::default()).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn low_corpus(truth: &[Vec<usize>], m: usize) -> PlanCorpus {
            let n = truth.iter().flatten().max().unwrap() + m + 1;
            let vocab = ActionVocab::from_parts((0..n).map(|i| format!("a{i}")).collect(), vec![1; n]).unwrap();
            let traces = truth
                .iter()
                .map(|t| {
                    let steps = t
                        .iter()
                        .map(|&g| {
                            let d: Vec<usize> = (1..=m).map(|j| (g + j) % n).collect();
                            ObservationStep::Known(preset_confidences(g, &d, EntropyPreset::Low).unwrap())
                        })
                        .collect();
                    DistributionTrace::new(steps).unwrap()
                })
                .collect();
            PlanCorpus::new(vocab, traces).unwrap()
        }

        proptest! {
            #[test]
            fn confidences_normalize_with_truth_on_top(
                sims in proptest::collection::vec(0.1f64..=0.9, 0..6),
                w in 0.0f64..3.0,
            ) {
                let ds: Vec<(usize, f64)> = sims.iter().enumerate().map(|(i, &s)| (i + 1, s)).collect();
                let d = assign_confidences(0, &ds, w).unwrap();
                let total: f64 = d.entries().iter().map(|e| e.1).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert_eq!(d.argmax(), 0);
                let sharper = assign_confidences(0, &ds, w + 1.0).unwrap();
                prop_assert!(sharper.confidence_of(0).unwrap() >= d.confidence_of(0).unwrap());
            }

            #[test]
            fn presets_normalize_with_truth_on_top(m in 1usize..12, high in any::<bool>()) {
                let preset = if high { EntropyPreset::High } else { EntropyPreset::Low };
                let ds: Vec<usize> = (1..=m).collect();
                let d = preset_confidences(0, &ds, preset).unwrap();
                let total: f64 = d.entries().iter().map(|e| e.1).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert_eq!(d.argmax(), 0);
            }

            #[test]
            fn injection_corrupts_exactly_the_rounded_count(
                truth in proptest::collection::vec(proptest::collection::vec(0usize..6, 1..25), 1..5),
                m in 1usize..4,
                per in 0.0f64..=1.0,
                seed in any::<u64>(),
            ) {
                let corpus = low_corpus(&truth, m);
                let noisy = inject_perception_errors(&corpus, &truth, per, seed).unwrap();
                for ((clean, dirty), t) in corpus.traces().iter().zip(noisy.traces()).zip(&truth) {
                    let mut wrong = 0;
                    for ((a, b), &g) in clean.steps().iter().zip(dirty.steps()).zip(t) {
                        let (a, b) = (a.known().unwrap(), b.known().unwrap());
                        let mut ca: Vec<f64> = a.entries().iter().map(|e| e.1).collect();
                        let mut cb: Vec<f64> = b.entries().iter().map(|e| e.1).collect();
                        ca.sort_by(f64::total_cmp);
                        cb.sort_by(f64::total_cmp);
                        prop_assert_eq!(ca, cb);
                        wrong += usize::from(b.argmax() != g);
                    }
                    prop_assert_eq!(wrong, error_count(per, t.len()));
                }
            }
        }
    }
}
