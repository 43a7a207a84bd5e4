//! Plan completion: fill missing steps of a trace with the actions that
//! maximize the learned pairwise affinities inside the context window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{ActionDistribution, DistributionTrace, ObservationStep};
use crate::error::{Error, Result};
use crate::trainer::{EmbeddingModel, ModelKind};

/// How known context steps are presented to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextEncoding {
    /// The full observed distribution.
    Distribution,
    /// A one-hot on the most confident action.
    Argmax,
}

impl ContextEncoding {
    /// Distribution-trained models see distributions; skip-gram baselines
    /// only ever saw single actions.
    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Distr2Vec => ContextEncoding::Distribution,
            ModelKind::Nm | ModelKind::Rbm => ContextEncoding::Argmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionConfig {
    pub window: usize,
    /// Recommendations kept per missing position.
    pub recommendations: usize,
    pub max_sweeps: usize,
    /// `None` picks the encoding matching the model's kind.
    pub context: Option<ContextEncoding>,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self {
            window: 1,
            recommendations: 3,
            max_sweeps: 10,
            context: None,
        }
    }
}

impl RecognitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.recommendations == 0 || self.max_sweeps == 0 {
            return Err(Error::Config(
                "window, recommendations and max_sweeps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn encoding(&self, model: &EmbeddingModel) -> ContextEncoding {
        self.context
            .unwrap_or_else(|| ContextEncoding::for_kind(model.kind()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionResult {
    /// Chosen action per missing position.
    pub filled: BTreeMap<usize, usize>,
    /// Completion score F of `filled`.
    pub score: f64,
    /// Top candidates per missing position, best first.
    pub recommendations: BTreeMap<usize, Vec<(usize, f64)>>,
    pub sweeps: usize,
}

/// `Σ_k c_k Σ_i ln σ(code_i · v_i · h(input))` over the target's actions.
/// Higher means the target is more expected next to the input.
pub fn affinity_pair(
    input: &ActionDistribution,
    target: &ActionDistribution,
    model: &EmbeddingModel,
) -> f64 {
    let h = model.hidden(input);
    target
        .entries()
        .iter()
        .map(|&(a, c)| c * model.log_hs_probability(&h, a))
        .sum()
}

fn window_range(t: usize, len: usize, window: usize) -> impl Iterator<Item = usize> {
    let lo = t.saturating_sub(window);
    let hi = (t + window).min(len - 1);
    (lo..=hi).filter(move |&u| u != t)
}

fn encode(d: &ActionDistribution, encoding: ContextEncoding) -> ActionDistribution {
    match encoding {
        ContextEncoding::Distribution => d.clone(),
        ContextEncoding::Argmax => ActionDistribution::one_hot(d.argmax()),
    }
}

/// Completion score `F`: for every missing position, the affinity of its
/// filled action to each in-window context step.
pub fn score_completion(
    trace: &DistributionTrace,
    filled: &BTreeMap<usize, usize>,
    model: &EmbeddingModel,
    config: &RecognitionConfig,
) -> Result<f64> {
    config.validate()?;
    let missing = trace.missing_positions();
    for &t in &missing {
        let a = *filled.get(&t).ok_or(Error::UncoveredPosition(t))?;
        model.vocab().check_id(a)?;
    }
    if let Some(&extra) = filled.keys().find(|p| !missing.contains(p)) {
        return Err(Error::NotMissing(extra));
    }
    let encoding = config.encoding(model);
    let steps = trace.steps();
    let mut total = 0.0;
    for &t in &missing {
        let target = ActionDistribution::one_hot(filled[&t]);
        for u in window_range(t, steps.len(), config.window) {
            let input = match &steps[u] {
                ObservationStep::Known(d) => encode(d, encoding),
                ObservationStep::Missing => ActionDistribution::one_hot(filled[&u]),
            };
            total += affinity_pair(&input, &target, model);
        }
    }
    Ok(total)
}

/// Per-trace cache of candidate affinities.
struct Scorer<'a> {
    model: &'a EmbeddingModel,
    trace: &'a DistributionTrace,
    window: usize,
    /// Log-probability of every candidate given each known step, indexed by position.
    known: Vec<Option<Vec<f64>>>,
    /// `pair[y][x] = ln p(x | one-hot y)`; built only when missing steps neighbor each other.
    pair: Option<Vec<Vec<f64>>>,
}

impl<'a> Scorer<'a> {
    fn new(
        model: &'a EmbeddingModel,
        trace: &'a DistributionTrace,
        config: &RecognitionConfig,
    ) -> Self {
        let encoding = config.encoding(model);
        let n = model.vocab().len();
        let steps = trace.steps();
        let missing = trace.missing_positions();
        let mut known: Vec<Option<Vec<f64>>> = vec![None; steps.len()];
        let mut adjacent_missing = false;
        for &t in &missing {
            for u in window_range(t, steps.len(), config.window) {
                match &steps[u] {
                    ObservationStep::Known(d) if known[u].is_none() => {
                        let h = model.hidden(&encode(d, encoding));
                        known[u] = Some((0..n).map(|a| model.log_hs_probability(&h, a)).collect());
                    }
                    ObservationStep::Known(_) => {}
                    ObservationStep::Missing => adjacent_missing = true,
                }
            }
        }
        let pair = adjacent_missing.then(|| {
            (0..n)
                .map(|y| {
                    let h = model.embedding_row(y);
                    (0..n).map(|x| model.log_hs_probability(h, x)).collect()
                })
                .collect()
        });
        Self {
            model,
            trace,
            window: config.window,
            known,
            pair,
        }
    }

    /// Every term of F that depends on the action at missing position `t`,
    /// with the other missing positions fixed by `filled` (or skipped when
    /// `filled` is `None`).
    fn local_scores(&self, t: usize, filled: Option<&BTreeMap<usize, usize>>) -> Vec<f64> {
        let n = self.model.vocab().len();
        let mut scores = vec![0.0; n];
        for u in window_range(t, self.trace.len(), self.window) {
            if let Some(logp) = &self.known[u] {
                scores.iter_mut().zip(logp).for_each(|(s, l)| *s += l);
                continue;
            }
            let Some(&other) = filled.and_then(|f| f.get(&u)) else {
                continue;
            };
            let pair = self.pair.as_ref().expect("built for adjacent missing steps");
            for (cand, s) in scores.iter_mut().enumerate() {
                // u as context for t, and t as context for u
                *s += pair[other][cand] + pair[cand][other];
            }
        }
        scores
    }
}

fn best(scores: &[f64]) -> usize {
    let mut arg = 0;
    for (a, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[arg] {
            arg = a;
        }
    }
    arg
}

fn ranked(scores: &[f64], r: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    all.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    all.truncate(r);
    all
}

fn check_known(trace: &DistributionTrace, model: &EmbeddingModel) -> Result<()> {
    for step in trace.steps() {
        if let ObservationStep::Known(d) = step {
            for &(a, _) in d.entries() {
                model.vocab().check_id(a)?;
            }
        }
    }
    Ok(())
}

/// Top-`R` candidates for one missing position, scored against its known
/// in-window context only.
pub fn recommend(
    trace: &DistributionTrace,
    position: usize,
    model: &EmbeddingModel,
    config: &RecognitionConfig,
) -> Result<Vec<(usize, f64)>> {
    config.validate()?;
    check_known(trace, model)?;
    match trace.steps().get(position) {
        Some(ObservationStep::Missing) => {}
        _ => return Err(Error::NotMissing(position)),
    }
    let scorer = Scorer::new(model, trace, config);
    Ok(ranked(
        &scorer.local_scores(position, None),
        config.recommendations,
    ))
}

/// Left-to-right coordinate-ascent sweeps from `filled` until a sweep changes
/// nothing or `max_sweeps` is reached. Each re-choice maximizes F with the
/// other positions held fixed, so F never decreases.
fn ascend(
    scorer: &Scorer,
    missing: &[usize],
    filled: &mut BTreeMap<usize, usize>,
    max_sweeps: usize,
) -> usize {
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut changed = false;
        for &t in missing {
            let choice = best(&scorer.local_scores(t, Some(filled)));
            if filled.insert(t, choice) != Some(choice) {
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    sweeps
}

/// Fills every missing position.
///
/// A single missing position takes the exhaustive argmax. Several are refined
/// by coordinate ascent from multiple starts (the best candidates given the
/// known context alone, their runners-up down to rank R, and the most frequent
/// action everywhere); the completion with the highest F wins.
pub fn recognize(
    trace: &DistributionTrace,
    model: &EmbeddingModel,
    config: &RecognitionConfig,
) -> Result<RecognitionResult> {
    config.validate()?;
    check_known(trace, model)?;
    let missing = trace.missing_positions();
    if missing.is_empty() {
        return Err(Error::NothingToRecognize);
    }
    let scorer = Scorer::new(model, trace, config);

    let (filled, sweeps) = if missing.len() == 1 {
        let t = missing[0];
        (BTreeMap::from([(t, best(&scorer.local_scores(t, None)))]), 1)
    } else {
        let frequent = model.vocab().most_frequent().ok_or(Error::EmptyVocabulary)?;
        let local: Vec<Vec<(usize, f64)>> = missing
            .iter()
            .map(|&t| ranked(&scorer.local_scores(t, None), config.recommendations))
            .collect();
        let mut starts: Vec<BTreeMap<usize, usize>> = (0..config.recommendations)
            .map(|r| {
                missing
                    .iter()
                    .zip(&local)
                    .map(|(&t, list)| (t, list[r.min(list.len() - 1)].0))
                    .collect()
            })
            .collect();
        starts.push(missing.iter().map(|&t| (t, frequent)).collect());
        starts.dedup();

        let mut winner: Option<(f64, BTreeMap<usize, usize>, usize)> = None;
        for mut filled in starts {
            let sweeps = ascend(&scorer, &missing, &mut filled, config.max_sweeps);
            let f = score_completion(trace, &filled, model, config)?;
            if winner.as_ref().map_or(true, |w| f > w.0) {
                winner = Some((f, filled, sweeps));
            }
        }
        let (_, filled, sweeps) = winner.expect("at least one start");
        (filled, sweeps)
    };

    let recommendations = missing
        .iter()
        .map(|&t| {
            let scores = scorer.local_scores(t, Some(&filled));
            (t, ranked(&scores, config.recommendations))
        })
        .collect();
    let score = score_completion(trace, &filled, model, config)?;
    Ok(RecognitionResult {
        filled,
        score,
        recommendations,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, ActionVocab, PlanCorpus};
    use crate::huffman::HuffmanTree;
    use crate::trainer::{train_corpus, TrainingConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(n: usize, dim: usize, seed: u64) -> EmbeddingModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts: Vec<u64> = (0..n).map(|_| rng.gen_range(1..20)).collect();
        let vocab =
            ActionVocab::from_parts((0..n).map(|i| format!("a{i}")).collect(), counts.clone())
                .unwrap();
        let tree = HuffmanTree::build(&counts).unwrap();
        let emb = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let inner = (0..(n - 1) * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        EmbeddingModel::from_parts(vocab, tree, dim, emb, inner).unwrap()
    }

    fn random_trace(rng: &mut ChaCha8Rng, n: usize, len: usize, missing: &[usize]) -> DistributionTrace {
        let steps = (0..len)
            .map(|t| {
                if missing.contains(&t) {
                    return ObservationStep::Missing;
                }
                let k = rng.gen_range(1..=3.min(n));
                let ids = rand::seq::index::sample(rng, n, k).into_vec();
                let c = 1.0 / k as f64;
                let mut e: Vec<(usize, f64)> = ids.into_iter().map(|a| (a, c)).collect();
                let s: f64 = e.iter().map(|x| x.1).sum();
                e[0].1 += 1.0 - s;
                ObservationStep::Known(ActionDistribution::new(e).unwrap())
            })
            .collect();
        DistributionTrace::new(steps).unwrap()
    }

    fn cfg() -> RecognitionConfig {
        RecognitionConfig {
            context: Some(ContextEncoding::Distribution),
            ..RecognitionConfig::default()
        }
    }

    #[test]
    fn affinity_reductions() {
        let m = random_model(5, 3, 1);
        let input = ActionDistribution::one_hot(2);
        let target = ActionDistribution::one_hot(4);
        let h = m.hidden(&input);
        let a = affinity_pair(&input, &target, &m);
        assert!((a - m.hs_probability(&h, 4).ln()).abs() < 1e-12);

        let tree = HuffmanTree::build(&[1, 1, 1, 1]).unwrap();
        let vocab = ActionVocab::from_parts((0..4).map(|i| i.to_string()).collect(), vec![1; 4])
            .unwrap();
        let zero = EmbeddingModel::from_parts(vocab, tree, 2, vec![0.0; 8], vec![0.0; 6]).unwrap();
        let a = affinity_pair(&ActionDistribution::one_hot(0), &ActionDistribution::one_hot(1), &zero);
        assert!((a + 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn score_completion_examples() {
        let m = random_model(4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_trace(&mut rng, 4, 3, &[]);
        assert_eq!(score_completion(&t, &BTreeMap::new(), &m, &cfg()).unwrap(), 0.0);

        // missing at the start: only the right neighbor contributes
        let t = random_trace(&mut rng, 4, 4, &[0]);
        let filled = BTreeMap::from([(0, 2)]);
        let f = score_completion(&t, &filled, &m, &cfg()).unwrap();
        let right = t.steps()[1].known().unwrap();
        let expect = affinity_pair(right, &ActionDistribution::one_hot(2), &m);
        assert!((f - expect).abs() < 1e-12);

        // missing middle: left + right, evaluated by hand
        let t = random_trace(&mut rng, 4, 3, &[1]);
        let filled = BTreeMap::from([(1, 3)]);
        let f = score_completion(&t, &filled, &m, &cfg()).unwrap();
        let target = 3;
        let by_hand: f64 = [0, 2]
            .iter()
            .map(|&u| {
                let d = t.steps()[u].known().unwrap();
                let h: Vec<f64> = (0..3)
                    .map(|j| d.entries().iter().map(|&(a, c)| c * m.embedding_row(a)[j]).sum())
                    .collect();
                let (path, code) = m.tree().path_of(target).unwrap();
                path.iter()
                    .zip(code)
                    .map(|(&n, &dir)| {
                        let x: f64 = m.inner_row(n as usize).iter().zip(&h).map(|(v, y)| v * y).sum();
                        (1.0 / (1.0 + (-(f64::from(dir) * x)).exp())).ln()
                    })
                    .sum::<f64>()
            })
            .sum();
        assert!((f - by_hand).abs() < 1e-12);

        assert!(matches!(
            score_completion(&t, &BTreeMap::new(), &m, &cfg()),
            Err(Error::UncoveredPosition(1))
        ));
    }

    #[test]
    fn single_action_vocab_fills_everything() {
        let c = parse_corpus(r#"[[["x",1.0]],[["x",1.0]],[["x",1.0]]]"#).unwrap();
        let m = train_corpus(&c, &TrainingConfig { dim: 3, ..Default::default() }).unwrap();
        let q = c.traces()[0].with_missing(&[0, 2]);
        let r = recognize(&q, &m, &RecognitionConfig::default()).unwrap();
        assert_eq!(r.filled, BTreeMap::from([(0, 0), (2, 0)]));
    }

    #[test]
    fn single_missing_is_exhaustive_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..30 {
            let n = rng.gen_range(2..=32);
            let m = random_model(n, 4, seed);
            let len = rng.gen_range(2..8);
            let pos = rng.gen_range(0..len);
            let t = random_trace(&mut rng, n, len, &[pos]);
            let r = recognize(&t, &m, &cfg()).unwrap();
            let mut best = (f64::NEG_INFINITY, 0);
            for a in 0..n {
                let f = score_completion(&t, &BTreeMap::from([(pos, a)]), &m, &cfg()).unwrap();
                if f > best.0 {
                    best = (f, a);
                }
            }
            assert_eq!(r.filled[&pos], best.1);
            assert!((r.score - best.0).abs() < 1e-9);
            let head = recommend(&t, pos, &m, &RecognitionConfig { recommendations: 1, ..cfg() })
                .unwrap();
            assert_eq!(head[0].0, best.1);
        }
    }

    #[test]
    fn recommendations_rank_whole_vocab() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(7, 3, 4);
        let t = random_trace(&mut rng, 7, 5, &[2]);
        let all = recommend(&t, 2, &m, &RecognitionConfig { recommendations: 7, ..cfg() }).unwrap();
        let mut ids: Vec<usize> = all.iter().map(|x| x.0).collect();
        assert!(all.windows(2).all(|w| w[0].1 >= w[1].1));
        ids.sort_unstable();
        assert_eq!(ids, (0..7).collect::<Vec<_>>());
        assert!(matches!(recommend(&t, 1, &m, &cfg()), Err(Error::NotMissing(1))));
    }

    #[test]
    fn errors_and_score_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_model(5, 3, 6);
        let t = random_trace(&mut rng, 5, 4, &[]);
        assert!(matches!(recognize(&t, &m, &cfg()), Err(Error::NothingToRecognize)));
        let t = random_trace(&mut rng, 5, 6, &[1, 2, 4]);
        let r = recognize(&t, &m, &cfg()).unwrap();
        let f = score_completion(&t, &r.filled, &m, &cfg()).unwrap();
        assert!((r.score - f).abs() < 1e-9);
        assert_eq!(r.filled.keys().copied().collect::<Vec<_>>(), vec![1, 2, 4]);
    }

    #[test]
    fn sweeps_never_decrease_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for seed in 0..20 {
            let m = random_model(6, 3, seed);
            let t = random_trace(&mut rng, 6, 7, &[1, 2, 3, 5]);
            let mut prev = f64::NEG_INFINITY;
            for sweeps in 1..6 {
                let c = RecognitionConfig { max_sweeps: sweeps, ..cfg() };
                let r = recognize(&t, &m, &c).unwrap();
                assert!(r.score >= prev - 1e-12);
                prev = r.score;
            }
        }
    }

    #[test]
    fn learns_alternating_corpus() {
        // a b a b ... : b should be far more affine to a than a is to itself
        let line: Vec<String> = (0..12)
            .map(|i| format!("[[\"{}\",1.0]]", if i % 2 == 0 { "a" } else { "b" }))
            .collect();
        let text = format!("[{}]\n", line.join(",")).repeat(10);
        let c: PlanCorpus = parse_corpus(&text).unwrap();
        let m = train_corpus(&c, &TrainingConfig { dim: 8, epochs: 10, ..Default::default() })
            .unwrap();
        let a = ActionDistribution::one_hot(0);
        let b = ActionDistribution::one_hot(1);
        assert!(affinity_pair(&a, &b, &m) > affinity_pair(&a, &a, &m));
    }
}
