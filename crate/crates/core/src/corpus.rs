//! Action vocabularies, observation distributions and plan corpora, plus the
//! JSON Lines corpus format.
//!
//! A corpus line is one trace: an array of steps, each either `null` (a
//! missing observation) or an array of `[action, confidence]` pairs.

use std::collections::HashMap;

use serde_json::Value;

use crate::error::{Error, Result};

/// Tolerance on the sum of a distribution's confidences.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Bidirectional action-symbol to dense-id map with occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActionVocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
}

impl ActionVocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary from symbols in id order. Every count must be at least one.
    pub fn from_parts(symbols: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if symbols.len() != counts.len() {
            return Err(Error::Config(format!(
                "{} symbols but {} counts",
                symbols.len(),
                counts.len()
            )));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (id, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate symbol {s:?}")));
            }
        }
        if let Some(pos) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Config(format!("count of {:?} is zero", symbols[pos])));
        }
        Ok(Self {
            symbols,
            index,
            counts,
        })
    }

    /// Returns the id of `symbol`, adding it with a zero count if unseen.
    pub fn intern(&mut self, symbol: &str) -> usize {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = self.symbols.len();
        self.symbols.push(symbol.to_owned());
        self.index.insert(symbol.to_owned(), id);
        self.counts.push(0);
        id
    }

    pub fn id_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn check_id(&self, id: usize) -> Result<()> {
        if id < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownAction {
                id,
                size: self.len(),
            })
        }
    }

    /// The action with the highest count, ties to the lowest id.
    pub fn most_frequent(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (id, &c) in self.counts.iter().enumerate() {
            if best.map_or(true, |b| c > self.counts[b]) {
                best = Some(id);
            }
        }
        best
    }

    fn reset_counts(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
    }
}

/// A sparse categorical distribution over action ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    entries: Vec<(usize, f64)>,
}

impl ActionDistribution {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let mut sum = 0.0;
        for (i, &(id, c)) in entries.iter().enumerate() {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::ConfidenceRange { value: c });
            }
            if entries[..i].iter().any(|&(other, _)| other == id) {
                return Err(Error::DuplicateAction { id });
            }
            sum += c;
        }
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self { entries })
    }

    pub fn one_hot(id: usize) -> Self {
        Self {
            entries: vec![(id, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn confidence_of(&self, id: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == id).map(|e| e.1)
    }

    /// Most confident action, ties broken by lowest id.
    pub fn argmax(&self) -> usize {
        let mut best = self.entries[0];
        for &(id, c) in &self.entries[1..] {
            if c > best.1 || (c == best.1 && id < best.0) {
                best = (id, c);
            }
        }
        best.0
    }

    /// Exchanges the confidence values of two actions present in the distribution.
    pub fn swap_confidences(&mut self, a: usize, b: usize) -> Result<()> {
        let ia = self.position(a)?;
        let ib = self.position(b)?;
        let ca = self.entries[ia].1;
        self.entries[ia].1 = self.entries[ib].1;
        self.entries[ib].1 = ca;
        Ok(())
    }

    fn position(&self, id: usize) -> Result<usize> {
        self.entries
            .iter()
            .position(|e| e.0 == id)
            .ok_or(Error::UnknownAction {
                id,
                size: self.entries.len(),
            })
    }
}

/// Dense encoding of `d` over a vocabulary of `vocab_len` actions.
pub fn encode_distribution(d: &ActionDistribution, vocab_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; vocab_len];
    for &(id, c) in d.entries() {
        out[id] = c;
    }
    out
}

pub fn argmax_action(d: &ActionDistribution) -> usize {
    d.argmax()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservationStep {
    Known(ActionDistribution),
    Missing,
}

impl ObservationStep {
    pub fn known(&self) -> Option<&ActionDistribution> {
        match self {
            ObservationStep::Known(d) => Some(d),
            ObservationStep::Missing => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, ObservationStep::Missing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTrace {
    steps: Vec<ObservationStep>,
}

impl DistributionTrace {
    pub fn new(steps: Vec<ObservationStep>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptyTrace);
        }
        Ok(Self { steps })
    }

    /// A complete trace of one-hot steps.
    pub fn from_actions(actions: &[usize]) -> Result<Self> {
        Self::new(
            actions
                .iter()
                .map(|&a| ObservationStep::Known(ActionDistribution::one_hot(a)))
                .collect(),
        )
    }

    pub fn steps(&self) -> &[ObservationStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn missing_positions(&self) -> Vec<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_missing())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.steps.iter().all(|s| !s.is_missing())
    }

    /// Replaces every known distribution by a one-hot on its argmax.
    pub fn argmax_reduced(&self) -> Self {
        Self {
            steps: self
                .steps
                .iter()
                .map(|s| match s {
                    ObservationStep::Known(d) => {
                        ObservationStep::Known(ActionDistribution::one_hot(d.argmax()))
                    }
                    ObservationStep::Missing => ObservationStep::Missing,
                })
                .collect(),
        }
    }

    pub fn with_missing(&self, positions: &[usize]) -> Self {
        let mut steps = self.steps.clone();
        for &p in positions {
            steps[p] = ObservationStep::Missing;
        }
        Self { steps }
    }

    pub(crate) fn steps_mut(&mut self) -> &mut [ObservationStep] {
        &mut self.steps
    }
}

/// A vocabulary together with the traces expressed over it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanCorpus {
    vocab: ActionVocab,
    traces: Vec<DistributionTrace>,
}

impl PlanCorpus {
    pub fn new(vocab: ActionVocab, traces: Vec<DistributionTrace>) -> Result<Self> {
        for trace in &traces {
            for step in trace.steps() {
                if let ObservationStep::Known(d) = step {
                    for &(id, _) in d.entries() {
                        vocab.check_id(id)?;
                    }
                }
            }
        }
        Ok(Self { vocab, traces })
    }

    pub fn vocab(&self) -> &ActionVocab {
        &self.vocab
    }

    pub fn traces(&self) -> &[DistributionTrace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn into_parts(self) -> (ActionVocab, Vec<DistributionTrace>) {
        (self.vocab, self.traces)
    }

    /// Recomputes occurrence counts from the traces. Actions that do not occur
    /// keep a floor count of one so the vocabulary invariant holds for subsets.
    pub fn recount(mut self) -> Self {
        self.vocab.reset_counts();
        for trace in &self.traces {
            for step in trace.steps() {
                if let ObservationStep::Known(d) = step {
                    for &(id, _) in d.entries() {
                        self.vocab.counts[id] += 1;
                    }
                }
            }
        }
        self.vocab.counts.iter_mut().for_each(|c| *c = (*c).max(1));
        self
    }

    /// Corpus over the same vocabulary holding the traces at `indices`, recounted.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            vocab: self.vocab.clone(),
            traces: indices.iter().map(|&i| self.traces[i].clone()).collect(),
        }
        .recount()
    }

    pub fn argmax_reduced(&self) -> Self {
        Self {
            vocab: self.vocab.clone(),
            traces: self.traces.iter().map(|t| t.argmax_reduced()).collect(),
        }
        .recount()
    }

    pub fn ensure_complete(&self) -> Result<()> {
        for (ti, trace) in self.traces.iter().enumerate() {
            if let Some(step) = trace.steps().iter().position(|s| s.is_missing()) {
                return Err(Error::MissingStep { trace: ti, step });
            }
        }
        Ok(())
    }

    /// Serializes to the JSON Lines corpus format, one trace per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for trace in &self.traces {
            let steps: Vec<Value> = trace
                .steps()
                .iter()
                .map(|s| match s {
                    ObservationStep::Missing => Value::Null,
                    ObservationStep::Known(d) => Value::Array(
                        d.entries()
                            .iter()
                            .map(|&(id, c)| {
                                Value::Array(vec![
                                    Value::from(self.vocab.symbol(id)),
                                    Value::from(c),
                                ])
                            })
                            .collect(),
                    ),
                })
                .collect();
            out.push_str(&Value::Array(steps).to_string());
            out.push('\n');
        }
        out
    }
}

/// Parses a corpus file, building the vocabulary from the symbols it contains.
pub fn parse_corpus(text: &str) -> Result<PlanCorpus> {
    let mut vocab = ActionVocab::new();
    let traces = parse_lines(text, |sym| Ok(vocab.intern(sym)))?;
    Ok(PlanCorpus { vocab, traces }.recount())
}

/// Parses a corpus over an existing vocabulary; unknown symbols are errors.
/// The vocabulary (and its counts) are kept as given.
pub fn parse_corpus_with_vocab(text: &str, vocab: &ActionVocab) -> Result<PlanCorpus> {
    let traces = parse_lines(text, |sym| {
        vocab
            .id_of(sym)
            .ok_or_else(|| Error::UnknownSymbol(sym.to_owned()))
    })?;
    Ok(PlanCorpus {
        vocab: vocab.clone(),
        traces,
    })
}

fn parse_lines(
    text: &str,
    mut resolve: impl FnMut(&str) -> Result<usize>,
) -> Result<Vec<DistributionTrace>> {
    let mut traces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: Error| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        };
        let trace = parse_trace(line, &mut resolve).map_err(at)?;
        traces.push(trace);
    }
    Ok(traces)
}

fn malformed(msg: &str) -> Error {
    Error::Config(msg.to_owned())
}

fn parse_trace(
    line: &str,
    resolve: &mut impl FnMut(&str) -> Result<usize>,
) -> Result<DistributionTrace> {
    let value: Value = serde_json::from_str(line)?;
    let Value::Array(raw_steps) = value else {
        return Err(malformed("trace must be a JSON array"));
    };
    let mut steps = Vec::with_capacity(raw_steps.len());
    for raw in raw_steps {
        match raw {
            Value::Null => steps.push(ObservationStep::Missing),
            Value::Array(pairs) => {
                let mut entries = Vec::with_capacity(pairs.len());
                for pair in pairs {
                    let (sym, conf) = match pair {
                        Value::Array(ref p) if p.len() == 2 => match (&p[0], p[1].as_f64()) {
                            (Value::String(s), Some(c)) => (s.clone(), c),
                            _ => return Err(malformed("pair must be [string, number]")),
                        },
                        _ => return Err(malformed("pair must be [string, number]")),
                    };
                    entries.push((resolve(&sym)?, conf));
                }
                steps.push(ObservationStep::Known(ActionDistribution::new(entries)?));
            }
            _ => return Err(malformed("step must be null or an array of pairs")),
        }
    }
    DistributionTrace::new(steps)
}

/// Parses a ground-truth file: one JSON array of action strings per line.
pub fn parse_ground_truth(text: &str) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let trace: Vec<String> = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if trace.is_empty() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: Error::EmptyTrace.to_string(),
            });
        }
        out.push(trace);
    }
    Ok(out)
}

pub fn ground_truth_to_jsonl(traces: &[Vec<String>]) -> String {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t).expect("strings serialize"));
        out.push('\n');
    }
    out
}
