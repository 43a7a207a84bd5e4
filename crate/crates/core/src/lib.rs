//! Embeddings learned from sequences of action distributions, resampling and
//! argmax baselines, and affinity-based completion of partially observed plans.
//!
//! The pipeline is: [`synthesis`] builds uncertain corpora from ground-truth
//! traces, [`trainer`] learns embeddings over a [`huffman`] tree,
//! [`recognizer`] fills missing steps, and [`evaluation`] runs the
//! cross-validated comparison.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod huffman;
pub mod recognizer;
pub mod resampler;
pub mod rng;
pub mod synthesis;
pub mod trainer;

pub use corpus::{ActionDistribution, ActionVocab, DistributionTrace, ObservationStep, PlanCorpus};
pub use error::{Error, Result};
pub use recognizer::{recognize, RecognitionConfig, RecognitionResult};
pub use trainer::{train_corpus, EmbeddingModel, ModelKind, TrainingConfig};
