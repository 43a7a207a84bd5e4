use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("distribution does not normalize (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("confidence {value} outside (0, 1]")]
    ConfidenceRange { value: f64 },

    #[error("duplicate action id {id} within one distribution")]
    DuplicateAction { id: usize },

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("empty trace")]
    EmptyTrace,

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("unknown action id {id} (vocabulary size {size})")]
    UnknownAction { id: usize, size: usize },

    #[error("unknown action symbol {0:?}")]
    UnknownSymbol(String),

    #[error("kl divergence is infinite: q[{index}] = 0 where p > 0")]
    InfiniteDivergence { index: usize },

    #[error("trace {trace} step {step} is missing; operation requires a complete trace")]
    MissingStep { trace: usize, step: usize },

    #[error("nothing to recognize: trace has no missing positions")]
    NothingToRecognize,

    #[error("position {0} is not missing")]
    NotMissing(usize),

    #[error("no completion given for missing position {0}")]
    UncoveredPosition(usize),

    #[error("all path weights are zero")]
    ZeroWeights,

    #[error("no distractor to swap: distribution has a single action")]
    NoDistractor,

    #[error("ground truth confidence {gt} is not strictly greatest (max distractor {distractor})")]
    GroundTruthNotArgmax { gt: f64, distractor: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("empty result set")]
    EmptyResults,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
