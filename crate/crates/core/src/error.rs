use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed JSON: {source}")]
    MalformedJson {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("topic registry: {0}")]
    Registry(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("duplicate sentence id {0:?}")]
    DuplicateId(String),
    #[error("sentence {id:?}: {tokens} tokens but {labels} labels")]
    LengthMismatch {
        id: String,
        tokens: usize,
        labels: usize,
    },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("topic {topic:?} has {count} sentences, at least 10 are needed for percentage splits")]
    DegenerateSplit { topic: String, count: usize },
    #[error("no prediction for sentence {sentence_id:?} in run {run}")]
    MissingPrediction { sentence_id: String, run: u32 },
    #[error("prediction for {sentence_id:?} has {got} token labels, gold has {expected}")]
    PredictionLength {
        sentence_id: String,
        expected: usize,
        got: usize,
    },
    #[error("sequence lengths differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding table: {0}")]
    Embedding(String),
    #[error("annotation record {pair_id:?}: {message}")]
    Annotation { pair_id: String, message: String },
    #[error("topic {0:?} has no pure non-ARG sentences")]
    NoNonArgSentences(String),
    #[error("cannot satisfy balance: {0}")]
    Balance(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
