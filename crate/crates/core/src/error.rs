use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty utterance: no tokens left after tokenization")]
    EmptyUtterance,

    #[error("gazetteer phrase is empty")]
    EmptyPhrase,

    #[error("gazetteer phrase `{phrase}` is mapped to both {first} and {second}")]
    GazetteerConflict {
        phrase: String,
        first: String,
        second: String,
    },

    #[error("unknown mask category `{0}`")]
    UnknownCategory(String),

    #[error("correction row {row} references no proposal: utterance `{utterance_id}` span {start}..{end}")]
    DanglingCorrection {
        row: usize,
        utterance_id: String,
        start: usize,
        end: usize,
    },

    #[error("invalid decision `{0}`")]
    InvalidDecision(String),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("unknown builtin model kind `{0}`")]
    UnknownModelKind(String),

    #[error("non-finite weight for token `{token}` in class `{class}`")]
    NonFiniteWeight { class: String, token: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("adapter failure on batch indices {indices:?}: {message}")]
    Adapter { indices: Vec<usize>, message: String },

    #[error("{method} is capped at {cap} tokens but the utterance has {tokens}; use the partition or permutation method")]
    TooManyTokens {
        method: &'static str,
        tokens: usize,
        cap: usize,
    },

    #[error("invalid partition tree: {0}")]
    InvalidTree(String),

    #[error("attribution for class `{0}` does not belong to the aggregated dimension")]
    MixedDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed vector file header: {0}")]
    MalformedHeader(String),

    #[error("line {line}: expected {expected} vector components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("word `{0}` has no vector")]
    MissingWord(String),

    #[error("word `{0}` has a zero vector")]
    ZeroVector(String),
}
