use thiserror::Error;

/// Errors raised by loading, fitting, prediction and evaluation.
#[derive(Debug, Error)]
pub enum SurvError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("bad value at row {row}, column `{column}`: {reason}")]
    BadValue {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate split: {train} train / {test} test records")]
    DegenerateSplit { train: usize, test: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("labels contain only one class")]
    OneClassOnly,
    #[error("labels contain no positives")]
    NoPositives,
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("input is constant")]
    ConstantInput,
    #[error("input too short: need at least {needed}, found {found}")]
    TooShort { needed: usize, found: usize },

    #[error("empty input")]
    EmptyInput,
    #[error("no events observed")]
    NoEvents,
    #[error("model is not identifiable: {0}")]
    Singular(String),
    #[error("optimizer diverged after {iterations} iterations: {reason}")]
    Diverged { iterations: usize, reason: String },

    #[error("too few uncensored subjects for a time grid: need {needed}, found {found}")]
    TooFewEvents { needed: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("k = {k} is invalid for {d} columns")]
    BadK { k: usize, d: usize },
    #[error("degenerate subgroup: {0}")]
    DegenerateGroup(String),
    #[error("parameter grid is empty")]
    EmptyGrid,

    #[error("prediction ids differ: {0}")]
    IdMismatch(String),
    #[error("no prediction sets supplied")]
    EmptyList,
    #[error("invalid prediction set: {0}")]
    InvalidPredictions(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(String),
}

pub type Result<T, E = SurvError> = std::result::Result<T, E>;

impl From<toml::de::Error> for SurvError {
    fn from(e: toml::de::Error) -> Self {
        SurvError::Toml(e.to_string())
    }
}

impl From<toml::ser::Error> for SurvError {
    fn from(e: toml::ser::Error) -> Self {
        SurvError::Toml(e.to_string())
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(SurvError::LengthMismatch { expected, found })
    }
}
