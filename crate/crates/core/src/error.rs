use std::path::PathBuf;

/// Errors produced by dataset ingestion, model persistence, combiners,
/// training, metrics and simulation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    DatasetParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("score {0} out of range [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("empty teacher list")]
    EmptyTeachers,

    #[error("empty orientation list")]
    EmptyOrientations,

    #[error("teacher score count {found} does not match weight count {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("single-class dev set: logistic fit needs both labels")]
    SingleClassDevSet,

    #[error("record ({question_id}, {paragraph_id}) has no label")]
    UnlabeledRecord {
        question_id: String,
        paragraph_id: String,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("metric input: {0}")]
    MetricInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::DatasetParse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
