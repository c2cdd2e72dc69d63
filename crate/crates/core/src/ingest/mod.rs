//! Mark data ingestion: CSV parsing, panel preprocessing, and the
//! same-nationality / direct-competitor labels.

mod label;
mod preprocess;
mod record;

pub use label::{event_ranks, label_marks, LabeledMark};
pub use preprocess::{is_synchronized_apparatus, preprocess, EventKey, Performance, PreprocessConfig, PreprocessReport, Preprocessed};
pub use record::{
    parse_dataset, write_dataset, ControlScore, CountryCode, Discipline, JudgeRole, Mark, MarkKind, MarkRecord, Stage, CSV_HEADER,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: mark `{value}` outside [0, 10]")]
    MarkOutOfRange { line: u64, value: String },
    #[error("line {line}: mark `{value}` not at 0.1 granularity")]
    MarkGranularity { line: u64, value: String },
    #[error("line {line}: unknown {field} value `{value}`")]
    UnknownValue { line: u64, field: &'static str, value: String },
    #[error("line {line}: duplicate mark for performance `{performance_id}` by judge `{judge_id}` (first on line {first_line})")]
    Duplicate { line: u64, first_line: u64, performance_id: String, judge_id: String },
    #[error("performance `{0}` has marks with inconsistent {1}")]
    InconsistentPerformance(String, &'static str),
    #[error("no mark records")]
    Empty,
    #[error("invalid preprocessing config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
