//! Construction-sequence grammar: commands, the 17-column token matrix,
//! quantization, structural validation and the dataset file format.

pub mod command;
pub mod dataset;
pub mod quantize;
pub mod sequence;
pub mod validate;

pub use command::{
    slot, slot_max, BooleanOp, CadCommand, CommandType, ExtentType, ExtrudeParams, N_BINS, N_COMMANDS,
    N_PARAMS, N_PARAM_CLASSES, UNUSED,
};
pub use dataset::{corpus_stats, dataset_to_string, load_dataset, CorpusStats, parse_dataset, save_dataset, split_of, DatasetError, DatasetRecord, Split};
pub use quantize::{dequantize, quantize, ParamFamily};
pub use sequence::{
    emit_matrix, parse_rows, parse_sequence, split_pairs, CadSequence, SketchExtrudePair,
    TokenMatrix, TokenRow, DEFAULT_SEQ_LEN,
};
pub use validate::{validate_structure, ValidityReport, ValidityRule};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CadError {
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("grammar violation: {0}")]
    GrammarViolation(String),
    #[error("row {row}, column {col}: value {value} outside -1..=255")]
    OutOfRange { row: usize, col: usize, value: i64 },
    #[error("expected {expected} rows, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("degenerate quantization range [{lo}, {hi}]")]
    DegenerateRange { lo: f64, hi: f64 },
}
