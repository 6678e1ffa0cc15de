use thiserror::Error;

/// Problems with tables, questions and corpus files.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("table {table}: column {column}, row {row}: cell does not match column type")]
    TypeMismatch { table: String, column: String, row: usize },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("invalid question: {0}")]
    InvalidQuestion(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

/// Errors from the abstract and instantiation grammars.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("rule sequence invalid at index {index}: {reason}")]
    BadSequence { index: usize, reason: String },
    #[error("slot {slot}: {reason}")]
    SlotMismatch { slot: usize, reason: String },
    #[error("program text: {0}")]
    ProgramSyntax(String),
}

/// Errors raised by the alignment lattice.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("slot {0} has no feasible span")]
    InfeasibleSlot(usize),
    #[error("no complete alignment exists")]
    NoCompleteAlignment,
    #[error("too many slots: {0} exceeds the limit of {1}")]
    TooManySlots(usize, usize),
    #[error("brute-force enumeration exceeds {0} alignments")]
    CombinatorialBlowup(usize),
}

/// Errors from model construction, checkpoints and decoding.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("abstract program is not realizable under the table grammar at step {0}")]
    Unrealizable(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("embedding file line {line}: {message}")]
    Embeddings { line: usize, message: String },
    #[error("slot {0} has no candidates")]
    NoCandidates(usize),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}
