use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("partition shape not divisible: {0}")]
    Divisibility(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("gradient coordinate set is not a subset of the inner-product feature set")]
    Subset,

    #[error("invalid sample size: {0}")]
    Size(String),

    #[error("invalid fraction {name}={value}: must lie in (0, 1]")]
    Fraction { name: &'static str, value: f64 },

    #[error("invalid constant: {0}")]
    Constant(String),

    #[error("cubic root certificate failed: closed form {closed_form}, bisection {bisection}")]
    Root { closed_form: f64, bisection: f64 },

    #[error("empty dataset")]
    EmptyData,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: label {label} is not a valid class label")]
    Label {
        path: PathBuf,
        line: usize,
        label: f64,
    },

    #[error("row {row}: label {label} is not -1 or +1")]
    InvalidLabel { row: usize, label: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sequence lengths differ: {0}")]
    LengthMismatch(String),

    #[error("experiments do not share a dataset and seed list: {0}")]
    DatasetMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used in error records written by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Divisibility(_) => "DivisibilityError",
            Error::Index(_) => "IndexError",
            Error::Dimension { .. } => "DimensionError",
            Error::Subset => "SubsetError",
            Error::Size(_) => "SizeError",
            Error::Fraction { .. } => "FractionError",
            Error::Constant(_) => "ConstantError",
            Error::Root { .. } => "RootError",
            Error::EmptyData => "EmptyDataError",
            Error::Parse { .. } => "ParseError",
            Error::Label { .. } | Error::InvalidLabel { .. } => "LabelError",
            Error::Config(_) => "ConfigError",
            Error::LengthMismatch(_) => "LengthMismatchError",
            Error::DatasetMismatch(_) => "DatasetMismatchError",
            Error::Io(_) => "IoError",
        }
    }
}
