//! Molecular ingestion: the native JSONL format, SDF V2000 molblocks, node
//! featurization, dataset splits, and target standardization.

pub mod elements;

mod dataset;
mod jsonl;
mod molecule;
mod sdf;

pub use dataset::{fit_scaler, split_dataset, Dataset, SplitSpec, TargetScaler};
pub use jsonl::{parse_jsonl, write_jsonl};
pub use molecule::{featurize_nodes, Atom, Bond, Molecule};
pub use sdf::parse_sdf_v2000;

use std::fmt;

/// Errors from parsing, featurization, and split handling.
#[derive(Debug, Clone, PartialEq)]
pub enum MolioError {
    /// Malformed input, with the 1-based line number and, for multi-record
    /// formats, the 1-based record index.
    Parse {
        line: usize,
        record: Option<usize>,
        msg: String,
    },
    /// The input contained no molecule records at all.
    NoRecords,
    /// An atom's element is missing from the featurization vocabulary.
    Featurize { atomic_number: u32 },
    /// A dataset- or split-level precondition was violated.
    Contract(String),
}

impl fmt::Display for MolioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MolioError::Parse { line, record: Some(record), msg } => {
                write!(f, "record {record}, line {line}: {msg}")
            }
            MolioError::Parse { line, record: None, msg } => write!(f, "line {line}: {msg}"),
            MolioError::NoRecords => write!(f, "no records"),
            MolioError::Featurize { atomic_number } => {
                let name = elements::symbol(*atomic_number)
                    .map_or_else(|| atomic_number.to_string(), str::to_string);
                write!(f, "element {name} (z={atomic_number}) is not in the vocabulary")
            }
            MolioError::Contract(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for MolioError {}
