//! Annotated notes, their EHR sidecars, dataset splits and the synthetic
//! note generator.
//!
//! A corpus directory holds three files per note:
//!
//! * `<doc_id>.txt` - UTF-8 note text
//! * `<doc_id>.ann` - `PHI_TYPE<TAB>start<TAB>end<TAB>surface` per line,
//!   offsets counted in characters, end exclusive
//! * `<doc_id>.meta.json` - patient and doctor names from the EHR

mod io;
mod split;
mod synthetic;

pub use io::{format_annotations, load_corpus, load_document, load_notes, parse_annotations, write_corpus, write_document};
pub use split::{read_split, split_corpus, write_split, DatasetSplit, DEFAULT_FRACTIONS};
pub use synthetic::{generate_synthetic_corpus, GenProfile, Slot, TemplateBank};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("document {doc_id}: missing sidecar {file}")]
    MissingSidecar { doc_id: String, file: String },
    #[error("document {doc_id}, line {line}: {message}")]
    Parse {
        doc_id: String,
        line: usize,
        message: String,
    },
    #[error("document {doc_id}, line {line}: unknown PHI type `{name}`")]
    UnknownPhiType {
        doc_id: String,
        line: usize,
        name: String,
    },
    #[error("document {doc_id}: annotation {start}..{end} outside text of length {len}")]
    OutOfRange {
        doc_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("document {doc_id}: annotations {first:?} and {second:?} overlap")]
    Overlap {
        doc_id: String,
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("document {doc_id}: annotation {start}..{end} has surface `{expected}` but text is `{found}`")]
    SurfaceMismatch {
        doc_id: String,
        start: usize,
        end: usize,
        expected: String,
        found: String,
    },
    #[error("document {doc_id}: bad metadata: {message}")]
    Metadata { doc_id: String, message: String },
    #[error("duplicate document id {0}")]
    DuplicateDocId(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid generator input: {0}")]
    Generator(String),
}

/// The PHI categories, in the order used for label indices and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhiType {
    Zip,
    Date,
    Phone,
    Patient,
    #[serde(rename = "ID")]
    Id,
    Doctor,
    Location,
    Age,
    Hospital,
    State,
    Street,
    Country,
}

impl PhiType {
    pub const ALL: [PhiType; 12] = [
        PhiType::Zip,
        PhiType::Date,
        PhiType::Phone,
        PhiType::Patient,
        PhiType::Id,
        PhiType::Doctor,
        PhiType::Location,
        PhiType::Age,
        PhiType::Hospital,
        PhiType::State,
        PhiType::Street,
        PhiType::Country,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhiType::Zip => "Zip",
            PhiType::Date => "Date",
            PhiType::Phone => "Phone",
            PhiType::Patient => "Patient",
            PhiType::Id => "ID",
            PhiType::Doctor => "Doctor",
            PhiType::Location => "Location",
            PhiType::Age => "Age",
            PhiType::Hospital => "Hospital",
            PhiType::State => "State",
            PhiType::Street => "Street",
            PhiType::Country => "Country",
        }
    }

    /// Doctor, hospital, state and country names are protected here but are
    /// not among the identifiers HIPAA requires removing.
    pub fn hipaa_required(self) -> bool {
        !matches!(
            self,
            PhiType::Doctor | PhiType::Hospital | PhiType::State | PhiType::Country
        )
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Placeholder text for redaction, e.g. `PATIENT`.
    pub fn placeholder(self) -> String {
        self.name().to_uppercase()
    }
}

impl fmt::Display for PhiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhiType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PhiType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| s.to_string())
    }
}

/// A gold or predicted PHI span in character offsets (end exclusive).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Annotation {
    pub phi_type: PhiType,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EhrMetadata {
    pub patient_first_name: String,
    pub patient_last_name: String,
    pub doctor_first_names: Vec<String>,
    pub doctor_last_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub annotations: Vec<Annotation>,
    pub metadata: EhrMetadata,
}

impl Document {
    /// Build a document, checking every annotation against the text.
    pub fn new(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        mut annotations: Vec<Annotation>,
        metadata: EhrMetadata,
    ) -> Result<Self, CorpusError> {
        let doc_id = doc_id.into();
        let text = text.into();
        validate_metadata(&doc_id, &metadata)?;
        validate_annotations(&doc_id, &text, &mut annotations)?;
        Ok(Document {
            doc_id,
            text,
            annotations,
            metadata,
        })
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// Byte offset of every character boundary, including the end of the text.
pub fn char_boundaries(text: &str) -> Vec<usize> {
    let mut b: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
    b.push(text.len());
    b
}

/// Text between two character offsets, or `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let b = char_boundaries(text);
    if end >= b.len() {
        return None;
    }
    Some(&text[b[start]..b[end]])
}

fn validate_metadata(doc_id: &str, meta: &EhrMetadata) -> Result<(), CorpusError> {
    let bad = |message: &str| CorpusError::Metadata {
        doc_id: doc_id.to_string(),
        message: message.to_string(),
    };
    if meta.patient_first_name.trim().is_empty() {
        return Err(bad("patient_first_name is empty"));
    }
    if meta.patient_last_name.trim().is_empty() {
        return Err(bad("patient_last_name is empty"));
    }
    Ok(())
}

/// Sorts by start offset and enforces range, surface and overlap rules.
fn validate_annotations(
    doc_id: &str,
    text: &str,
    annotations: &mut [Annotation],
) -> Result<(), CorpusError> {
    let bounds = char_boundaries(text);
    let len = bounds.len() - 1;
    for a in annotations.iter() {
        if a.start >= a.end || a.end > len {
            return Err(CorpusError::OutOfRange {
                doc_id: doc_id.to_string(),
                start: a.start,
                end: a.end,
                len,
            });
        }
        let found = &text[bounds[a.start]..bounds[a.end]];
        if found != a.surface {
            return Err(CorpusError::SurfaceMismatch {
                doc_id: doc_id.to_string(),
                start: a.start,
                end: a.end,
                expected: a.surface.clone(),
                found: found.to_string(),
            });
        }
    }
    annotations.sort_by_key(|a| (a.start, a.end));
    for w in annotations.windows(2) {
        if w[1].start < w[0].end {
            return Err(CorpusError::Overlap {
                doc_id: doc_id.to_string(),
                first: (w[0].start, w[0].end),
                second: (w[1].start, w[1].end),
            });
        }
    }
    Ok(())
}
