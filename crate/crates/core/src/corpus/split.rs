use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Document};
use crate::nn::Rng;

/// Train, validation and test shares.
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.7, 0.1, 0.2);

/// Document-level partition of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    /// Documents of each part, in split order. Unknown ids are an error.
    pub fn partition(
        &self,
        corpus: &[Document],
    ) -> Result<(Vec<Document>, Vec<Document>, Vec<Document>), CorpusError> {
        let by_id: std::collections::HashMap<&str, &Document> =
            corpus.iter().map(|d| (d.doc_id.as_str(), d)).collect();
        let pick = |ids: &[String]| -> Result<Vec<Document>, CorpusError> {
            ids.iter()
                .map(|id| {
                    by_id.get(id.as_str()).map(|d| (*d).clone()).ok_or_else(|| {
                        CorpusError::InvalidSplit(format!("doc_id {id} not in corpus"))
                    })
                })
                .collect()
        };
        Ok((pick(&self.train)?, pick(&self.validation)?, pick(&self.test)?))
    }
}

/// Shuffle doc_ids (sorted first, then a seeded Fisher-Yates pass) and cut.
///
/// Validation and test receive `floor(n * f)` documents each and the
/// remainder goes to train, so the held-out sets never exceed their nominal
/// share. Each output list is sorted by doc_id.
pub fn split_corpus(
    corpus: &[Document],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    let (ft, fv, fs) = fractions;
    for f in [ft, fv, fs] {
        if !(0.0..=1.0).contains(&f) {
            return Err(CorpusError::InvalidSplit(format!(
                "fraction {f} outside [0, 1]"
            )));
        }
    }
    if ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidSplit(format!(
            "fractions sum to {}, not 1",
            ft + fv + fs
        )));
    }
    if corpus.is_empty() {
        return Err(CorpusError::InvalidSplit("corpus is empty".into()));
    }
    let mut ids: Vec<String> = corpus.iter().map(|d| d.doc_id.clone()).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CorpusError::DuplicateDocId(w[0].clone()));
    }
    let n = ids.len();
    let n_val = held_out_size(n, fv);
    let n_test = held_out_size(n, fs);
    let n_train = n - n_val - n_test;

    Rng::new(seed).shuffle(&mut ids);
    let mut test = ids.split_off(n_train + n_val);
    let mut validation = ids.split_off(n_train);
    let mut train = ids;
    train.sort();
    validation.sort();
    test.sort();
    Ok(DatasetSplit {
        train,
        validation,
        test,
    })
}

fn held_out_size(n: usize, fraction: f64) -> usize {
    // The tolerance keeps products such as 100 * 0.29 = 28.999... at 29.
    ((n as f64 * fraction) + 1e-9).floor() as usize
}

pub fn write_split(path: &Path, split: &DatasetSplit) -> Result<(), CorpusError> {
    let mut s = serde_json::to_string_pretty(split).expect("split serializes");
    s.push('\n');
    fs::write(path, s).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_split(path: &Path) -> Result<DatasetSplit, CorpusError> {
    let s = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let split: DatasetSplit =
        serde_json::from_str(&s).map_err(|e| CorpusError::InvalidSplit(e.to_string()))?;
    let all: Vec<&String> = split
        .train
        .iter()
        .chain(&split.validation)
        .chain(&split.test)
        .collect();
    let unique: BTreeSet<&String> = all.iter().copied().collect();
    if unique.len() != all.len() {
        return Err(CorpusError::InvalidSplit(
            "a doc_id appears in more than one list".into(),
        ));
    }
    Ok(split)
}
