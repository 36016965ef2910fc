//! Token-level precision, recall and F1 per PHI type, over all PHI, and over
//! the types HIPAA requires.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Annotation, Document, PhiType};
use crate::tokenizer::{project_labels, sequences, TokenLabel, TokenizerError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what}: {gold} gold vs {pred} predicted")]
    Misaligned {
        what: String,
        gold: usize,
        pred: usize,
    },
    #[error("cannot aggregate: {0}")]
    Aggregate(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Type(PhiType),
    /// Any PHI token, whatever its type.
    BinaryAll,
    /// PHI tokens of the HIPAA-required types. A token whose gold type is
    /// required counts as found when it is predicted as any PHI type.
    BinaryHipaa,
}

impl Scope {
    /// Report order: the twelve types, then the two binary scopes.
    pub fn all() -> Vec<Scope> {
        PhiType::ALL
            .into_iter()
            .map(Scope::Type)
            .chain([Scope::BinaryAll, Scope::BinaryHipaa])
            .collect()
    }

    fn positives(self, gold: TokenLabel, pred: TokenLabel) -> (bool, bool) {
        match self {
            Scope::Type(t) => (gold.phi_type() == Some(t), pred.phi_type() == Some(t)),
            Scope::BinaryAll => (gold.is_phi(), pred.is_phi()),
            Scope::BinaryHipaa => {
                let required = |l: TokenLabel| l.phi_type().is_some_and(PhiType::hipaa_required);
                let g = required(gold);
                (g, required(pred) || (g && pred.is_phi()))
            }
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Type(t) => write!(f, "{t}"),
            Scope::BinaryAll => f.write_str("Binary"),
            Scope::BinaryHipaa => f.write_str("Binary-HIPAA"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    fn add(&mut self, o: &ConfusionCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

pub fn token_confusion(
    gold: &[TokenLabel],
    pred: &[TokenLabel],
    scope: Scope,
) -> Result<ConfusionCounts, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::Misaligned {
            what: "labels".into(),
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&g, &p) in gold.iter().zip(pred) {
        match scope.positives(g, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// Percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// When there is nothing to find and nothing was predicted, precision and
/// recall are both 100.
pub fn metrics(c: &ConfusionCounts) -> Prf {
    let empty = c.tp + c.fp == 0 && c.tp + c.fn_ == 0;
    let ratio = |num: usize, den: usize| {
        if den > 0 {
            100.0 * num as f64 / den as f64
        } else if empty {
            100.0
        } else {
            0.0
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scope: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Present for single-run reports only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counts: Option<ConfusionCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub runs: usize,
    pub rows: Vec<ReportRow>,
}

impl MetricReport {
    pub fn from_counts(counts: &[(Scope, ConfusionCounts)]) -> Self {
        let rows = counts
            .iter()
            .map(|(s, c)| {
                let m = metrics(c);
                ReportRow {
                    scope: s.to_string(),
                    precision: m.precision,
                    recall: m.recall,
                    f1: m.f1,
                    support: c.support(),
                    counts: Some(*c),
                }
            })
            .collect();
        MetricReport { runs: 1, rows }
    }

    pub fn row(&self, scope: Scope) -> Option<&ReportRow> {
        let name = scope.to_string();
        self.rows.iter().find(|r| r.scope == name)
    }

    /// Convenience for a scope every full report has.
    pub fn get(&self, scope: Scope) -> &ReportRow {
        self.row(scope).expect("scope present in report")
    }

    /// `scope<TAB>P<TAB>R<TAB>F1<TAB>support`, two decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("scope\tP\tR\tF1\tsupport\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.2}\t{:.2}\t{:.2}\t{}\n",
                r.scope, r.precision, r.recall, r.f1, r.support
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Every scope over aligned label sequences.
pub fn full_report(
    gold: &[Vec<TokenLabel>],
    pred: &[Vec<TokenLabel>],
) -> Result<MetricReport, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::Misaligned {
            what: "sequences".into(),
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let scopes = Scope::all();
    let mut totals = vec![ConfusionCounts::default(); scopes.len()];
    for (g, p) in gold.iter().zip(pred) {
        for (s, total) in scopes.iter().zip(totals.iter_mut()) {
            total.add(&token_confusion(g, p, *s)?);
        }
    }
    let counts: Vec<(Scope, ConfusionCounts)> = scopes.into_iter().zip(totals).collect();
    Ok(MetricReport::from_counts(&counts))
}

/// Project gold and predicted spans of each document onto the same tokens
/// and score them.
pub fn evaluate_documents(
    gold: &[Document],
    predicted: &[Vec<Annotation>],
    max_sequence_length: usize,
) -> Result<MetricReport, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::Misaligned {
            what: "documents".into(),
            gold: gold.len(),
            pred: predicted.len(),
        });
    }
    let mut g_all = Vec::new();
    let mut p_all = Vec::new();
    for (doc, pred) in gold.iter().zip(predicted) {
        for seq in sequences(&doc.doc_id, &doc.text, max_sequence_length) {
            g_all.push(project_labels(&seq, &doc.annotations)?);
            p_all.push(project_labels(&seq, pred)?);
        }
    }
    full_report(&g_all, &p_all)
}

/// Mean of each percentage across runs. Scopes and supports must agree.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport, EvalError> {
    let first = reports
        .first()
        .ok_or_else(|| EvalError::Aggregate("no reports".into()))?;
    if reports.len() == 1 {
        return Ok(first.clone());
    }
    for r in &reports[1..] {
        if r.rows.len() != first.rows.len() {
            return Err(EvalError::Aggregate("different scopes".into()));
        }
        for (a, b) in first.rows.iter().zip(&r.rows) {
            if a.scope != b.scope {
                return Err(EvalError::Aggregate(format!("scope {} vs {}", a.scope, b.scope)));
            }
            if a.support != b.support {
                return Err(EvalError::Aggregate(format!("support differs for {}", a.scope)));
            }
        }
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let rows = first
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| ReportRow {
            scope: row.scope.clone(),
            precision: mean(&|r| r.rows[i].precision),
            recall: mean(&|r| r.rows[i].recall),
            f1: mean(&|r| r.rows[i].f1),
            support: row.support,
            counts: None,
        })
        .collect();
    Ok(MetricReport {
        runs: reports.iter().map(|r| r.runs).sum(),
        rows,
    })
}
