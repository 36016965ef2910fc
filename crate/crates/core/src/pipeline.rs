//! Whole-document tagging and redaction.

use crate::corpus::{Annotation, Document, EhrMetadata};
use crate::features::{extract_all, FeatureError, Resources};
use crate::tagger::{Model, TaggerError};
use crate::tokenizer::{labels_to_spans, sequences};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
}

/// Predicted PHI spans of `text`, in document order.
pub fn annotate(
    model: &Model,
    doc_id: &str,
    text: &str,
    metadata: &EhrMetadata,
    resources: &Resources,
) -> Result<Vec<Annotation>, PipelineError> {
    let mut spans = Vec::new();
    for seq in sequences(doc_id, text, model.config.max_sequence_length) {
        let features = extract_all(&seq, text, metadata, &model.schema, resources)?;
        let tags = model.predict(&seq, &features, &model.schema)?;
        spans.extend(labels_to_spans(&seq.tokens, &tags.labels, text));
    }
    Ok(spans)
}

pub fn annotate_document(
    model: &Model,
    doc: &Document,
    resources: &Resources,
) -> Result<Vec<Annotation>, PipelineError> {
    annotate(model, &doc.doc_id, &doc.text, &doc.metadata, resources)
}

/// Replace each span with `[**TYPE**]`. Spans must be non-overlapping and
/// sorted; offsets are in characters.
pub fn redact(text: &str, spans: &[Annotation]) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for s in spans {
        let start = s.start.max(at).min(chars.len());
        out.extend(&chars[at..start]);
        out.push_str(&format!("[**{}**]", s.phi_type.placeholder()));
        at = s.end.clamp(start, chars.len());
    }
    out.extend(&chars[at..]);
    out
}
