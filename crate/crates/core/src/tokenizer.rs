//! Whitespace/character-class tokenization, sentence segmentation and the
//! projection of character-offset annotations onto BIO token labels.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{char_boundaries, Annotation, PhiType};

pub const DEFAULT_MAX_SEQUENCE_LENGTH: usize = 250;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenizerError {
    #[error("{doc_id}: token `{surface}` at {start}..{end} overlaps two annotations")]
    AmbiguousToken {
        doc_id: String,
        surface: String,
        start: usize,
        end: usize,
    },
    #[error("bad label `{0}`")]
    BadLabel(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Character offset into the document text.
    pub start: usize,
    pub end: usize,
    pub sequence_index: usize,
}

impl Token {
    pub fn new(surface: impl Into<String>, start: usize, end: usize) -> Self {
        Token {
            surface: surface.into(),
            start,
            end,
            sequence_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    pub doc_id: String,
    pub tokens: Vec<Token>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// BIO2 label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum TokenLabel {
    #[default]
    O,
    B(PhiType),
    I(PhiType),
}

impl TokenLabel {
    pub const COUNT: usize = 1 + 2 * PhiType::ALL.len();

    /// `O` is 0, then `B-t`, `I-t` for each type in [`PhiType::ALL`] order.
    pub fn index(self) -> usize {
        match self {
            TokenLabel::O => 0,
            TokenLabel::B(t) => 1 + 2 * t.index(),
            TokenLabel::I(t) => 2 + 2 * t.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        if i == 0 {
            return Some(TokenLabel::O);
        }
        let t = *PhiType::ALL.get((i - 1) / 2)?;
        Some(if i % 2 == 1 {
            TokenLabel::B(t)
        } else {
            TokenLabel::I(t)
        })
    }

    pub fn phi_type(self) -> Option<PhiType> {
        match self {
            TokenLabel::O => None,
            TokenLabel::B(t) | TokenLabel::I(t) => Some(t),
        }
    }

    pub fn is_phi(self) -> bool {
        self != TokenLabel::O
    }
}

impl fmt::Display for TokenLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenLabel::O => f.write_str("O"),
            TokenLabel::B(t) => write!(f, "B-{t}"),
            TokenLabel::I(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for TokenLabel {
    type Err = TokenizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TokenizerError::BadLabel(s.to_string());
        if s == "O" {
            return Ok(TokenLabel::O);
        }
        let (prefix, name) = s.split_once('-').ok_or_else(bad)?;
        let t: PhiType = name.parse().map_err(|_| bad())?;
        match prefix {
            "B" => Ok(TokenLabel::B(t)),
            "I" => Ok(TokenLabel::I(t)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Letter,
    Digit,
    Symbol,
}

fn class(c: char) -> CharClass {
    if c.is_alphabetic() {
        CharClass::Letter
    } else if c.is_numeric() {
        CharClass::Digit
    } else {
        CharClass::Symbol
    }
}

/// Split on whitespace, then into maximal letter runs, maximal digit runs and
/// single symbol characters. Offsets index the original text in characters.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(CharClass, usize, String)> = None;
    let flush = |cur: &mut Option<(CharClass, usize, String)>, tokens: &mut Vec<Token>| {
        if let Some((_, start, s)) = cur.take() {
            let end = start + s.chars().count();
            let idx = tokens.len();
            tokens.push(Token {
                surface: s,
                start,
                end,
                sequence_index: idx,
            });
        }
    };
    for (pos, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut current, &mut tokens);
            continue;
        }
        let k = class(c);
        match &mut current {
            Some((ck, _, s)) if *ck == k && k != CharClass::Symbol => s.push(c),
            _ => {
                flush(&mut current, &mut tokens);
                current = Some((k, pos, c.to_string()));
            }
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

fn is_blank_line_gap(gap: &str) -> bool {
    let mut newlines = 0;
    for c in gap.chars() {
        if c == '\n' {
            newlines += 1;
            if newlines >= 2 {
                return true;
            }
        } else if !c.is_whitespace() {
            newlines = 0;
        }
    }
    false
}

/// Cut a document's tokens into tagging sequences.
///
/// A sequence ends after `.`, `?` or `!` when whitespace and an uppercase
/// letter follow, or wherever a blank line separates two tokens. Pieces
/// longer than `max_len` are then cut into `max_len`-sized chunks.
pub fn segment(doc_id: &str, tokens: &[Token], text: &str, max_len: usize) -> Vec<Sequence> {
    assert!(max_len >= 1, "max_len must be at least 1");
    let bounds = char_boundaries(text);
    let gap = |a: &Token, b: &Token| &text[bounds[a.end]..bounds[b.start]];
    let mut pieces: Vec<Vec<Token>> = Vec::new();
    let mut cur: Vec<Token> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        cur.push(tok.clone());
        let Some(next) = tokens.get(i + 1) else { break };
        let g = gap(tok, next);
        let sentence_end = matches!(tok.surface.as_str(), "." | "?" | "!")
            && g.chars().any(char::is_whitespace)
            && next.surface.chars().next().is_some_and(char::is_uppercase);
        if sentence_end || is_blank_line_gap(g) {
            pieces.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        pieces.push(cur);
    }
    let mut out = Vec::new();
    for piece in pieces {
        for chunk in piece.chunks(max_len) {
            let tokens = chunk
                .iter()
                .enumerate()
                .map(|(k, t)| Token {
                    sequence_index: k,
                    ..t.clone()
                })
                .collect();
            out.push(Sequence {
                doc_id: doc_id.to_string(),
                tokens,
            });
        }
    }
    out
}

/// Tokenize and segment one text.
pub fn sequences(doc_id: &str, text: &str, max_len: usize) -> Vec<Sequence> {
    segment(doc_id, &tokenize(text), text, max_len)
}

/// Gold labels for one sequence: a token touching an annotation by at least
/// one character takes its type, `B-` on the first such token of the
/// annotation within the sequence and `I-` afterwards.
pub fn project_labels(
    seq: &Sequence,
    annotations: &[Annotation],
) -> Result<Vec<TokenLabel>, TokenizerError> {
    let mut labels = Vec::with_capacity(seq.len());
    let mut prev: Option<usize> = None;
    for tok in &seq.tokens {
        let mut hits = annotations
            .iter()
            .enumerate()
            .filter(|(_, a)| a.start < tok.end && tok.start < a.end);
        let hit = hits.next();
        if hits.next().is_some() {
            return Err(TokenizerError::AmbiguousToken {
                doc_id: seq.doc_id.clone(),
                surface: tok.surface.clone(),
                start: tok.start,
                end: tok.end,
            });
        }
        let label = match hit {
            None => TokenLabel::O,
            Some((k, a)) if prev == Some(k) => TokenLabel::I(a.phi_type),
            Some((_, a)) => TokenLabel::B(a.phi_type),
        };
        prev = hit.map(|(k, _)| k);
        labels.push(label);
    }
    Ok(labels)
}

/// Merge contiguous `B`/`I` tokens of one type into character spans running
/// from the first token's start to the last token's end.
pub fn labels_to_spans(tokens: &[Token], labels: &[TokenLabel], text: &str) -> Vec<Annotation> {
    let bounds = char_boundaries(text);
    let mut spans: Vec<Annotation> = Vec::new();
    let mut open: Option<(PhiType, usize, usize)> = None;
    let close = |open: &mut Option<(PhiType, usize, usize)>, spans: &mut Vec<Annotation>| {
        if let Some((t, s, e)) = open.take() {
            spans.push(Annotation {
                phi_type: t,
                start: s,
                end: e,
                surface: text[bounds[s]..bounds[e]].to_string(),
            });
        }
    };
    for (tok, &label) in tokens.iter().zip(labels) {
        match label {
            TokenLabel::O => close(&mut open, &mut spans),
            TokenLabel::I(t) if open.is_some_and(|(ot, _, _)| ot == t) => {
                if let Some((_, _, e)) = open.as_mut() {
                    *e = tok.end;
                }
            }
            TokenLabel::B(t) | TokenLabel::I(t) => {
                close(&mut open, &mut spans);
                open = Some((t, tok.start, tok.end));
            }
        }
    }
    close(&mut open, &mut spans);
    spans
}

/// CoNLL-style dump: `surface<TAB>start<TAB>end<TAB>label`, one blank line
/// after each sequence.
pub fn format_conll(seqs: &[Sequence], labels: &[Vec<TokenLabel>]) -> String {
    let mut out = String::new();
    for (seq, labs) in seqs.iter().zip(labels) {
        for (t, l) in seq.tokens.iter().zip(labs) {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", t.surface, t.start, t.end, l));
        }
        out.push('\n');
    }
    out
}
