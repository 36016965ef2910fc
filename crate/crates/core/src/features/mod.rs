//! Binary per-token features: EHR names, morphology, semantic flags,
//! temporal expressions, gazetteers and regular expressions.

mod patterns;
mod resources;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{char_boundaries, EhrMetadata};
use crate::tokenizer::{Sequence, Token};

pub use patterns::{extract_regex, pattern_sources, REGEX_CONTEXT, REGEX_NAMES};
pub use resources::{
    parse_term_list, GazetteerSet, Resources, SemanticFlags, SemanticLexicon, TemporalLexicon,
    GAZETTEER_NAMES, SEMANTIC_FLAGS, TEMPORAL_LISTS,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("unknown feature family `{0}`")]
    UnknownFamily(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("missing resource: {0}")]
    MissingResource(String),
    #[error("{0}")]
    Io(String),
    #[error("{source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("feature schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    Ehr,
    Morphological,
    Semantic,
    Temporal,
    Gazetteer,
    Regex,
}

pub const EHR_NAMES: [&str; 4] = [
    "patient_first_name",
    "patient_last_name",
    "doctor_first_name",
    "doctor_last_name",
];

pub const MORPHOLOGICAL_NAMES: [&str; 10] = [
    "ends_with_s",
    "first_letter_capitalized",
    "contains_digit",
    "is_numeric",
    "is_alphabetic",
    "is_alphanumeric",
    "is_title_case",
    "is_all_lower",
    "is_all_upper",
    "is_stop_word",
];

pub const SEMANTIC_NAMES: [&str; 5] = [
    "has_person_hypernym",
    "has_location_hypernym",
    "has_organization_hypernym",
    "is_polysemous",
    "is_known_lemma",
];

pub const TEMPORAL_NAMES: [&str; 12] = [
    "season",
    "month",
    "weekday",
    "time_of_day",
    "year",
    "year_with_apostrophe",
    "festivity",
    "holiday",
    "cardinal_number",
    "decade",
    "fuzzy_quantifier",
    "future_trigger",
];

impl FeatureFamily {
    /// Canonical order.
    pub const ALL: [FeatureFamily; 6] = [
        FeatureFamily::Ehr,
        FeatureFamily::Morphological,
        FeatureFamily::Semantic,
        FeatureFamily::Temporal,
        FeatureFamily::Gazetteer,
        FeatureFamily::Regex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureFamily::Ehr => "ehr",
            FeatureFamily::Morphological => "morphological",
            FeatureFamily::Semantic => "semantic",
            FeatureFamily::Temporal => "temporal",
            FeatureFamily::Gazetteer => "gazetteer",
            FeatureFamily::Regex => "regex",
        }
    }

    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            FeatureFamily::Ehr => &EHR_NAMES,
            FeatureFamily::Morphological => &MORPHOLOGICAL_NAMES,
            FeatureFamily::Semantic => &SEMANTIC_NAMES,
            FeatureFamily::Temporal => &TEMPORAL_NAMES,
            FeatureFamily::Gazetteer => &GAZETTEER_NAMES,
            FeatureFamily::Regex => &REGEX_NAMES,
        }
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureFamily {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        FeatureFamily::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| FeatureError::UnknownFamily(s.to_string()))
    }
}

/// Which families to compute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureConfig {
    None,
    EhrOnly,
    All,
    Families(Vec<String>),
}

impl FromStr for FeatureConfig {
    type Err = FeatureError;

    /// `none`, `ehr_only`, `all`, or a comma-separated family list.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "none" => FeatureConfig::None,
            "ehr_only" | "ehr-only" => FeatureConfig::EhrOnly,
            "all" => FeatureConfig::All,
            other => {
                let fams: Vec<String> = other.split(',').map(|f| f.trim().to_string()).collect();
                for f in &fams {
                    f.parse::<FeatureFamily>()?;
                }
                FeatureConfig::Families(fams)
            }
        })
    }
}

impl fmt::Display for FeatureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureConfig::None => f.write_str("none"),
            FeatureConfig::EhrOnly => f.write_str("ehr_only"),
            FeatureConfig::All => f.write_str("all"),
            FeatureConfig::Families(v) => f.write_str(&v.join(",")),
        }
    }
}

/// Ordered feature catalog: families in canonical order, each contributing
/// its names as `family.feature`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    families: Vec<FeatureFamily>,
    names: Vec<String>,
}

impl FeatureSchema {
    pub fn from_families(families: &[FeatureFamily]) -> Self {
        let families: Vec<FeatureFamily> = FeatureFamily::ALL
            .into_iter()
            .filter(|f| families.contains(f))
            .collect();
        let names = families
            .iter()
            .flat_map(|f| f.feature_names().iter().map(move |n| format!("{f}.{n}")))
            .collect();
        FeatureSchema { families, names }
    }

    /// The named features only, kept in this schema's order. Families with
    /// no surviving feature are dropped.
    pub fn subset(&self, names: &[&str]) -> Result<Self, FeatureError> {
        if let Some(bad) = names.iter().find(|n| self.position(n).is_none()) {
            return Err(FeatureError::UnknownFeature(bad.to_string()));
        }
        let names: Vec<String> = self
            .names
            .iter()
            .filter(|n| names.contains(&n.as_str()))
            .cloned()
            .collect();
        let families = self
            .families
            .iter()
            .copied()
            .filter(|f| names.iter().any(|n| n.split('.').next() == Some(f.name())))
            .collect();
        Ok(FeatureSchema { families, names })
    }

    pub fn families(&self) -> &[FeatureFamily] {
        &self.families
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, family: FeatureFamily) -> bool {
        self.families.contains(&family)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Hex SHA-256 of the newline-joined feature names.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.names.join("\n").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn build_schema(config: &FeatureConfig) -> Result<FeatureSchema, FeatureError> {
    let families = match config {
        FeatureConfig::None => vec![],
        FeatureConfig::EhrOnly => vec![FeatureFamily::Ehr],
        FeatureConfig::All => FeatureFamily::ALL.to_vec(),
        FeatureConfig::Families(names) => names
            .iter()
            .map(|n| n.parse())
            .collect::<Result<Vec<_>, _>>()?,
    };
    Ok(FeatureSchema::from_families(&families))
}

/// One token's bits in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector(pub Vec<bool>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn fired<'s>(&self, schema: &'s FeatureSchema) -> Vec<&'s str> {
        self.0
            .iter()
            .zip(schema.names())
            .filter(|(b, _)| **b)
            .map(|(_, n)| n.as_str())
            .collect()
    }
}

fn eq_fold(a: &str, b: &str) -> bool {
    a.to_lowercase() == b.to_lowercase()
}

pub fn extract_ehr(surface: &str, meta: &EhrMetadata) -> [bool; 4] {
    [
        eq_fold(surface, &meta.patient_first_name),
        eq_fold(surface, &meta.patient_last_name),
        meta.doctor_first_names.iter().any(|n| eq_fold(surface, n)),
        meta.doctor_last_names.iter().any(|n| eq_fold(surface, n)),
    ]
}

fn has_cased(s: &str) -> bool {
    s.chars().any(|c| c.is_lowercase() || c.is_uppercase())
}

pub fn extract_morphological(
    surface: &str,
    stopwords: &std::collections::HashSet<String>,
) -> [bool; 10] {
    let nonempty = !surface.is_empty();
    let mut chars = surface.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    let rest_not_upper = chars.all(|c| !c.is_uppercase());
    [
        surface.ends_with('s'),
        first_upper,
        surface.chars().any(|c| c.is_numeric()),
        nonempty && surface.chars().all(char::is_numeric),
        nonempty && surface.chars().all(char::is_alphabetic),
        nonempty && surface.chars().all(char::is_alphanumeric),
        first_upper && rest_not_upper,
        has_cased(surface) && !surface.chars().any(char::is_uppercase),
        has_cased(surface) && !surface.chars().any(char::is_lowercase),
        stopwords.contains(&surface.to_lowercase()),
    ]
}

pub fn extract_semantic(surface: &str, lex: &SemanticLexicon) -> [bool; 5] {
    match lex.get(surface) {
        Some(f) => [
            f.person_hypernym,
            f.location_hypernym,
            f.organization_hypernym,
            f.polysemous,
            true,
        ],
        None => [false; 5],
    }
}

fn is_year(s: &str) -> bool {
    s.len() == 4
        && s.bytes().all(|b| b.is_ascii_digit())
        && (1900..=2099).contains(&s.parse::<u32>().unwrap_or(0))
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_year_with_apostrophe(chunk: &str) -> bool {
    let mut it = chunk.chars();
    it.next().is_some_and(is_apostrophe)
        && it.clone().count() == 2
        && it.all(|c| c.is_ascii_digit())
}

fn is_decade(chunk: &str) -> bool {
    let Some(body) = chunk.strip_suffix('s') else {
        return false;
    };
    let body = body.strip_suffix(is_apostrophe).unwrap_or(body);
    let digits = body.strip_prefix(is_apostrophe).unwrap_or(body);
    let all_digits = !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit());
    let ends_zero = digits.ends_with('0');
    match digits.len() {
        2 => all_digits && ends_zero,
        4 => all_digits && ends_zero && is_year(digits) && body == digits,
        _ => false,
    }
}

/// `surface` is the token; `chunk` is the whitespace-delimited piece of text
/// containing it with outer punctuation trimmed, so that `'90s`, split into
/// three tokens, is still recognized on each of them.
pub fn extract_temporal(surface: &str, chunk: &str, lex: &TemporalLexicon) -> [bool; 12] {
    let cardinal = (!surface.is_empty() && surface.bytes().all(|b| b.is_ascii_digit()))
        || lex.contains("number_words", surface);
    [
        lex.contains("seasons", surface),
        lex.contains("months", surface),
        lex.contains("weekdays", surface),
        lex.contains("times_of_day", surface),
        is_year(surface),
        is_year_with_apostrophe(chunk),
        lex.contains("festivities", surface),
        lex.contains("holidays", surface),
        cardinal,
        is_decade(chunk),
        lex.contains("fuzzy_quantifiers", surface),
        lex.contains("future_triggers", surface),
    ]
}

pub fn extract_gazetteer(surface: &str, gaz: &GazetteerSet) -> [bool; 14] {
    GAZETTEER_NAMES.map(|set| gaz.contains(set, surface))
}

/// The whitespace-delimited piece of `text` around a token, without outer
/// brackets, quotes and sentence punctuation. A token that is itself such
/// trimmed punctuation gets its own surface back.
pub fn token_chunk<'t>(token: &Token, text: &'t str, bounds: &[usize]) -> &'t str {
    let (bs, be) = (bounds[token.start], bounds[token.end]);
    let start = text[..bs]
        .rfind(char::is_whitespace)
        .map(|i| i + text[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let end = text[be..]
        .find(char::is_whitespace)
        .map(|i| be + i)
        .unwrap_or(text.len());
    let piece = &text[start..end];
    let head = piece.trim_start_matches(['(', '[', '"']);
    let core = head.trim_end_matches(['.', ',', ';', ':', '!', '?', ')', ']', '"']);
    let core_start = start + (piece.len() - head.len());
    if bs < core_start || be > core_start + core.len() {
        return &text[bs..be];
    }
    core
}

/// Feature vectors for every token of `seq`, whose offsets index `text`.
pub fn extract_all(
    seq: &Sequence,
    text: &str,
    meta: &EhrMetadata,
    schema: &FeatureSchema,
    resources: &Resources,
) -> Result<Vec<FeatureVector>, FeatureError> {
    let missing = |what: &str| FeatureError::MissingResource(what.to_string());
    let mut rows: Vec<Vec<bool>> = vec![Vec::with_capacity(schema.len()); seq.len()];
    let bounds = char_boundaries(text);
    for &family in schema.families() {
        match family {
            FeatureFamily::Ehr => {
                for (row, t) in rows.iter_mut().zip(&seq.tokens) {
                    row.extend(extract_ehr(&t.surface, meta));
                }
            }
            FeatureFamily::Morphological => {
                let stop = resources.stopwords.as_ref().ok_or_else(|| missing("stop words"))?;
                for (row, t) in rows.iter_mut().zip(&seq.tokens) {
                    row.extend(extract_morphological(&t.surface, stop));
                }
            }
            FeatureFamily::Semantic => {
                let lex = resources
                    .semantic
                    .as_ref()
                    .ok_or_else(|| missing("semantic lexicon"))?;
                for (row, t) in rows.iter_mut().zip(&seq.tokens) {
                    row.extend(extract_semantic(&t.surface, lex));
                }
            }
            FeatureFamily::Temporal => {
                let lex = resources
                    .temporal
                    .as_ref()
                    .ok_or_else(|| missing("temporal lexicon"))?;
                for (row, t) in rows.iter_mut().zip(&seq.tokens) {
                    let chunk = token_chunk(t, text, &bounds);
                    row.extend(extract_temporal(&t.surface, chunk, lex));
                }
            }
            FeatureFamily::Gazetteer => {
                let gaz = resources
                    .gazetteers
                    .as_ref()
                    .ok_or_else(|| missing("gazetteers"))?;
                for (row, t) in rows.iter_mut().zip(&seq.tokens) {
                    row.extend(extract_gazetteer(&t.surface, gaz));
                }
            }
            FeatureFamily::Regex => {
                for (row, bits) in rows.iter_mut().zip(extract_regex(&seq.tokens, text)) {
                    row.extend(bits);
                }
            }
        }
    }
    let full = FeatureSchema::from_families(schema.families());
    if full.names != schema.names {
        let keep: Vec<usize> = schema
            .names
            .iter()
            .map(|n| full.position(n).expect("subset of its families"))
            .collect();
        for row in &mut rows {
            *row = keep.iter().map(|&i| row[i]).collect();
        }
    }
    Ok(rows.into_iter().map(FeatureVector).collect())
}

/// `surface<TAB>fired,names` per token, blank line between sequences.
pub fn format_feature_dump(
    seqs: &[Sequence],
    vectors: &[Vec<FeatureVector>],
    schema: &FeatureSchema,
) -> String {
    let mut out = String::new();
    for (seq, vecs) in seqs.iter().zip(vectors) {
        for (t, v) in seq.tokens.iter().zip(vecs) {
            out.push_str(&t.surface);
            out.push('\t');
            out.push_str(&v.fired(schema).join(","));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::sequences;
    use proptest::prelude::*;

    fn meta() -> EhrMetadata {
        EhrMetadata {
            patient_first_name: "John".into(),
            patient_last_name: "Doe".into(),
            doctor_first_names: vec!["Amy".into()],
            doctor_last_names: vec!["Smith".into(), "Lee".into()],
        }
    }

    fn bit(schema: &FeatureSchema, v: &FeatureVector, name: &str) -> bool {
        v.0[schema.position(name).unwrap_or_else(|| panic!("no feature {name}"))]
    }

    #[test]
    fn schema_sizes() {
        assert_eq!(build_schema(&FeatureConfig::EhrOnly).unwrap().len(), 4);
        assert_eq!(build_schema(&FeatureConfig::None).unwrap().len(), 0);
        assert_eq!(build_schema(&FeatureConfig::All).unwrap().len(), 52);
        let fams = FeatureConfig::Families(vec!["regex".into(), "ehr".into()]);
        let s = build_schema(&fams).unwrap();
        assert_eq!(s.families(), [FeatureFamily::Ehr, FeatureFamily::Regex]);
        assert_eq!(s.len(), 11);
    }

    #[test]
    fn subset_projects_extraction() {
        let full = build_schema(&FeatureConfig::All).unwrap();
        let sub = full
            .subset(&["regex.phone", "ehr.patient_last_name", "morphological.is_numeric"])
            .unwrap();
        assert_eq!(
            sub.names(),
            ["ehr.patient_last_name", "morphological.is_numeric", "regex.phone"]
        );
        assert_eq!(
            sub.families(),
            [FeatureFamily::Ehr, FeatureFamily::Morphological, FeatureFamily::Regex]
        );
        assert!(full.subset(&["ehr.nope"]).is_err());

        let text = "Mr Doe called 617-555-1234.";
        let meta = EhrMetadata {
            patient_last_name: "Doe".into(),
            ..EhrMetadata::default()
        };
        let seq = &sequences("d", text, 250)[0];
        let r = Resources::builtin();
        let whole = extract_all(seq, text, &meta, &full, &r).unwrap();
        let part = extract_all(seq, text, &meta, &sub, &r).unwrap();
        for (w, p) in whole.iter().zip(&part) {
            let expect: Vec<bool> = sub.names().iter().map(|n| bit(&full, w, n)).collect();
            assert_eq!(p.0, expect);
        }
        assert!(part[1].0[0]);
    }

    #[test]
    fn unknown_family_is_error() {
        let cfg = FeatureConfig::Families(vec!["wordnet".into()]);
        assert_eq!(
            build_schema(&cfg),
            Err(FeatureError::UnknownFamily("wordnet".into()))
        );
        assert!("ehr,bogus".parse::<FeatureConfig>().is_err());
        assert_eq!("all".parse::<FeatureConfig>().unwrap(), FeatureConfig::All);
    }

    #[test]
    fn schema_round_trip_and_hash() {
        let s = build_schema(&FeatureConfig::All).unwrap();
        let back: FeatureSchema = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
        assert_ne!(s.hash(), build_schema(&FeatureConfig::EhrOnly).unwrap().hash());
        assert_eq!(s.names()[0], "ehr.patient_first_name");
        assert_eq!(s.names()[51], "regex.medical_record_number");
    }

    #[test]
    fn ehr_bits() {
        let m = meta();
        assert_eq!(extract_ehr("john", &m), [true, false, false, false]);
        assert_eq!(extract_ehr("Johnson", &m), [false; 4]);
        assert_eq!(extract_ehr("Smith", &m), [false, false, false, true]);
        assert_eq!(extract_ehr("LEE", &m), [false, false, false, true]);
    }

    #[test]
    fn morphological_bits() {
        let stop = parse_term_list("the\n");
        let names = |s: &str| -> Vec<&str> {
            extract_morphological(s, &stop)
                .iter()
                .zip(MORPHOLOGICAL_NAMES)
                .filter(|(b, _)| **b)
                .map(|(_, n)| n)
                .collect()
        };
        assert_eq!(
            names("Notes"),
            [
                "ends_with_s",
                "first_letter_capitalized",
                "is_alphabetic",
                "is_alphanumeric",
                "is_title_case"
            ]
        );
        let a1c = names("A1c");
        assert!(a1c.contains(&"contains_digit") && a1c.contains(&"is_alphanumeric"));
        assert!(!a1c.contains(&"is_numeric"));
        assert_eq!(
            names("the"),
            ["is_alphabetic", "is_alphanumeric", "is_all_lower", "is_stop_word"]
        );
        assert!(names("MGH").contains(&"is_all_upper"));
        assert!(!names("MGH").contains(&"is_title_case"));
        assert!(names("-").is_empty());
    }

    #[test]
    fn temporal_bits() {
        let lex = Resources::builtin().temporal.unwrap();
        let on = |surface: &str, chunk: &str| -> Vec<&str> {
            extract_temporal(surface, chunk, &lex)
                .iter()
                .zip(TEMPORAL_NAMES)
                .filter(|(b, _)| **b)
                .map(|(_, n)| n)
                .collect()
        };
        assert_eq!(on("January", "January"), ["month"]);
        assert_eq!(on("2014", "2014"), ["year", "cardinal_number"]);
        assert_eq!(on("1850", "1850"), ["cardinal_number"]);
        assert_eq!(on("tomorrow", "tomorrow"), ["future_trigger"]);
        assert_eq!(on("90", "'90"), ["year_with_apostrophe", "cardinal_number"]);
        assert!(on("s", "'90s").contains(&"decade"));
        assert!(on("1990", "1990s").contains(&"decade"));
        assert!(!on("1995", "1995s").contains(&"decade"));
        assert_eq!(on("three", "three"), ["cardinal_number"]);
    }

    #[test]
    fn gazetteer_bits() {
        let gaz = Resources::builtin().gazetteers.unwrap();
        let idx = |n: &str| GAZETTEER_NAMES.iter().position(|g| *g == n).unwrap();
        assert!(extract_gazetteer("Boston", &gaz)[idx("us_cities")]);
        assert!(extract_gazetteer("Dr", &gaz)[idx("honorifics_doctor")]);
        assert!(extract_gazetteer("van", &gaz)[idx("last_name_prefixes")]);
    }

    #[test]
    fn semantic_bits() {
        let lex = SemanticLexicon::parse("nurse\tperson_hypernym\nbank\tpolysemous\n").unwrap();
        assert_eq!(extract_semantic("nurse", &lex), [true, false, false, false, true]);
        assert_eq!(extract_semantic("Bank", &lex)[3], true);
        assert_eq!(extract_semantic("zzz", &lex), [false; 5]);
        assert_eq!(extract_semantic("zzz", &SemanticLexicon::default()), [false; 5]);
    }

    #[test]
    fn chunk_trimming() {
        let text = "in the ('90s), then";
        let toks = crate::tokenizer::tokenize(text);
        let b = char_boundaries(text);
        let s = toks.iter().find(|t| t.surface == "s").unwrap();
        assert_eq!(token_chunk(s, text, &b), "'90s");
        assert_eq!(token_chunk(&toks[0], text, &b), "in");
        let close = toks.iter().find(|t| t.surface == ")").unwrap();
        assert_eq!(token_chunk(close, text, &b), ")");
        let open = toks.iter().find(|t| t.surface == "(").unwrap();
        assert_eq!(token_chunk(open, text, &b), "(");
    }

    #[test]
    fn extract_all_modes() {
        let text = "Mr Doe called 617-555-1234.";
        let seq = &sequences("d", text, 250)[0];
        let r = Resources::builtin();
        let none = build_schema(&FeatureConfig::None).unwrap();
        let v = extract_all(seq, text, &meta(), &none, &r).unwrap();
        assert!(v.iter().all(FeatureVector::is_empty));
        let ehr = build_schema(&FeatureConfig::EhrOnly).unwrap();
        let v = extract_all(seq, text, &meta(), &ehr, &r).unwrap();
        assert_eq!(v[1].0, [false, true, false, false]);
        assert_eq!(v[0].0, [false; 4]);
        let all = build_schema(&FeatureConfig::All).unwrap();
        let v = extract_all(seq, text, &meta(), &all, &r).unwrap();
        assert!(bit(&all, &v[3], "regex.phone"));
        assert!(!bit(&all, &v[8], "regex.phone"));
        assert!(bit(&all, &v[0], "gazetteer.honorifics"));
    }

    #[test]
    fn missing_resource_for_scheduled_family() {
        let text = "hello";
        let seq = &sequences("d", text, 250)[0];
        let schema = build_schema(&FeatureConfig::All).unwrap();
        let err = extract_all(seq, text, &meta(), &schema, &Resources::default()).unwrap_err();
        assert!(matches!(err, FeatureError::MissingResource(_)));
        let only = build_schema(&FeatureConfig::Families(vec!["ehr".into(), "regex".into()])).unwrap();
        assert!(extract_all(seq, text, &meta(), &only, &Resources::default()).is_ok());
    }

    #[test]
    fn dump_format() {
        let text = "Doe";
        let seqs = sequences("d", text, 250);
        let schema = build_schema(&FeatureConfig::EhrOnly).unwrap();
        let vecs = vec![extract_all(&seqs[0], text, &meta(), &schema, &Resources::default()).unwrap()];
        assert_eq!(
            format_feature_dump(&seqs, &vecs, &schema),
            "Doe\tehr.patient_last_name\n\n"
        );
    }

    fn subset(mask: u8) -> Vec<FeatureFamily> {
        FeatureFamily::ALL
            .into_iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, f)| f)
            .collect()
    }

    proptest! {
        #[test]
        fn family_isolation(mask in 0u8..64, drop in 0usize..6,
                            text in "[A-Za-z0-9 ,./'-]{1,60}") {
            let r = Resources::builtin();
            let full = FeatureSchema::from_families(&subset(mask | (1 << drop)));
            let less = FeatureSchema::from_families(&subset(mask & !(1 << drop)));
            for seq in sequences("d", &text, 250) {
                let a = extract_all(&seq, &text, &meta(), &full, &r).unwrap();
                let b = extract_all(&seq, &text, &meta(), &less, &r).unwrap();
                for (va, vb) in a.iter().zip(&b) {
                    for (k, name) in less.names().iter().enumerate() {
                        prop_assert_eq!(vb.0[k], va.0[full.position(name).unwrap()]);
                    }
                }
            }
        }

        #[test]
        fn case_insensitive_gazetteer_and_ehr(word in "[a-z]{1,10}") {
            let r = Resources::builtin();
            let g = r.gazetteers.as_ref().unwrap();
            let upper = word.to_uppercase();
            prop_assert_eq!(extract_gazetteer(&word, g), extract_gazetteer(&upper, g));
            prop_assert_eq!(extract_ehr(&word, &meta()), extract_ehr(&upper, &meta()));
        }
    }
}
