//! The regular-expression features. Patterns run over the original text of
//! a window of consecutive tokens, so spacing inside a window is preserved.

use std::sync::OnceLock;

use regex::Regex;

use crate::corpus::char_boundaries;
use crate::tokenizer::Token;

/// Tokens per side of the focus token.
pub const REGEX_CONTEXT: usize = 3;

pub const REGEX_NAMES: [&str; 7] = [
    "email",
    "age",
    "date",
    "phone",
    "zip_code",
    "id_number",
    "medical_record_number",
];

const MONTH: &str = r"(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)";

/// Pattern sources in [`REGEX_NAMES`] order.
pub fn pattern_sources() -> [String; 7] {
    [
        r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}\b".to_string(),
        r"(?i)\b(?:age[ds]?\s*:?\s*\d{1,3}\b|\d{1,3}\s*-?\s*(?:years?|yrs?|y/?o)\b)".to_string(),
        format!(
            r"(?i)\b(?:\d{{1,2}}[/-]\d{{1,2}}(?:[/-](?:\d{{4}}|\d{{2}}))?|(?:19|20)\d{{2}}-\d{{1,2}}-\d{{1,2}}|{MONTH}\.?\s+\d{{1,2}}(?:st|nd|rd|th)?(?:,?\s+\d{{4}})?|\d{{1,2}}(?:st|nd|rd|th)?\s+{MONTH}\.?,?\s+\d{{4}}|{MONTH}\.?\s+(?:19|20)\d{{2}})\b"
        ),
        r"(?:\(\d{3}\)\s?|\b\d{3}[-.\s]?)\d{3}[-.]\d{4}\b".to_string(),
        r"\b\d{5}(?:-\d{4})?\b".to_string(),
        r"(?i)(?:\b(?:id|no|number|acct|account)\.?\s*[:#]?\s*)?\b[a-z]{0,3}\d{6,10}\b".to_string(),
        r"(?i)\b(?:mrn|mr#|unit\s+no\.?|medical\s+record(?:\s+(?:number|no\.?|#))?)\s*[:#]?\s*\d{5,10}\b"
            .to_string(),
    ]
}

pub(crate) fn compiled() -> &'static [Regex; 7] {
    static CELL: OnceLock<[Regex; 7]> = OnceLock::new();
    CELL.get_or_init(|| pattern_sources().map(|s| Regex::new(&s).expect("pattern compiles")))
}

/// Regex bits for every token of a sequence. A token fires a pattern when a
/// match found inside some window of `2 * REGEX_CONTEXT + 1` consecutive
/// tokens overlaps it.
pub fn extract_regex(tokens: &[Token], text: &str) -> Vec<[bool; 7]> {
    let mut out = vec![[false; 7]; tokens.len()];
    if tokens.is_empty() {
        return out;
    }
    let bounds = char_boundaries(text);
    let spans: Vec<(usize, usize)> = tokens
        .iter()
        .map(|t| (bounds[t.start], bounds[t.end]))
        .collect();
    let width = 2 * REGEX_CONTEXT + 1;
    let last_start = tokens.len().saturating_sub(width);
    for s in 0..=last_start {
        let e = (s + width).min(tokens.len());
        let base = spans[s].0;
        let window = &text[base..spans[e - 1].1];
        for (k, re) in compiled().iter().enumerate() {
            for m in re.find_iter(window) {
                let (ms, me) = (base + m.start(), base + m.end());
                for (i, &(ts, te)) in spans.iter().enumerate().take(e).skip(s) {
                    if ts < me && ms < te {
                        out[i][k] = true;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::tokenize;

    fn fired(text: &str, k: usize) -> Vec<String> {
        let toks = tokenize(text);
        extract_regex(&toks, text)
            .iter()
            .zip(&toks)
            .filter(|(b, _)| b[k])
            .map(|(_, t)| t.surface.clone())
            .collect()
    }

    const EMAIL: usize = 0;
    const AGE: usize = 1;
    const DATE: usize = 2;
    const PHONE: usize = 3;
    const ZIP: usize = 4;
    const ID: usize = 5;
    const MRN: usize = 6;

    #[test]
    fn phone_formats() {
        assert_eq!(fired("617-555-1234", PHONE).len(), 5);
        assert_eq!(fired("call (617) 555-1234 now", PHONE).len(), 6);
        assert_eq!(fired("617.555.1234", PHONE).len(), 5);
    }

    #[test]
    fn phone_excludes_extension_and_stray_space() {
        assert_eq!(
            fired("call 617-690-4031 ext 6599 today", PHONE),
            ["617", "-", "690", "-", "4031"]
        );
        assert!(fired("617-690- 4031", PHONE).is_empty());
    }

    #[test]
    fn phone_at_window_edges() {
        let text = "please page the covering resident at 617-555-1234 before noon";
        assert_eq!(fired(text, PHONE), ["617", "-", "555", "-", "1234"]);
    }

    #[test]
    fn zip_and_id() {
        assert_eq!(fired("02139", ZIP), ["02139"]);
        assert_eq!(fired("MA 02139-4307", ZIP), ["02139", "-", "4307"]);
        assert!(fired("021390", ZIP).is_empty());
        assert_eq!(fired("account 12345678", ID), ["account", "12345678"]);
        assert!(fired("12345", ID).is_empty());
    }

    #[test]
    fn mrn_needs_cue() {
        assert_eq!(fired("MRN: 1234567", MRN), ["MRN", ":", "1234567"]);
        assert!(fired("1234567", MRN).is_empty());
    }

    #[test]
    fn dates() {
        assert_eq!(fired("on 3/14/2012 he", DATE), ["3", "/", "14", "/", "2012"]);
        assert_eq!(fired("2012-03-14", DATE).len(), 5);
        assert_eq!(fired("March 14, 2012", DATE).len(), 4);
        assert_eq!(fired("14 March 2012", DATE).len(), 3);
        assert!(fired("bp 120/80", DATE).is_empty());
    }

    #[test]
    fn age_and_email() {
        assert_eq!(fired("a 93 year old", AGE), ["93", "year"]);
        assert_eq!(fired("aged 91", AGE), ["aged", "91"]);
        assert_eq!(
            fired("mail jo.lee@mgh.harvard.edu", EMAIL),
            ["jo", ".", "lee", "@", "mgh", ".", "harvard", ".", "edu"]
        );
    }

    #[test]
    fn empty_sequence() {
        assert!(extract_regex(&[], "").is_empty());
    }
}
