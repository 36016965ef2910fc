//! Gazetteers, temporal word lists, stop words and the semantic lexicon.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::FeatureError;

pub const GAZETTEER_NAMES: [&str; 14] = [
    "honorifics_doctor",
    "honorifics",
    "medical_specialists",
    "medical_specialties",
    "first_names",
    "last_names",
    "last_name_prefixes",
    "street_suffixes",
    "us_cities",
    "us_states_and_abbrevs",
    "countries",
    "nationalities",
    "organizations",
    "professions",
];

pub const TEMPORAL_LISTS: [&str; 9] = [
    "seasons",
    "months",
    "weekdays",
    "times_of_day",
    "festivities",
    "holidays",
    "fuzzy_quantifiers",
    "future_triggers",
    "number_words",
];

pub const SEMANTIC_FLAGS: [&str; 4] = [
    "person_hypernym",
    "location_hypernym",
    "organization_hypernym",
    "polysemous",
];

/// Parse a term list: one term per line, `#` starts a comment line, terms
/// are case-folded.
pub fn parse_term_list(content: &str) -> HashSet<String> {
    content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct GazetteerSet {
    sets: BTreeMap<String, HashSet<String>>,
}

impl GazetteerSet {
    /// Every name in [`GAZETTEER_NAMES`] must be present and nonempty.
    pub fn new(sets: BTreeMap<String, HashSet<String>>) -> Result<Self, FeatureError> {
        for name in GAZETTEER_NAMES {
            if sets.get(name).is_none_or(HashSet::is_empty) {
                return Err(FeatureError::MissingResource(format!("gazetteer {name}")));
            }
        }
        Ok(GazetteerSet { sets })
    }

    pub fn contains(&self, set: &str, term: &str) -> bool {
        self.sets
            .get(set)
            .is_some_and(|s| s.contains(&term.to_lowercase()))
    }

    pub fn set(&self, name: &str) -> Option<&HashSet<String>> {
        self.sets.get(name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TemporalLexicon {
    lists: BTreeMap<String, HashSet<String>>,
}

impl TemporalLexicon {
    pub fn new(lists: BTreeMap<String, HashSet<String>>) -> Result<Self, FeatureError> {
        for name in TEMPORAL_LISTS {
            if lists.get(name).is_none_or(HashSet::is_empty) {
                return Err(FeatureError::MissingResource(format!("temporal list {name}")));
            }
        }
        Ok(TemporalLexicon { lists })
    }

    pub fn contains(&self, list: &str, term: &str) -> bool {
        self.lists
            .get(list)
            .is_some_and(|s| s.contains(&term.to_lowercase()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SemanticFlags {
    pub person_hypernym: bool,
    pub location_hypernym: bool,
    pub organization_hypernym: bool,
    pub polysemous: bool,
}

/// Case-folded lemma to flags. Any entry, even one without flags, counts as
/// a known lemma.
#[derive(Debug, Clone, Default)]
pub struct SemanticLexicon {
    entries: HashMap<String, SemanticFlags>,
}

impl SemanticLexicon {
    pub fn parse(content: &str) -> Result<Self, FeatureError> {
        let mut entries = HashMap::new();
        for (n, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (lemma, flags) = line.split_once('\t').unwrap_or((line, ""));
            let mut f = SemanticFlags::default();
            for flag in flags.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match flag {
                    "person_hypernym" => f.person_hypernym = true,
                    "location_hypernym" => f.location_hypernym = true,
                    "organization_hypernym" => f.organization_hypernym = true,
                    "polysemous" => f.polysemous = true,
                    other => {
                        return Err(FeatureError::Parse {
                            source_name: "semantic lexicon".into(),
                            line: n + 1,
                            message: format!("unknown flag `{other}`"),
                        })
                    }
                }
            }
            entries.insert(lemma.trim().to_lowercase(), f);
        }
        Ok(SemanticLexicon { entries })
    }

    pub fn insert(&mut self, lemma: &str, flags: SemanticFlags) {
        self.entries.insert(lemma.to_lowercase(), flags);
    }

    pub fn get(&self, term: &str) -> Option<&SemanticFlags> {
        self.entries.get(&term.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Everything the extractors look up. A family whose resource is `None`
/// cannot be extracted.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub gazetteers: Option<GazetteerSet>,
    pub temporal: Option<TemporalLexicon>,
    pub semantic: Option<SemanticLexicon>,
    pub stopwords: Option<HashSet<String>>,
}

macro_rules! shipped {
    ($path:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/resources/", $path))
    };
}

const BUILTIN_GAZETTEERS: [(&str, &str); 14] = [
    ("honorifics_doctor", shipped!("gazetteers/honorifics_doctor.txt")),
    ("honorifics", shipped!("gazetteers/honorifics.txt")),
    ("medical_specialists", shipped!("gazetteers/medical_specialists.txt")),
    ("medical_specialties", shipped!("gazetteers/medical_specialties.txt")),
    ("first_names", shipped!("gazetteers/first_names.txt")),
    ("last_names", shipped!("gazetteers/last_names.txt")),
    ("last_name_prefixes", shipped!("gazetteers/last_name_prefixes.txt")),
    ("street_suffixes", shipped!("gazetteers/street_suffixes.txt")),
    ("us_cities", shipped!("gazetteers/us_cities.txt")),
    ("us_states_and_abbrevs", shipped!("gazetteers/us_states_and_abbrevs.txt")),
    ("countries", shipped!("gazetteers/countries.txt")),
    ("nationalities", shipped!("gazetteers/nationalities.txt")),
    ("organizations", shipped!("gazetteers/organizations.txt")),
    ("professions", shipped!("gazetteers/professions.txt")),
];

const BUILTIN_TEMPORAL: [(&str, &str); 9] = [
    ("seasons", shipped!("temporal/seasons.txt")),
    ("months", shipped!("temporal/months.txt")),
    ("weekdays", shipped!("temporal/weekdays.txt")),
    ("times_of_day", shipped!("temporal/times_of_day.txt")),
    ("festivities", shipped!("temporal/festivities.txt")),
    ("holidays", shipped!("temporal/holidays.txt")),
    ("fuzzy_quantifiers", shipped!("temporal/fuzzy_quantifiers.txt")),
    ("future_triggers", shipped!("temporal/future_triggers.txt")),
    ("number_words", shipped!("temporal/number_words.txt")),
];

const BUILTIN_STOPWORDS: &str = shipped!("stopwords.txt");
const BUILTIN_SEMANTIC: &str = shipped!("semantic_lexicon.tsv");

impl Resources {
    /// The resource files compiled into the library.
    pub fn builtin() -> Self {
        let gaz = BUILTIN_GAZETTEERS
            .iter()
            .map(|(n, c)| (n.to_string(), parse_term_list(c)))
            .collect();
        let tmp = BUILTIN_TEMPORAL
            .iter()
            .map(|(n, c)| (n.to_string(), parse_term_list(c)))
            .collect();
        Resources {
            gazetteers: Some(GazetteerSet::new(gaz).expect("shipped gazetteers are complete")),
            temporal: Some(TemporalLexicon::new(tmp).expect("shipped temporal lists are complete")),
            semantic: Some(SemanticLexicon::parse(BUILTIN_SEMANTIC).expect("shipped lexicon parses")),
            stopwords: Some(parse_term_list(BUILTIN_STOPWORDS)),
        }
    }

    /// Load from a directory laid out like the shipped `resources/` folder.
    /// Absent components stay `None`; a present but incomplete component is
    /// an error.
    pub fn from_dir(root: &Path) -> Result<Self, FeatureError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|e| FeatureError::Io(format!("{}: {e}", p.display())))
        };
        let lists = |dir: &Path, names: &[&str]| -> Result<_, FeatureError> {
            let mut out = BTreeMap::new();
            for name in names {
                let p = dir.join(format!("{name}.txt"));
                if p.exists() {
                    out.insert(name.to_string(), parse_term_list(&read(&p)?));
                }
            }
            Ok(out)
        };
        let gdir = root.join("gazetteers");
        let gazetteers = if gdir.is_dir() {
            Some(GazetteerSet::new(lists(&gdir, &GAZETTEER_NAMES)?)?)
        } else {
            None
        };
        let tdir = root.join("temporal");
        let temporal = if tdir.is_dir() {
            Some(TemporalLexicon::new(lists(&tdir, &TEMPORAL_LISTS)?)?)
        } else {
            None
        };
        let sp = root.join("semantic_lexicon.tsv");
        let semantic = if sp.exists() {
            Some(SemanticLexicon::parse(&read(&sp)?)?)
        } else {
            None
        };
        let wp = root.join("stopwords.txt");
        let stopwords = if wp.exists() {
            Some(parse_term_list(&read(&wp)?))
        } else {
            None
        };
        Ok(Resources {
            gazetteers,
            temporal,
            semantic,
            stopwords,
        })
    }

    /// `DEID_RESOURCES` if set, otherwise the builtin files.
    pub fn from_env() -> Result<Self, FeatureError> {
        match std::env::var_os("DEID_RESOURCES") {
            Some(dir) => Self::from_dir(Path::new(&dir)),
            None => Ok(Self::builtin()),
        }
    }
}
