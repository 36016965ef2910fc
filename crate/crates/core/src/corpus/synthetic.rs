//! Template-driven generator of discharge-summary-like notes.
//!
//! Templates and value pools live in plain text files (see `resources/`).
//! Slots are written `{NAME}`; the recognised names are listed on [`Slot`].

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Annotation, CorpusError, Document, EhrMetadata, PhiType};
use crate::nn::Rng;

macro_rules! builtin {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/resources/", $name))
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    PatientFirst,
    PatientLast,
    PatientName,
    DoctorFirst,
    DoctorLast,
    DoctorName,
    Date,
    Phone,
    Zip,
    Id,
    Age,
    Hospital,
    Location,
    State,
    Street,
    Country,
    /// An age below 90; not PHI.
    YoungAge,
}

impl Slot {
    fn parse(name: &str) -> Option<Slot> {
        Some(match name {
            "PATIENT_FIRST" => Slot::PatientFirst,
            "PATIENT_LAST" => Slot::PatientLast,
            "PATIENT_NAME" => Slot::PatientName,
            "DOCTOR_FIRST" => Slot::DoctorFirst,
            "DOCTOR_LAST" => Slot::DoctorLast,
            "DOCTOR_NAME" => Slot::DoctorName,
            "DATE" => Slot::Date,
            "PHONE" => Slot::Phone,
            "ZIP" => Slot::Zip,
            "ID" => Slot::Id,
            "AGE" => Slot::Age,
            "HOSPITAL" => Slot::Hospital,
            "LOCATION" => Slot::Location,
            "STATE" => Slot::State,
            "STREET" => Slot::Street,
            "COUNTRY" => Slot::Country,
            "YOUNG_AGE" => Slot::YoungAge,
            _ => return None,
        })
    }

    pub fn phi_type(self) -> Option<PhiType> {
        Some(match self {
            Slot::PatientFirst | Slot::PatientLast | Slot::PatientName => PhiType::Patient,
            Slot::DoctorFirst | Slot::DoctorLast | Slot::DoctorName => PhiType::Doctor,
            Slot::Date => PhiType::Date,
            Slot::Phone => PhiType::Phone,
            Slot::Zip => PhiType::Zip,
            Slot::Id => PhiType::Id,
            Slot::Age => PhiType::Age,
            Slot::Hospital => PhiType::Hospital,
            Slot::Location => PhiType::Location,
            Slot::State => PhiType::State,
            Slot::Street => PhiType::Street,
            Slot::Country => PhiType::Country,
            Slot::YoungAge => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq)]
struct Template {
    pieces: Vec<Piece>,
}

impl Template {
    fn parse(src: &str) -> Result<Self, CorpusError> {
        let mut pieces = Vec::new();
        let mut rest = src;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_string()));
            }
            let close = rest[open..].find('}').ok_or_else(|| {
                CorpusError::Generator(format!("unclosed slot in template `{src}`"))
            })? + open;
            let name = &rest[open + 1..close];
            let slot = Slot::parse(name)
                .ok_or_else(|| CorpusError::Generator(format!("unknown slot `{{{name}}}`")))?;
            pieces.push(Piece::Slot(slot));
            rest = &rest[close + 1..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }
        Ok(Template { pieces })
    }

    fn phi_types(&self) -> impl Iterator<Item = PhiType> + '_ {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => s.phi_type(),
            Piece::Text(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ValuePools {
    first_names: Vec<String>,
    last_names: Vec<String>,
    hospitals: Vec<String>,
    cities: Vec<String>,
    states: Vec<String>,
    countries: Vec<String>,
    street_names: Vec<String>,
    street_suffixes: Vec<String>,
}

/// Header templates, section headings, sentence templates and value pools.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank {
    headers: Vec<Template>,
    sections: Vec<String>,
    sentences: Vec<Template>,
    values: ValuePools,
}

fn lines(content: &str) -> Vec<String> {
    content
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

impl TemplateBank {
    /// The bank shipped in `resources/`.
    pub fn builtin() -> Self {
        Self::from_sources(|name| {
            Ok(match name {
                "templates/headers.txt" => builtin!("templates/headers.txt"),
                "templates/sections.txt" => builtin!("templates/sections.txt"),
                "templates/sentences.txt" => builtin!("templates/sentences.txt"),
                "values/first_names.txt" => builtin!("values/first_names.txt"),
                "values/last_names.txt" => builtin!("values/last_names.txt"),
                "values/hospitals.txt" => builtin!("values/hospitals.txt"),
                "values/cities.txt" => builtin!("values/cities.txt"),
                "values/states.txt" => builtin!("values/states.txt"),
                "values/countries.txt" => builtin!("values/countries.txt"),
                "values/street_names.txt" => builtin!("values/street_names.txt"),
                "values/street_suffixes.txt" => builtin!("values/street_suffixes.txt"),
                other => unreachable!("no builtin resource {other}"),
            }
            .to_string())
        })
        .expect("builtin templates are valid")
    }

    /// Load from a resource root holding `templates/` and `values/`.
    pub fn from_dir(root: &Path) -> Result<Self, CorpusError> {
        Self::from_sources(|name| {
            let path = root.join(name);
            fs::read_to_string(&path).map_err(|source| CorpusError::Io { path, source })
        })
    }

    fn from_sources<F>(read: F) -> Result<Self, CorpusError>
    where
        F: Fn(&str) -> Result<String, CorpusError>,
    {
        let header_src = read("templates/headers.txt")?;
        let mut headers = Vec::new();
        let mut block = Vec::new();
        for line in header_src.lines().filter(|l| !l.starts_with('#')) {
            if line.trim() == "---" {
                if !block.is_empty() {
                    headers.push(Template::parse(&block.join("\n"))?);
                    block.clear();
                }
            } else if !line.trim().is_empty() {
                block.push(line.trim_end());
            }
        }
        if !block.is_empty() {
            headers.push(Template::parse(&block.join("\n"))?);
        }
        let sentences = lines(&read("templates/sentences.txt")?)
            .iter()
            .map(|l| Template::parse(l))
            .collect::<Result<Vec<_>, _>>()?;
        let pool = |name: &str| -> Result<Vec<String>, CorpusError> {
            let v = lines(&read(name)?);
            if v.is_empty() {
                return Err(CorpusError::Generator(format!("{name} is empty")));
            }
            Ok(v)
        };
        let bank = TemplateBank {
            headers,
            sections: lines(&read("templates/sections.txt")?),
            sentences,
            values: ValuePools {
                first_names: pool("values/first_names.txt")?,
                last_names: pool("values/last_names.txt")?,
                hospitals: pool("values/hospitals.txt")?,
                cities: pool("values/cities.txt")?,
                states: pool("values/states.txt")?,
                countries: pool("values/countries.txt")?,
                street_names: pool("values/street_names.txt")?,
                street_suffixes: pool("values/street_suffixes.txt")?,
            },
        };
        if bank.headers.is_empty() || bank.sections.is_empty() {
            return Err(CorpusError::Generator("no header or section templates".into()));
        }
        for t in PhiType::ALL {
            if !bank.sentences.iter().any(|s| s.phi_types().any(|p| p == t)) {
                return Err(CorpusError::Generator(format!(
                    "no sentence template injects {t}"
                )));
            }
        }
        if !bank.sentences.iter().any(|s| s.phi_types().next().is_none()) {
            return Err(CorpusError::Generator("no plain sentence templates".into()));
        }
        Ok(bank)
    }
}

/// Knobs for the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenProfile {
    /// Relative frequency with which a PHI-bearing sentence targets each type.
    pub type_weights: BTreeMap<PhiType, f64>,
    /// Probability that a body sentence carries no PHI slot.
    pub plain_sentence_rate: f64,
    pub sections_per_note: (usize, usize),
    pub sentences_per_section: (usize, usize),
    /// Doctors listed in the EHR sidecar beyond those named in the note.
    pub extra_doctors: usize,
    /// Force one sentence targeting type `doc_index % 12` into every note,
    /// so each type gets at least `n_docs / 12` injections.
    pub type_quota: bool,
}

impl Default for GenProfile {
    /// Type weights follow the per-type token support of the reference
    /// discharge-summary corpus (Date dominant, Country rarest).
    fn default() -> Self {
        let support = [
            (PhiType::Zip, 24.0),
            (PhiType::Date, 20627.0),
            (PhiType::Phone, 1438.0),
            (PhiType::Patient, 302.0),
            (PhiType::Id, 612.0),
            (PhiType::Doctor, 3676.0),
            (PhiType::Location, 462.0),
            (PhiType::Age, 28.0),
            (PhiType::Hospital, 1259.0),
            (PhiType::State, 67.0),
            (PhiType::Street, 61.0),
            (PhiType::Country, 16.0),
        ];
        GenProfile {
            type_weights: support.into_iter().collect(),
            plain_sentence_rate: 0.45,
            sections_per_note: (2, 3),
            sentences_per_section: (1, 3),
            extra_doctors: 3,
            type_quota: true,
        }
    }
}

struct NoteBuilder {
    text: String,
    chars: usize,
    annotations: Vec<Annotation>,
}

impl NoteBuilder {
    fn push_text(&mut self, s: &str) {
        self.text.push_str(s);
        self.chars += s.chars().count();
    }

    fn push_phi(&mut self, phi_type: PhiType, value: &str) {
        let start = self.chars;
        self.push_text(value);
        self.annotations.push(Annotation {
            phi_type,
            start,
            end: self.chars,
            surface: value.to_string(),
        });
    }
}

struct Person {
    first: String,
    last: String,
}

struct NoteContext<'a> {
    values: &'a ValuePools,
    patient: Person,
    doctors: Vec<Person>,
}

impl NoteContext<'_> {
    fn render(&self, t: &Template, out: &mut NoteBuilder, rng: &mut Rng) {
        // One doctor per template so first and last names agree.
        let doctor = &self.doctors[rng.below(self.doctors.len())];
        for piece in &t.pieces {
            match piece {
                Piece::Text(s) => out.push_text(s),
                Piece::Slot(slot) => {
                    let value = self.value(*slot, doctor, rng);
                    match slot.phi_type() {
                        Some(p) => out.push_phi(p, &value),
                        None => out.push_text(&value),
                    }
                }
            }
        }
    }

    fn value(&self, slot: Slot, doctor: &Person, rng: &mut Rng) -> String {
        let v = self.values;
        match slot {
            Slot::PatientFirst => self.patient.first.clone(),
            Slot::PatientLast => self.patient.last.clone(),
            Slot::PatientName => format!("{} {}", self.patient.first, self.patient.last),
            Slot::DoctorFirst => doctor.first.clone(),
            Slot::DoctorLast => doctor.last.clone(),
            Slot::DoctorName => format!("{} {}", doctor.first, doctor.last),
            Slot::Date => date(rng),
            Slot::Phone => phone(rng),
            Slot::Zip => {
                let z = format!("0{:04}", 1000 + rng.below(9000));
                if rng.below(5) == 0 {
                    format!("{z}-{:04}", rng.below(10_000))
                } else {
                    z
                }
            }
            Slot::Id => format!("{}", 100_000 + rng.below(99_900_000)),
            Slot::Age => format!("{}", 90 + rng.below(15)),
            Slot::YoungAge => format!("{}", 25 + rng.below(65)),
            Slot::Hospital => rng.choose(&v.hospitals).clone(),
            Slot::Location => rng.choose(&v.cities).clone(),
            Slot::State => rng.choose(&v.states).clone(),
            Slot::Country => rng.choose(&v.countries).clone(),
            Slot::Street => format!(
                "{} {} {}",
                1 + rng.below(998),
                rng.choose(&v.street_names),
                rng.choose(&v.street_suffixes)
            ),
        }
    }
}

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

fn date(rng: &mut Rng) -> String {
    let (y, m, d) = (2005 + rng.below(15), 1 + rng.below(12), 1 + rng.below(28));
    match rng.below(7) {
        0 | 1 => format!("{m}/{d}/{y}"),
        2 => format!("{m:02}/{d:02}/{y}"),
        3 => format!("{y}-{m:02}-{d:02}"),
        4 => format!("{} {d}, {y}", MONTHS[m - 1]),
        5 => format!("{d} {} {y}", MONTHS[m - 1]),
        _ => format!("{m}/{d}"),
    }
}

/// Mostly well-formed North American numbers, plus extensions and numbers
/// with a stray space that the phone pattern feature does not cover.
fn phone(rng: &mut Rng) -> String {
    let (a, b, c) = (
        200 + rng.below(800),
        200 + rng.below(800),
        rng.below(10_000),
    );
    match rng.below(20) {
        0..=10 => format!("{a}-{b}-{c:04}"),
        11..=13 => format!("({a}) {b}-{c:04}"),
        14..=15 => format!("{a}.{b}.{c:04}"),
        16..=17 => format!("{a}-{b}-{c:04} ext {}", 1000 + rng.below(9000)),
        _ => format!("{a}-{b}- {c:04}"),
    }
}

fn weighted_type(weights: &BTreeMap<PhiType, f64>, rng: &mut Rng) -> PhiType {
    let total: f64 = weights.values().sum();
    let mut x = rng.next_f64() * total;
    for (&t, &w) in weights {
        if x < w {
            return t;
        }
        x -= w;
    }
    *weights.keys().next_back().expect("nonempty weights")
}

fn new_person(values: &ValuePools, rng: &mut Rng) -> Person {
    Person {
        first: rng.choose(&values.first_names).clone(),
        last: rng.choose(&values.last_names).clone(),
    }
}

/// Generate `n_docs` notes with gold annotations and EHR sidecars. Fully
/// determined by `(n_docs, seed, profile, bank)`.
pub fn generate_synthetic_corpus(
    n_docs: usize,
    seed: u64,
    profile: &GenProfile,
    bank: &TemplateBank,
) -> Result<Vec<Document>, CorpusError> {
    if n_docs < 1 {
        return Err(CorpusError::Generator("n_docs must be at least 1".into()));
    }
    if profile.type_weights.is_empty() || profile.type_weights.values().any(|w| *w < 0.0) {
        return Err(CorpusError::Generator("type weights must be nonnegative and nonempty".into()));
    }
    let (smin, smax) = profile.sections_per_note;
    let (qmin, qmax) = profile.sentences_per_section;
    if smin == 0 || smin > smax || qmin == 0 || qmin > qmax {
        return Err(CorpusError::Generator("bad section/sentence ranges".into()));
    }

    let mut by_type: BTreeMap<PhiType, Vec<&Template>> = BTreeMap::new();
    let mut plain = Vec::new();
    for s in &bank.sentences {
        let types: Vec<PhiType> = s.phi_types().collect();
        if types.is_empty() {
            plain.push(s);
        }
        for t in types {
            let list = by_type.entry(t).or_default();
            if !list.iter().any(|x| std::ptr::eq(*x, s)) {
                list.push(s);
            }
        }
    }

    let mut master = Rng::new(seed);
    let mut docs = Vec::with_capacity(n_docs);
    for i in 0..n_docs {
        let mut rng = master.fork(i as u64);
        let values = &bank.values;
        let patient = new_person(values, &mut rng);
        let n_doctors = 1 + rng.below(3);
        let mut doctors: Vec<Person> = Vec::new();
        while doctors.len() < n_doctors {
            let d = new_person(values, &mut rng);
            let clash = d.last == patient.last
                || d.first == patient.first
                || doctors.iter().any(|o| o.last == d.last);
            if !clash {
                doctors.push(d);
            }
        }
        let ctx = NoteContext {
            values,
            patient,
            doctors,
        };
        let mut note = NoteBuilder {
            text: String::new(),
            chars: 0,
            annotations: Vec::new(),
        };
        ctx.render(rng.choose(&bank.headers), &mut note, &mut rng);

        let n_sections = smin + rng.below(smax - smin + 1);
        let mut forced = profile
            .type_quota
            .then(|| PhiType::ALL[i % PhiType::ALL.len()]);
        for _ in 0..n_sections {
            note.push_text("\n\n");
            note.push_text(rng.choose(&bank.sections));
            note.push_text("\n");
            let n_sent = qmin + rng.below(qmax - qmin + 1);
            for k in 0..n_sent {
                if k > 0 {
                    note.push_text(" ");
                }
                let target = match forced.take() {
                    Some(t) => Some(t),
                    None if rng.next_f64() < profile.plain_sentence_rate => None,
                    None => Some(weighted_type(&profile.type_weights, &mut rng)),
                };
                let template = match target {
                    Some(t) => *rng.choose(&by_type[&t]),
                    None => *rng.choose(&plain),
                };
                ctx.render(template, &mut note, &mut rng);
            }
        }
        note.push_text("\n");

        let mut doctor_first: Vec<String> = ctx.doctors.iter().map(|d| d.first.clone()).collect();
        let mut doctor_last: Vec<String> = ctx.doctors.iter().map(|d| d.last.clone()).collect();
        for _ in 0..profile.extra_doctors {
            let d = new_person(values, &mut rng);
            if d.last != ctx.patient.last && d.first != ctx.patient.first {
                doctor_first.push(d.first);
                doctor_last.push(d.last);
            }
        }
        dedup_in_order(&mut doctor_first);
        dedup_in_order(&mut doctor_last);
        let metadata = EhrMetadata {
            patient_first_name: ctx.patient.first.clone(),
            patient_last_name: ctx.patient.last.clone(),
            doctor_first_names: doctor_first,
            doctor_last_names: doctor_last,
        };
        docs.push(Document::new(
            format!("note-{i:05}"),
            note.text,
            note.annotations,
            metadata,
        )?);
    }
    Ok(docs)
}

fn dedup_in_order(v: &mut Vec<String>) {
    let mut seen = std::collections::HashSet::new();
    v.retain(|x| seen.insert(x.clone()));
}
