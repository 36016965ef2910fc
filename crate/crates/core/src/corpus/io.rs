use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::{Annotation, CorpusError, Document, EhrMetadata, PhiType};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Load every `<doc_id>.txt` in `dir` together with its two sidecars,
/// sorted by doc_id.
pub fn load_corpus(dir: &Path) -> Result<Vec<Document>, CorpusError> {
    text_ids(dir)?.iter().map(|id| load_document(dir, id)).collect()
}

/// Every `<doc_id>.txt` in `dir`, for tagging. `.meta.json` is read when
/// present (empty metadata otherwise); `.ann` files are ignored.
pub fn load_notes(dir: &Path) -> Result<Vec<Document>, CorpusError> {
    let mut out = Vec::new();
    for id in text_ids(dir)? {
        let txt = dir.join(format!("{id}.txt"));
        let meta = dir.join(format!("{id}.meta.json"));
        let text = fs::read_to_string(&txt).map_err(io_err(&txt))?;
        let metadata = if meta.exists() {
            let s = fs::read_to_string(&meta).map_err(io_err(&meta))?;
            serde_json::from_str(&s).map_err(|e| CorpusError::Metadata {
                doc_id: id.clone(),
                message: e.to_string(),
            })?
        } else {
            EhrMetadata::default()
        };
        // No annotations to check, and notes without sidecars are allowed.
        out.push(Document {
            doc_id: id,
            text,
            annotations: vec![],
            metadata,
        });
    }
    Ok(out)
}

fn text_ids(dir: &Path) -> Result<BTreeSet<String>, CorpusError> {
    let mut ids = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("txt") && path.is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.insert(stem.to_string());
            }
        }
    }
    Ok(ids)
}

pub fn load_document(dir: &Path, doc_id: &str) -> Result<Document, CorpusError> {
    let txt = dir.join(format!("{doc_id}.txt"));
    let ann = dir.join(format!("{doc_id}.ann"));
    let meta = dir.join(format!("{doc_id}.meta.json"));
    for p in [&ann, &meta] {
        if !p.exists() {
            return Err(CorpusError::MissingSidecar {
                doc_id: doc_id.to_string(),
                file: p.file_name().unwrap().to_string_lossy().into_owned(),
            });
        }
    }
    let text = fs::read_to_string(&txt).map_err(io_err(&txt))?;
    let ann_text = fs::read_to_string(&ann).map_err(io_err(&ann))?;
    let annotations = parse_annotations(doc_id, &ann_text)?;
    let meta_text = fs::read_to_string(&meta).map_err(io_err(&meta))?;
    let metadata: EhrMetadata =
        serde_json::from_str(&meta_text).map_err(|e| CorpusError::Metadata {
            doc_id: doc_id.to_string(),
            message: e.to_string(),
        })?;
    Document::new(doc_id, text, annotations, metadata)
}

pub fn parse_annotations(doc_id: &str, content: &str) -> Result<Vec<Annotation>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::Parse {
            doc_id: doc_id.to_string(),
            line: line_no,
            message,
        };
        let mut fields = line.splitn(4, '\t');
        let (Some(kind), Some(start), Some(end), Some(surface)) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(parse_err("expected 4 tab-separated fields".into()));
        };
        let phi_type = kind
            .parse::<PhiType>()
            .map_err(|name| CorpusError::UnknownPhiType {
                doc_id: doc_id.to_string(),
                line: line_no,
                name,
            })?;
        let start = start
            .parse()
            .map_err(|_| parse_err(format!("bad start offset `{start}`")))?;
        let end = end
            .parse()
            .map_err(|_| parse_err(format!("bad end offset `{end}`")))?;
        out.push(Annotation {
            phi_type,
            start,
            end,
            surface: surface.to_string(),
        });
    }
    Ok(out)
}

/// Standoff lines: `TYPE\tstart\tend\tsurface`.
pub fn format_annotations(annotations: &[Annotation]) -> String {
    annotations
        .iter()
        .map(|a| format!("{}\t{}\t{}\t{}\n", a.phi_type, a.start, a.end, a.surface))
        .collect()
}

pub fn write_document(dir: &Path, doc: &Document) -> Result<(), CorpusError> {
    for a in &doc.annotations {
        if a.surface.contains(['\t', '\n', '\r']) {
            return Err(CorpusError::Parse {
                doc_id: doc.doc_id.clone(),
                line: 0,
                message: format!("surface at {}..{} holds a tab or newline", a.start, a.end),
            });
        }
    }
    let write = |name: String, content: &str| {
        let path = dir.join(name);
        fs::write(&path, content).map_err(io_err(&path))
    };
    write(format!("{}.txt", doc.doc_id), &doc.text)?;
    write(
        format!("{}.ann", doc.doc_id),
        &format_annotations(&doc.annotations),
    )?;
    let mut meta = serde_json::to_string_pretty(&doc.metadata).expect("metadata serializes");
    meta.push('\n');
    write(format!("{}.meta.json", doc.doc_id), &meta)
}

pub fn write_corpus(dir: &Path, docs: &[Document]) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut seen = BTreeSet::new();
    for d in docs {
        if !seen.insert(&d.doc_id) {
            return Err(CorpusError::DuplicateDocId(d.doc_id.clone()));
        }
        write_document(dir, d)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str) -> Document {
        Document::new(
            id,
            "Pt: John Doe seen 3/4/2019.",
            vec![
                Annotation {
                    phi_type: PhiType::Patient,
                    start: 4,
                    end: 12,
                    surface: "John Doe".into(),
                },
                Annotation {
                    phi_type: PhiType::Date,
                    start: 18,
                    end: 26,
                    surface: "3/4/2019".into(),
                },
            ],
            EhrMetadata {
                patient_first_name: "John".into(),
                patient_last_name: "Doe".into(),
                doctor_first_names: vec!["Ann".into()],
                doctor_last_names: vec!["Lee".into()],
            },
        )
        .unwrap()
    }

    #[test]
    fn empty_directory_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_corpus(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn loads_sorted_by_doc_id() {
        let dir = tempfile::tempdir().unwrap();
        let docs = vec![sample("c"), sample("a"), sample("b")];
        for d in &docs {
            write_document(dir.path(), d).unwrap();
        }
        let loaded = load_corpus(dir.path()).unwrap();
        let ids: Vec<_> = loaded.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(loaded[0], sample("a"));
    }

    #[test]
    fn missing_sidecar_names_document() {
        let dir = tempfile::tempdir().unwrap();
        write_document(dir.path(), &sample("n1")).unwrap();
        fs::remove_file(dir.path().join("n1.meta.json")).unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(err.to_string().contains("n1"), "{err}");
        assert!(matches!(err, CorpusError::MissingSidecar { .. }));
    }

    #[test]
    fn unknown_type_and_bad_offsets() {
        assert!(matches!(
            parse_annotations("d", "Drug\t0\t3\tabc\n"),
            Err(CorpusError::UnknownPhiType { line: 1, .. })
        ));
        assert!(matches!(
            parse_annotations("d", "Date\tx\t3\tabc\n"),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_annotations("d", "Date\t0\t3\n"),
            Err(CorpusError::Parse { .. })
        ));
    }

    #[test]
    fn spec_surface_mismatch_example() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.txt"), "Pt: John Doe").unwrap();
        fs::write(dir.path().join("x.ann"), "Patient\t10\t14\tJohn\n").unwrap();
        fs::write(
            dir.path().join("x.meta.json"),
            r#"{"patient_first_name":"John","patient_last_name":"Doe","doctor_first_names":[],"doctor_last_names":[]}"#,
        )
        .unwrap();
        assert!(load_corpus(dir.path()).is_err());
    }

    #[test]
    fn rewrite_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_corpus(a.path(), &[sample("x"), sample("y")]).unwrap();
        let loaded = load_corpus(a.path()).unwrap();
        write_corpus(b.path(), &loaded).unwrap();
        for name in ["x.ann", "x.meta.json", "y.ann", "y.txt"] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap()
            );
        }
    }
}
