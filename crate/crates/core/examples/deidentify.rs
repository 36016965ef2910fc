//! Train a small tagger, then find and redact PHI in an unseen note.
//!
//! cargo run --release --example deidentify -- [n_docs] [max_epochs]

use deid::corpus::{generate_synthetic_corpus, split_corpus, EhrMetadata, GenProfile, TemplateBank, DEFAULT_FRACTIONS};
use deid::embedding::Config;
use deid::features::{build_schema, FeatureConfig, Resources};
use deid::pipeline::{annotate, redact};
use deid::training::{prepare, train, SelectionCriterion, TrainOptions};

const NOTE: &str = "Patient Maria Lopez, age 93, was admitted to Saint Anne Hospital on 04/12/2019 by Dr. Chen.\n\
MRN 5521907. Contact her daughter at (617) 555-0199.";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_docs: usize = args.first().map_or(Ok(300), |s| s.parse())?;
    let max_epochs: usize = args.get(1).map_or(Ok(5), |s| s.parse())?;

    let docs = generate_synthetic_corpus(n_docs, 3, &GenProfile::default(), &TemplateBank::builtin())?;
    let (tr, va, _) = split_corpus(&docs, DEFAULT_FRACTIONS, 3)?.partition(&docs)?;
    let schema = build_schema(&FeatureConfig::All)?;
    let resources = Resources::builtin();
    let config = Config { max_epochs, ..Config::default() };
    let train_set = prepare(&tr, &schema, &resources, config.max_sequence_length)?;
    let val_set = prepare(&va, &schema, &resources, config.max_sequence_length)?;
    let run = train(&TrainOptions::new(config), &schema, &train_set, &val_set)?;
    let model = run.model(SelectionCriterion::Recall);

    let meta = EhrMetadata {
        patient_first_name: "Maria".into(),
        patient_last_name: "Lopez".into(),
        doctor_first_names: vec![],
        doctor_last_names: vec!["Chen".into()],
    };
    let spans = annotate(model, "note", NOTE, &meta, &resources)?;
    for s in &spans {
        println!("{:>4}..{:<4} {:<12} {:?}", s.start, s.end, s.phi_type.name(), s.surface);
    }
    println!("\n{}", redact(NOTE, &spans));
    Ok(())
}
