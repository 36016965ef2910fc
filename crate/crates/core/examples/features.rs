//! Show which features fire on each token of a short note.
//!
//! cargo run --example features -- [all|none|ehr_only|family,family]

use deid::corpus::EhrMetadata;
use deid::features::{build_schema, extract_all, format_feature_dump, FeatureConfig, Resources};
use deid::tokenizer::sequences;

const NOTE: &str = "Mr. John Doe was seen by Dr. Moreno at Mercy Hospital on March 3, 2014.\n\
Call 617-555-0143 or email jdoe@example.org. Lives at 12 Oak Street, Boston, MA 02115.";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config: FeatureConfig = std::env::args().nth(1).map_or(Ok(FeatureConfig::All), |s| s.parse())?;
    let schema = build_schema(&config)?;
    let meta = EhrMetadata {
        patient_first_name: "John".into(),
        patient_last_name: "Doe".into(),
        doctor_first_names: vec!["Alice".into()],
        doctor_last_names: vec!["Moreno".into()],
    };
    let resources = Resources::builtin();
    let seqs = sequences("example", NOTE, 250);
    let vectors = seqs
        .iter()
        .map(|s| extract_all(s, NOTE, &meta, &schema, &resources))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{} features, schema hash {}", schema.len(), schema.hash());
    print!("{}", format_feature_dump(&seqs, &vectors, &schema));
    Ok(())
}
