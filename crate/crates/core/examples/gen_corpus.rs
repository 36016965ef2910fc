//! Generate a synthetic annotated corpus and print per-type span counts.
//!
//! cargo run --example gen_corpus -- [n_docs] [seed] [out_dir]

use std::collections::BTreeMap;
use std::path::PathBuf;

use deid::corpus::{generate_synthetic_corpus, split_corpus, write_corpus, write_split, GenProfile, TemplateBank, DEFAULT_FRACTIONS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(Ok(20), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;

    let docs = generate_synthetic_corpus(n, seed, &GenProfile::default(), &TemplateBank::builtin())?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in docs.iter().flat_map(|d| &d.annotations) {
        *counts.entry(a.phi_type.name()).or_default() += 1;
    }
    for (t, c) in &counts {
        println!("{t}\t{c}");
    }

    let first = &docs[0];
    println!("\n{} ({} spans):\n{}", first.doc_id, first.annotations.len(), first.text);
    for a in &first.annotations {
        println!("  {}..{} {} {:?}", a.start, a.end, a.phi_type.name(), a.surface);
    }

    if let Some(out) = args.get(2).map(PathBuf::from) {
        write_corpus(&out, &docs)?;
        let split = split_corpus(&docs, DEFAULT_FRACTIONS, seed)?;
        write_split(&out.join("split.json"), &split)?;
        println!("\nwrote {n} notes and split.json to {}", out.display());
    }
    Ok(())
}
