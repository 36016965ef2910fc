//! Train a tagger on a synthetic corpus and print the epoch history.
//!
//! cargo run --release --example train -- [n_docs] [max_epochs] [features]

use std::time::Instant;

use deid::corpus::{generate_synthetic_corpus, split_corpus, GenProfile, TemplateBank, DEFAULT_FRACTIONS};
use deid::embedding::Config;
use deid::features::{build_schema, FeatureConfig, Resources};
use deid::training::{prepare, select_epoch, train, SelectionCriterion, TrainOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_docs: usize = args.first().map_or(Ok(100), |s| s.parse())?;
    let max_epochs: usize = args.get(1).map_or(Ok(5), |s| s.parse())?;
    let features: FeatureConfig = args.get(2).map_or(Ok(FeatureConfig::All), |s| s.parse())?;

    let docs = generate_synthetic_corpus(n_docs, 7, &GenProfile::default(), &TemplateBank::builtin())?;
    let (tr, va, _) = split_corpus(&docs, DEFAULT_FRACTIONS, 7)?.partition(&docs)?;
    let schema = build_schema(&features)?;
    let resources = Resources::builtin();
    let config = Config { max_epochs, ..Config::default() };
    let train_set = prepare(&tr, &schema, &resources, config.max_sequence_length)?;
    let val_set = prepare(&va, &schema, &resources, config.max_sequence_length)?;
    let n_tokens: usize = train_set.iter().map(|e| e.gold.len()).sum();
    println!(
        "{} training sequences ({n_tokens} tokens), {} validation, {} features",
        train_set.len(),
        val_set.len(),
        schema.len()
    );

    let started = Instant::now();
    let run = train(&TrainOptions::new(config), &schema, &train_set, &val_set)?;
    let elapsed = started.elapsed().as_secs_f64();
    println!("epoch\tloss\tP\tR\tF1 (binary HIPAA, validation)");
    for r in &run.records {
        let row = r.validation.get(deid::evaluation::Scope::BinaryHipaa);
        println!("{}\t{:.3}\t{:.2}\t{:.2}\t{:.2}", r.epoch, r.train_loss, row.precision, row.recall, row.f1);
    }
    let best = select_epoch(&run.records, SelectionCriterion::Recall).expect("trained");
    println!("selected epoch {} by recall; {elapsed:.1}s total", best.epoch);
    Ok(())
}
