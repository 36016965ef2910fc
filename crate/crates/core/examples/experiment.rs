//! Compare feature configurations over several seeds on one synthetic corpus.
//!
//! cargo run --release --example experiment -- [n_docs] [max_epochs] [seeds] [configs]
//!
//! e.g. `-- 500 4 1,2,3 none,ehr_only,all`

use std::time::Instant;

use deid::corpus::{generate_synthetic_corpus, split_corpus, GenProfile, TemplateBank, DEFAULT_FRACTIONS};
use deid::corpus::PhiType;
use deid::embedding::Config;
use deid::evaluation::Scope;
use deid::features::{build_schema, FeatureConfig, Resources};
use deid::training::{prepare, run_experiment, TrainOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_docs: usize = args.first().map_or(Ok(200), |s| s.parse())?;
    let max_epochs: usize = args.get(1).map_or(Ok(3), |s| s.parse())?;
    let seeds: Vec<u64> = args
        .get(2)
        .map_or("1,2,3", String::as_str)
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    let configs: Vec<FeatureConfig> = args
        .get(3)
        .map_or("none,ehr_only,all", String::as_str)
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()?;

    let docs = generate_synthetic_corpus(n_docs, 7, &GenProfile::default(), &TemplateBank::builtin())?;
    let (tr, va, te) = split_corpus(&docs, DEFAULT_FRACTIONS, 7)?.partition(&docs)?;
    let resources = Resources::builtin();
    println!("config\tseed\tepoch\tHIPAA_P\tHIPAA_R\tHIPAA_F1\tPatient_R\tseconds");
    for features in configs {
        let schema = build_schema(&features)?;
        let config = Config { max_epochs, ..Config::default() };
        let len = config.max_sequence_length;
        let (a, b, c) = (
            prepare(&tr, &schema, &resources, len)?,
            prepare(&va, &schema, &resources, len)?,
            prepare(&te, &schema, &resources, len)?,
        );
        let started = Instant::now();
        let set = run_experiment(&TrainOptions::new(config), &schema, &seeds, &a, &b, &c)?;
        let secs = started.elapsed().as_secs_f64() / seeds.len() as f64;
        let line = |seed: String, epoch: String, r: &deid::evaluation::MetricReport| {
            let h = r.get(Scope::BinaryHipaa);
            let p = r.get(Scope::Type(PhiType::Patient));
            println!(
                "{features}\t{seed}\t{epoch}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{secs:.0}",
                h.precision, h.recall, h.f1, p.recall
            );
        };
        for run in &set.runs {
            line(run.seed.to_string(), run.selected_epoch.to_string(), &run.test);
        }
        line("mean".into(), "-".into(), &set.mean_test);
    }
    Ok(())
}
