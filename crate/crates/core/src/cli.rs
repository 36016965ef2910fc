//! Command-line interface. `run` is what the `deid` binary calls.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{
    format_annotations, generate_synthetic_corpus, load_corpus, load_notes, read_split, split_corpus,
    write_corpus, write_split, Document, GenProfile, PhiType, TemplateBank, DEFAULT_FRACTIONS,
};
use crate::embedding::{Config, WordVectors};
use crate::evaluation::{evaluate_documents, MetricReport, Scope};
use crate::features::{build_schema, extract_all, format_feature_dump, FeatureConfig, FeatureSchema, Resources};
use crate::pipeline::{annotate_document, redact};
use crate::tagger::Model;
use crate::tokenizer::{project_labels, sequences};
use crate::training::{prepare, run_experiment, SelectionCriterion, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "deid", version, about = "De-identify patient notes with a BiLSTM-CRF tagger")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotated corpus.
    GenCorpus(GenCorpusArgs),
    /// Print the feature vector of every token.
    FeatureDump(FeatureDumpArgs),
    /// Train one model per seed and write checkpoints plus a manifest.
    Train(TrainArgs),
    /// Write predicted standoff annotations.
    Predict(ModelArgs),
    /// Score predictions (or a model) against a gold corpus.
    Evaluate(EvaluateArgs),
    /// Write notes with predicted PHI replaced by `[**TYPE**]`.
    Deidentify(ModelArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureMode {
    None,
    Ehr,
    All,
}

impl FeatureMode {
    pub fn config(self) -> FeatureConfig {
        match self {
            FeatureMode::None => FeatureConfig::None,
            FeatureMode::Ehr => FeatureConfig::EhrOnly,
            FeatureMode::All => FeatureConfig::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    F1,
    Recall,
}

impl From<CriterionArg> for SelectionCriterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::F1 => SelectionCriterion::F1,
            CriterionArg::Recall => SelectionCriterion::Recall,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Template directory (headers/sections/sentences); builtin if absent.
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ResourceArgs {
    /// Gazetteer and lexicon root; overrides DEID_RESOURCES.
    #[arg(long)]
    pub resources: Option<PathBuf>,
}

impl ResourceArgs {
    fn load(&self) -> Result<Resources> {
        Ok(match &self.resources {
            Some(dir) => Resources::from_dir(dir)?,
            None => Resources::from_env()?,
        })
    }
}

#[derive(Debug, Args)]
pub struct FeatureDumpArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = FeatureMode::All)]
    pub features: FeatureMode,
    /// Output file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub res: ResourceArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Pretrained word vectors in word2vec text format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FeatureMode::All)]
    pub features: FeatureMode,
    #[arg(long, value_enum, default_value_t = CriterionArg::Recall)]
    pub criterion: CriterionArg,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// JSON model config; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed of the 70/10/20 document split, used when the corpus has no
    /// `split.json`.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub res: ResourceArgs,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Must match the model's schema when given.
    #[arg(long, value_enum)]
    pub features: Option<FeatureMode>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub res: ResourceArgs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["pred", "model"]))]
pub struct EvaluateArgs {
    /// Gold corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory of predicted `.ann` files.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Tag the corpus with this model instead of reading predictions.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub features: Option<FeatureMode>,
    /// Directory for `report.tsv` and `report.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = crate::tokenizer::DEFAULT_MAX_SEQUENCE_LENGTH)]
    pub max_sequence_length: usize,
    #[command(flatten)]
    pub res: ResourceArgs,
}

/// Parse `args` and execute. Usage errors exit 2, runtime failures 1.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus(a) => gen_corpus(&a),
        Command::FeatureDump(a) => feature_dump(&a),
        Command::Train(a) => train(&a),
        Command::Predict(a) => predict(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Deidentify(a) => deidentify(&a),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn gen_corpus(a: &GenCorpusArgs) -> Result<()> {
    let bank = match &a.templates {
        Some(dir) => TemplateBank::from_dir(dir)?,
        None => TemplateBank::builtin(),
    };
    let docs = generate_synthetic_corpus(a.n as usize, a.seed, &GenProfile::default(), &bank)?;
    write_corpus(&a.out, &docs)?;
    let mut spans: BTreeMap<PhiType, (usize, usize)> = PhiType::ALL.iter().map(|&t| (t, (0, 0))).collect();
    for d in &docs {
        for ann in &d.annotations {
            spans.get_mut(&ann.phi_type).expect("all types present").0 += 1;
        }
        for seq in sequences(&d.doc_id, &d.text, crate::tokenizer::DEFAULT_MAX_SEQUENCE_LENGTH) {
            for label in project_labels(&seq, &d.annotations)? {
                if let Some(t) = label.phi_type() {
                    spans.get_mut(&t).expect("all types present").1 += 1;
                }
            }
        }
    }
    println!("wrote {} notes to {}", docs.len(), a.out.display());
    println!("type\tspans\ttokens");
    for (t, (n_spans, n_tokens)) in spans {
        println!("{t}\t{n_spans}\t{n_tokens}");
    }
    Ok(())
}

fn feature_dump(a: &FeatureDumpArgs) -> Result<()> {
    let schema = build_schema(&a.features.config())?;
    let resources = a.res.load()?;
    let docs = load_notes(&a.corpus)?;
    let mut out = String::new();
    for d in &docs {
        let seqs = sequences(&d.doc_id, &d.text, crate::tokenizer::DEFAULT_MAX_SEQUENCE_LENGTH);
        let vecs = seqs
            .iter()
            .map(|s| extract_all(s, &d.text, &d.metadata, &schema, &resources))
            .collect::<Result<Vec<_>, _>>()?;
        out.push_str(&format_feature_dump(&seqs, &vecs, &schema));
    }
    match &a.out {
        Some(p) => write_file(p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

/// Defaults, then the config file, then flags.
fn effective_config(a: &TrainArgs) -> Result<(Config, Vec<u64>)> {
    let mut config = match &a.config {
        Some(p) => {
            let s = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<Config>(&s).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Config::default(),
    };
    if let Some(n) = a.max_epochs {
        config.max_epochs = n;
    }
    if let Some(n) = a.patience {
        config.patience = n;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;
    let seeds = a.seeds.clone().unwrap_or_else(|| vec![config.seed]);
    Ok((config, seeds))
}

fn train(a: &TrainArgs) -> Result<()> {
    let (config, seeds) = effective_config(a)?;
    let docs = load_corpus(&a.corpus).with_context(|| format!("loading corpus {}", a.corpus.display()))?;
    if docs.is_empty() {
        bail!("corpus {} holds no notes", a.corpus.display());
    }
    let split_path = a.corpus.join("split.json");
    let split = if split_path.exists() {
        read_split(&split_path)?
    } else {
        split_corpus(&docs, DEFAULT_FRACTIONS, a.split_seed)?
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_split(&a.out.join("split.json"), &split)?;
    let (tr, va, te) = split.partition(&docs)?;

    let pretrained = a
        .embeddings
        .as_ref()
        .map(|p| WordVectors::read(p).with_context(|| format!("loading embeddings {}", p.display())))
        .transpose()?;
    let schema = build_schema(&a.features.config())?;
    let resources = a.res.load()?;
    let len = config.max_sequence_length;
    let (train_set, val_set, test_set) = (
        prepare(&tr, &schema, &resources, len)?,
        prepare(&va, &schema, &resources, len)?,
        prepare(&te, &schema, &resources, len)?,
    );
    let opts = TrainOptions {
        criterion: a.criterion.into(),
        checkpoint_dir: Some(a.out.clone()),
        pretrained,
        ..TrainOptions::new(config)
    };
    let set = run_experiment(&opts, &schema, &seeds, &train_set, &val_set, &test_set)?;
    println!("seed\tepoch\tval_P\tval_R\tval_F1\tcheckpoint");
    for run in &set.runs {
        let row = run.validation.get(Scope::BinaryHipaa);
        println!(
            "{}\t{}\t{:.2}\t{:.2}\t{:.2}\t{}",
            run.seed,
            run.selected_epoch,
            row.precision,
            row.recall,
            row.f1,
            run.selected_checkpoint.as_ref().map_or("-".into(), |p| p.display().to_string())
        );
    }
    if let Some(best) = set.runs.first().and_then(|r| r.selected_checkpoint.as_ref()) {
        fs::copy(best, a.out.join("model.ckpt")).context("copying selected checkpoint")?;
        let json = best.with_extension("ckpt.json");
        if json.exists() {
            fs::copy(json, a.out.join("model.ckpt.json")).context("copying checkpoint header")?;
        }
    }
    println!("manifest: {}", a.out.join("experiment.json").display());
    Ok(())
}

fn load_model(path: &Path, features: Option<FeatureMode>) -> Result<Model> {
    let model = Model::load(path).with_context(|| format!("loading model {}", path.display()))?;
    if let Some(mode) = features {
        check_schema(&model, &build_schema(&mode.config())?)?;
    }
    Ok(model)
}

fn check_schema(model: &Model, schema: &FeatureSchema) -> Result<()> {
    if model.schema.hash() != schema.hash() {
        bail!(
            "model was trained with {} features ({}), flags select {} ({})",
            model.schema.len(),
            model.schema.hash(),
            schema.len(),
            schema.hash()
        );
    }
    Ok(())
}

fn tag_all(model: &Model, docs: &[Document], resources: &Resources) -> Result<Vec<Vec<crate::corpus::Annotation>>> {
    docs.iter()
        .map(|d| annotate_document(model, d, resources).with_context(|| format!("tagging {}", d.doc_id)))
        .collect()
}

fn predict(a: &ModelArgs) -> Result<()> {
    let model = load_model(&a.model, a.features)?;
    let resources = a.res.load()?;
    let docs = load_notes(&a.corpus)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (d, spans) in docs.iter().zip(tag_all(&model, &docs, &resources)?) {
        write_file(&a.out.join(format!("{}.ann", d.doc_id)), &format_annotations(&spans))?;
    }
    println!("tagged {} notes into {}", docs.len(), a.out.display());
    Ok(())
}

fn deidentify(a: &ModelArgs) -> Result<()> {
    let model = load_model(&a.model, a.features)?;
    let resources = a.res.load()?;
    let docs = load_notes(&a.corpus)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (d, spans) in docs.iter().zip(tag_all(&model, &docs, &resources)?) {
        write_file(&a.out.join(format!("{}.txt", d.doc_id)), &redact(&d.text, &spans))?;
    }
    println!("de-identified {} notes into {}", docs.len(), a.out.display());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let gold = load_corpus(&a.corpus)?;
    let predicted = match (&a.pred, &a.model) {
        (Some(dir), _) => gold
            .iter()
            .map(|d| {
                let path = dir.join(format!("{}.ann", d.doc_id));
                let s = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                Ok(crate::corpus::parse_annotations(&d.doc_id, &s)?)
            })
            .collect::<Result<Vec<_>>>()?,
        (None, Some(model)) => {
            let model = load_model(model, a.features)?;
            tag_all(&model, &gold, &a.res.load()?)?
        }
        (None, None) => bail!("give --pred or --model"),
    };
    let report: MetricReport = evaluate_documents(&gold, &predicted, a.max_sequence_length)?;
    let tsv = report.to_tsv();
    print!("{tsv}");
    if let Some(dir) = &a.out {
        write_file(&dir.join("report.tsv"), &tsv)?;
        write_file(&dir.join("report.json"), &report.to_json())?;
    }
    Ok(())
}
