//! SGD training with per-epoch validation, checkpointing, epoch selection
//! and multi-seed experiments.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::embedding::{token_table, CharVocab, Config, EmbeddingError, TokenInput, TokenVocab, WordVectors};
use crate::evaluation::{aggregate, full_report, EvalError, MetricReport, Scope};
use crate::features::{extract_all, FeatureError, FeatureSchema, FeatureVector, Resources};
use crate::nn::{sgd_step, NnError, Rng, SgdConfig, Tape};
use crate::tagger::{Model, TaggerError};
use crate::tokenizer::{project_labels, sequences, Sequence, TokenLabel, TokenizerError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss at epoch {epoch}, sequence {sequence} of {doc_id}")]
    NonFiniteLoss {
        epoch: usize,
        sequence: usize,
        doc_id: String,
    },
    #[error("duplicate seed {0}")]
    DuplicateSeed(u64),
    #[error("no seeds given")]
    NoSeeds,
    #[error("unknown selection criterion `{0}`")]
    Criterion(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionCriterion {
    F1,
    Recall,
}

impl FromStr for SelectionCriterion {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f1" => Ok(SelectionCriterion::F1),
            "recall" => Ok(SelectionCriterion::Recall),
            other => Err(TrainError::Criterion(other.to_string())),
        }
    }
}

impl fmt::Display for SelectionCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionCriterion::F1 => "f1",
            SelectionCriterion::Recall => "recall",
        })
    }
}

/// One tagging sequence with its features and gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub sequence: Sequence,
    pub features: Vec<FeatureVector>,
    pub gold: Vec<TokenLabel>,
}

/// Tokenize, segment, extract features and project gold labels.
pub fn prepare(
    docs: &[Document],
    schema: &FeatureSchema,
    resources: &Resources,
    max_sequence_length: usize,
) -> Result<Vec<Example>, TrainError> {
    let mut out = Vec::new();
    for doc in docs {
        for seq in sequences(&doc.doc_id, &doc.text, max_sequence_length) {
            let features = extract_all(&seq, &doc.text, &doc.metadata, schema, resources)?;
            let gold = project_labels(&seq, &doc.annotations)?;
            out.push(Example {
                sequence: seq,
                features,
                gold,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean NLL per training sequence.
    pub train_loss: f64,
    pub validation: MetricReport,
    pub checkpoint: Option<PathBuf>,
}

impl EpochRecord {
    pub fn metric(&self, criterion: SelectionCriterion, scope: Scope) -> f64 {
        let row = self.validation.get(scope);
        match criterion {
            SelectionCriterion::F1 => row.f1,
            SelectionCriterion::Recall => row.recall,
        }
    }
}

/// Best epoch on the binary-HIPAA validation metric; earliest on ties.
pub fn select_epoch(records: &[EpochRecord], criterion: SelectionCriterion) -> Option<&EpochRecord> {
    select_epoch_in(records, criterion, Scope::BinaryHipaa)
}

pub fn select_epoch_in(
    records: &[EpochRecord],
    criterion: SelectionCriterion,
    scope: Scope,
) -> Option<&EpochRecord> {
    records.iter().fold(None, |best: Option<&EpochRecord>, r| match best {
        Some(b) if b.metric(criterion, scope) >= r.metric(criterion, scope) => Some(b),
        _ => Some(r),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub config: Config,
    /// Drives early stopping.
    pub criterion: SelectionCriterion,
    pub scope: Scope,
    /// Where to write per-epoch checkpoints and `training.log`.
    pub checkpoint_dir: Option<PathBuf>,
    pub pretrained: Option<WordVectors>,
}

impl TrainOptions {
    pub fn new(config: Config) -> Self {
        TrainOptions {
            config,
            criterion: SelectionCriterion::Recall,
            scope: Scope::BinaryHipaa,
            checkpoint_dir: None,
            pretrained: None,
        }
    }
}

/// Epoch history plus the weights of the best epoch under each criterion.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub records: Vec<EpochRecord>,
    pub best_f1: Model,
    pub best_recall: Model,
}

impl TrainingRun {
    pub fn model(&self, criterion: SelectionCriterion) -> &Model {
        match criterion {
            SelectionCriterion::F1 => &self.best_f1,
            SelectionCriterion::Recall => &self.best_recall,
        }
    }
}

/// Untrained model whose vocabularies come from `train` (plus pretrained
/// words seen in `all`).
pub fn build_model(
    opts: &TrainOptions,
    schema: &FeatureSchema,
    train: &[Example],
    all: &[&[Example]],
    seed: u64,
) -> Result<Model, TrainError> {
    let cfg = &opts.config;
    cfg.validate()?;
    let surfaces = |ex: &[Example]| -> Vec<String> {
        ex.iter()
            .flat_map(|e| e.sequence.tokens.iter().map(|t| t.surface.clone()))
            .collect()
    };
    let train_words = surfaces(train);
    let corpus_words: Vec<String> = all.iter().flat_map(|ex| surfaces(ex)).collect();
    let tokens = TokenVocab::build(
        train_words.iter().map(String::as_str),
        corpus_words.iter().map(String::as_str),
        opts.pretrained.as_ref(),
    );
    let chars = CharVocab::build(train_words.iter().map(String::as_str));
    let mut rng = Rng::new(seed);
    let mut init_rng = rng.fork(1);
    let table = token_table(&tokens, opts.pretrained.as_ref(), cfg.d_token, &mut init_rng)?;
    Ok(Model::new(cfg.clone(), schema.clone(), chars, tokens, table, &mut init_rng)?)
}

/// Decode every example with dropout off.
pub fn predict_examples(model: &Model, examples: &[Example]) -> Result<Vec<Vec<TokenLabel>>, TrainError> {
    examples
        .iter()
        .map(|e| Ok(model.predict(&e.sequence, &e.features, &model.schema)?.labels))
        .collect()
}

pub fn evaluate_model(model: &Model, examples: &[Example]) -> Result<MetricReport, TrainError> {
    let pred = predict_examples(model, examples)?;
    let gold: Vec<Vec<TokenLabel>> = examples.iter().map(|e| e.gold.clone()).collect();
    Ok(full_report(&gold, &pred)?)
}

fn io_err(path: &Path, e: std::io::Error) -> TrainError {
    TrainError::Io(format!("{}: {e}", path.display()))
}

/// Train from fresh weights. `config.seed` drives initialization, shuffling,
/// dropout and UNK replacement.
pub fn train(
    opts: &TrainOptions,
    schema: &FeatureSchema,
    train_set: &[Example],
    validation: &[Example],
) -> Result<TrainingRun, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if validation.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let cfg = &opts.config;
    let mut model = build_model(opts, schema, train_set, &[train_set, validation], cfg.seed)?;
    let mut rng = Rng::new(cfg.seed);
    let mut shuffle_rng = rng.fork(2);
    let mut dropout_rng = rng.fork(3);
    let mut unk_rng = rng.fork(4);

    let inputs: Vec<Vec<TokenInput>> = train_set
        .iter()
        .map(|e| model.encode(&e.sequence, &e.features))
        .collect::<Result<_, _>>()?;
    let golds: Vec<Vec<usize>> = train_set
        .iter()
        .map(|e| model.labels.encode(&e.gold))
        .collect::<Result<_, _>>()?;
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for t in inputs.iter().flatten() {
        *counts.entry(t.token).or_default() += 1;
    }
    let singletons: BTreeSet<usize> = counts
        .into_iter()
        .filter(|&(id, n)| n == 1 && id != TokenVocab::UNK)
        .map(|(id, _)| id)
        .collect();

    if let Some(dir) = &opts.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut log = String::new();
    let sgd = SgdConfig {
        learning_rate: cfg.learning_rate,
        gradient_clip_norm: cfg.clip_norm,
        dropout_p: cfg.dropout_p,
    };
    sgd.validate()?;

    let mut records: Vec<EpochRecord> = Vec::new();
    let mut best_f1: Option<(f64, Model)> = None;
    let mut best_recall: Option<(f64, Model)> = None;
    let mut best_for_stopping = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut total = 0.0;
        for &i in &order {
            let mut inp = inputs[i].clone();
            if cfg.singleton_unk_p > 0.0 {
                for t in &mut inp {
                    if singletons.contains(&t.token) && unk_rng.next_f64() < cfg.singleton_unk_p {
                        t.token = TokenVocab::UNK;
                    }
                }
            }
            let (loss, mut grads) = {
                let mut tape = Tape::new(&model.store);
                let node = model.loss(&mut tape, &inp, &golds[i], &mut dropout_rng, true)?;
                let loss = tape.value(node)[0];
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        sequence: i,
                        doc_id: train_set[i].sequence.doc_id.clone(),
                    });
                }
                (loss, tape.backward(node)?)
            };
            sgd_step(&mut model.store, &mut grads, &sgd)?;
            total += loss;
        }

        let validation_report = evaluate_model(&model, validation)?;
        let checkpoint = match &opts.checkpoint_dir {
            Some(dir) => {
                let p = dir.join(format!("epoch-{epoch:03}.ckpt"));
                model.save(&p)?;
                Some(p)
            }
            None => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            validation: validation_report,
            checkpoint,
        };
        let row = record.validation.get(opts.scope);
        log.push_str(&format!(
            "{epoch}\t{:.3}\t{:.3}\t{:.3}\t{}\n",
            row.precision,
            row.recall,
            row.f1,
            record
                .checkpoint
                .as_ref()
                .map_or("-".to_string(), |p| p.display().to_string())
        ));
        for (crit, best) in [
            (SelectionCriterion::F1, &mut best_f1),
            (SelectionCriterion::Recall, &mut best_recall),
        ] {
            let v = record.metric(crit, opts.scope);
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                *best = Some((v, model.clone()));
            }
        }
        let v = record.metric(opts.criterion, opts.scope);
        if v > best_for_stopping {
            best_for_stopping = v;
            stale = 0;
        } else {
            stale += 1;
        }
        records.push(record);
        if stale >= cfg.patience {
            break;
        }
    }
    if let Some(dir) = &opts.checkpoint_dir {
        let p = dir.join("training.log");
        fs::write(&p, log).map_err(|e| io_err(&p, e))?;
    }
    Ok(TrainingRun {
        records,
        best_f1: best_f1.expect("at least one epoch").1,
        best_recall: best_recall.expect("at least one epoch").1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub selected_epoch: usize,
    pub selected_checkpoint: Option<PathBuf>,
    pub validation: MetricReport,
    pub test: MetricReport,
    pub records: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSet {
    pub config: Config,
    pub features: Vec<String>,
    pub schema_len: usize,
    pub schema_hash: String,
    pub criterion: SelectionCriterion,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunResult>,
    pub mean_test: MetricReport,
}

impl RunSet {
    pub fn manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run set serializes");
        s.push('\n');
        s
    }
}

/// One training run per seed; each is scored on `test` at the epoch chosen
/// by `opts.criterion`. With a checkpoint directory, run `k` writes into
/// `seed-<seed>/` beneath it and the manifest goes to `experiment.json`.
pub fn run_experiment(
    opts: &TrainOptions,
    schema: &FeatureSchema,
    seeds: &[u64],
    train_set: &[Example],
    validation: &[Example],
    test: &[Example],
) -> Result<RunSet, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::NoSeeds);
    }
    let mut seen = BTreeSet::new();
    for &s in seeds {
        if !seen.insert(s) {
            return Err(TrainError::DuplicateSeed(s));
        }
    }
    let mut runs = Vec::new();
    for &seed in seeds {
        let mut o = opts.clone();
        o.config.seed = seed;
        o.checkpoint_dir = opts.checkpoint_dir.as_ref().map(|d| d.join(format!("seed-{seed}")));
        let run = train(&o, schema, train_set, validation)?;
        let selected = select_epoch_in(&run.records, opts.criterion, opts.scope)
            .expect("at least one epoch")
            .clone();
        let test_report = evaluate_model(run.model(opts.criterion), test)?;
        runs.push(RunResult {
            seed,
            selected_epoch: selected.epoch,
            selected_checkpoint: selected.checkpoint,
            validation: selected.validation,
            test: test_report,
            records: run.records,
        });
    }
    let tests: Vec<MetricReport> = runs.iter().map(|r| r.test.clone()).collect();
    let set = RunSet {
        config: opts.config.clone(),
        features: schema.families().iter().map(|f| f.name().to_string()).collect(),
        schema_len: schema.len(),
        schema_hash: schema.hash(),
        criterion: opts.criterion,
        seeds: seeds.to_vec(),
        runs,
        mean_test: aggregate(&tests)?,
    };
    if let Some(dir) = &opts.checkpoint_dir {
        let p = dir.join("experiment.json");
        fs::write(&p, set.manifest_json()).map_err(|e| io_err(&p, e))?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{ConfusionCounts, ReportRow};

    fn record(epoch: usize, recall: f64, f1: f64) -> EpochRecord {
        let row = |scope: &str| ReportRow {
            scope: scope.to_string(),
            precision: 90.0,
            recall,
            f1,
            support: 10,
            counts: Some(ConfusionCounts::default()),
        };
        EpochRecord {
            epoch,
            train_loss: 1.0,
            validation: MetricReport {
                runs: 1,
                rows: vec![row("Binary"), row("Binary-HIPAA")],
            },
            checkpoint: None,
        }
    }

    #[test]
    fn selection_argmax_and_ties() {
        let rs = vec![record(1, 98.0, 90.0), record(2, 99.4, 95.0), record(3, 99.1, 96.0)];
        assert_eq!(select_epoch(&rs, SelectionCriterion::Recall).unwrap().epoch, 2);
        assert_eq!(select_epoch(&rs, SelectionCriterion::F1).unwrap().epoch, 3);
        assert_eq!(select_epoch(&rs[..1], SelectionCriterion::F1).unwrap().epoch, 1);
        let tied = vec![
            record(1, 90.0, 90.0),
            record(2, 91.0, 91.0),
            record(3, 95.0, 95.0),
            record(4, 94.0, 94.0),
            record(5, 95.0, 95.0),
        ];
        assert_eq!(select_epoch(&tied, SelectionCriterion::Recall).unwrap().epoch, 3);
        assert!(select_epoch(&[], SelectionCriterion::F1).is_none());
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!("Recall".parse::<SelectionCriterion>().unwrap(), SelectionCriterion::Recall);
        assert_eq!("f1".parse::<SelectionCriterion>().unwrap(), SelectionCriterion::F1);
        assert!("auc".parse::<SelectionCriterion>().is_err());
    }

    #[test]
    fn experiment_rejects_bad_seeds() {
        let schema = FeatureSchema::from_families(&[]);
        let opts = TrainOptions::new(Config::default());
        assert!(matches!(
            run_experiment(&opts, &schema, &[1, 1], &[], &[], &[]),
            Err(TrainError::DuplicateSeed(1))
        ));
        assert!(matches!(
            run_experiment(&opts, &schema, &[], &[], &[], &[]),
            Err(TrainError::NoSeeds)
        ));
    }

    #[test]
    fn empty_splits_rejected() {
        let schema = FeatureSchema::from_families(&[]);
        let opts = TrainOptions::new(Config::default());
        assert!(matches!(train(&opts, &schema, &[], &[]), Err(TrainError::EmptySplit(_))));
    }
}
