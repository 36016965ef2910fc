//! Acceptance criteria 1-9. Each test prints one `criterion N: PASS|FAIL`
//! line to stderr (uncaptured) and then asserts.
//!
//! The tests share one lock so the timed ones measure a quiet CPU.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use deid::corpus::{generate_synthetic_corpus, split_corpus, EhrMetadata, GenProfile, PhiType, TemplateBank, DEFAULT_FRACTIONS};
use deid::embedding::{token_table, CharVocab, Config, TokenInput, TokenVocab};
use deid::evaluation::{full_report, Scope};
use deid::features::{build_schema, extract_all, format_feature_dump, FeatureConfig, FeatureVector, Resources};
use deid::nn::{gradient_check, Rng};
use deid::tagger::{log_partition, nll_with_gradient, viterbi, EmissionScores, Model, TransitionMatrix};
use deid::tokenizer::{sequences, TokenLabel};
use deid::training::{evaluate_model, prepare, run_experiment, select_epoch, RunSet, SelectionCriterion, TrainOptions};

// Pinned tolerances and budgets.
const VITERBI_SCORE_TOL: f64 = 1e-9;
const LOG_Z_REL_TOL: f64 = 1e-8;
const CRF_ORACLE_BUDGET: Duration = Duration::from_secs(5);
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const MIN_GRAD_SAMPLES: usize = 200;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const EMISSION_GRAD_TOL: f64 = 1e-8;
const HIPAA_F1_FLOOR: f64 = 95.0;
const RUN_BUDGET: Duration = Duration::from_secs(20 * 60);

// Synthetic end-to-end setup.
const N_NOTES: usize = 500;
const CORPUS_SEED: u64 = 7;
const SPLIT_SEED: u64 = 7;
const SEEDS: [u64; 3] = [1, 2, 3];
const MAX_EPOCHS: usize = 4;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "criterion {n}: {verdict} ({detail})");
}

// ---------------------------------------------------------------- oracles

fn random_crf(rng: &mut Rng, t: usize, l: usize) -> (EmissionScores, TransitionMatrix) {
    let mut u = || 4.0 * rng.next_f64() - 2.0;
    let rows = (0..t).map(|_| (0..l).map(|_| u()).collect()).collect();
    let mut trans = TransitionMatrix::zeros(l);
    for from in 0..l + 2 {
        for to in 0..l + 2 {
            trans.set(from, to, u());
        }
    }
    (EmissionScores::new(rows).unwrap(), trans)
}

fn brute_score(em: &EmissionScores, tr: &TransitionMatrix, path: &[usize]) -> f64 {
    let mut s = tr.get(tr.start(), path[0]) + tr.get(path[path.len() - 1], tr.end());
    for (t, &y) in path.iter().enumerate() {
        s += em.at(t, y);
        if t > 0 {
            s += tr.get(path[t - 1], y);
        }
    }
    s
}

/// Every label path of length `t` over `l` labels, lexicographic order.
fn all_paths(t: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..l).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[test]
fn criterion_1_crf_oracle() {
    let _g = serial();
    let started = Instant::now();
    let mut rng = Rng::new(101);
    let (mut worst_score, mut worst_z, mut path_mismatches) = (0.0f64, 0.0f64, 0);
    for i in 0..100 {
        let t = 1 + i % 6;
        let l = 1 + (i / 6) % 5;
        let (em, tr) = random_crf(&mut rng, t, l);
        let paths = all_paths(t, l);
        let scores: Vec<f64> = paths.iter().map(|p| brute_score(&em, &tr, p)).collect();
        let best = (0..paths.len()).fold(0, |b, k| if scores[k] > scores[b] { k } else { b });
        let v = viterbi(&em, &tr).unwrap();
        if v.labels != paths[best] {
            path_mismatches += 1;
        }
        worst_score = worst_score.max((v.score - scores[best]).abs());
        let z = lse(&scores);
        let ours = log_partition(&em, &tr).unwrap();
        worst_z = worst_z.max((ours - z).abs() / z.abs().max(1e-300));
    }
    let elapsed = started.elapsed();
    let pass = path_mismatches == 0
        && worst_score <= VITERBI_SCORE_TOL
        && worst_z <= LOG_Z_REL_TOL
        && elapsed < CRF_ORACLE_BUDGET;
    report(
        1,
        pass,
        &format!(
            "100 instances, {path_mismatches} path mismatches, max score diff {worst_score:.1e}, max logZ rel err {worst_z:.1e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_gradient_check() {
    let _g = serial();
    let started = Instant::now();
    let config = Config {
        d_char: 4,
        d_char_lstm: 3,
        d_token: 5,
        d_label_lstm: 4,
        d_feat: 3,
        ..Config::default()
    };
    let full = build_schema(&FeatureConfig::All).unwrap();
    let schema = full
        .subset(&[
            "ehr.patient_last_name",
            "morphological.is_numeric",
            "semantic.has_person_hypernym",
            "temporal.month",
            "gazetteer.first_names",
            "regex.phone",
        ])
        .unwrap();
    assert_eq!(schema.len(), 6);
    let words = ["mr", "doe", "called", "on", "monday"];
    let chars = CharVocab::from_chars("mrdoecalnyu".chars());
    let tokens = TokenVocab::from_words(words.iter().map(|w| w.to_string()));
    let mut rng = Rng::new(17);
    let table = token_table(&tokens, None, config.d_token, &mut rng).unwrap();
    let mut model = Model::new(config, schema, chars.clone(), tokens.clone(), table, &mut rng).unwrap();
    // Nonzero transitions so their gradient is not trivially symmetric.
    for v in model.store.get_mut(model.layers.transitions).data_mut() {
        *v = 0.5 * rng.next_f64() - 0.25;
    }
    let inputs: Vec<TokenInput> = words
        .iter()
        .map(|w| TokenInput {
            token: tokens.get(w),
            chars: chars.encode(w),
            features: (0..6).map(|_| f64::from(rng.below(2) as u8)).collect(),
        })
        .collect();
    let gold = [0usize, 7, 0, 0, 3];

    // Embedding tables are sampled on the rows the sequence reads.
    let mut used_rows: HashMap<&str, Vec<usize>> = HashMap::new();
    used_rows.insert("char_embeddings", inputs.iter().flat_map(|i| i.chars.clone()).collect());
    used_rows.insert("token_embeddings", inputs.iter().map(|i| i.token).collect());
    let mut samples = Vec::new();
    let mut families: Vec<String> = Vec::new();
    for (id, name, tensor) in model.store.iter() {
        let per = 12;
        for _ in 0..per {
            let k = match used_rows.get(name) {
                Some(rows) => {
                    let cols = tensor.cols();
                    rows[rng.below(rows.len())] * cols + rng.below(cols)
                }
                None => rng.below(tensor.len()),
            };
            samples.push((id, k));
        }
        families.push(name.to_string());
    }
    let expected = [
        "char_embeddings",
        "token_embeddings",
        "features.0.weights",
        "char_lstm.forward.input_weights",
        "char_lstm.backward.hidden_weights",
        "label_lstm.forward.input_weights",
        "label_lstm.backward.bias",
        "output.weights",
        "crf.transitions",
    ];
    let covered = expected.iter().all(|e| families.iter().any(|f| f == e));
    let result = gradient_check(
        &model.store,
        |tape| {
            // Dropout active, with the same mask on every evaluation.
            Ok(model
                .loss(tape, &inputs, &gold, &mut Rng::new(99), true)
                .expect("loss builds"))
        },
        &samples,
        FD_STEP,
    )
    .unwrap();
    let elapsed = started.elapsed();
    let pass = covered
        && result.checked >= MIN_GRAD_SAMPLES
        && result.max_relative_error <= FD_REL_TOL
        && elapsed < GRAD_BUDGET;
    report(
        2,
        pass,
        &format!(
            "{} samples over {} tensors, max rel err {:.2e} at {:?}, {:.2}s",
            result.checked,
            families.len(),
            result.max_relative_error,
            result.worst,
            elapsed.as_secs_f64()
        ),
    );
    assert!(covered, "parameter families: {families:?}");
    assert!(pass);
}

#[test]
fn criterion_3_emission_gradient_identity() {
    let _g = serial();
    let mut rng = Rng::new(303);
    let mut worst = 0.0f64;
    for i in 0..30 {
        let t = 1 + i % 5;
        let l = 2 + i % 4;
        let (em, tr) = random_crf(&mut rng, t, l);
        let gold: Vec<usize> = (0..t).map(|_| rng.below(l)).collect();
        let paths = all_paths(t, l);
        let scores: Vec<f64> = paths.iter().map(|p| brute_score(&em, &tr, p)).collect();
        let z = lse(&scores);
        let mut marg = vec![vec![0.0; l]; t];
        for (p, s) in paths.iter().zip(&scores) {
            let w = (s - z).exp();
            for (pos, &y) in p.iter().enumerate() {
                marg[pos][y] += w;
            }
        }
        let g = nll_with_gradient(&em, &tr, &gold).unwrap();
        for pos in 0..t {
            for y in 0..l {
                let oracle = marg[pos][y] - if gold[pos] == y { 1.0 } else { 0.0 };
                worst = worst.max((g.emissions[pos][y] - oracle).abs());
            }
        }
    }
    let pass = worst <= EMISSION_GRAD_TOL;
    report(3, pass, &format!("30 instances, max |grad - (marginal - gold)| {worst:.1e}"));
    assert!(pass);
}

#[test]
fn criterion_4_shape_contract() {
    let _g = serial();
    let config = Config::default();
    let tokens = TokenVocab::from_words(["the".to_string()]);
    let chars = CharVocab::from_chars("the".chars());
    let dim = |features: FeatureConfig| {
        let schema = build_schema(&features).unwrap();
        let mut rng = Rng::new(0);
        let table = token_table(&tokens, None, config.d_token, &mut rng).unwrap();
        let model = Model::new(config.clone(), schema, chars.clone(), tokens.clone(), table, &mut rng).unwrap();
        let label_in = model.store.get(model.layers.label_forward.input_weights).cols();
        (model.embedding_dim(), label_in, model.layers.output.output_dim)
    };
    let all = dim(FeatureConfig::All);
    let ehr = dim(FeatureConfig::EhrOnly);
    let none = dim(FeatureConfig::None);
    let pass = all == (175, 175, 25)
        && ehr == (175, 175, 25)
        && none == (150, 150, 25)
        && config.embedding_dim(52) == 175
        && config.embedding_dim(0) == 150;
    report(
        4,
        pass,
        &format!("embedding/label-LSTM input/labels: all {all:?}, ehr {ehr:?}, none {none:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_metric_golden() {
    let _g = serial();
    let src = std::fs::read_to_string(fixtures().join("metrics_20.tsv")).unwrap();
    let (mut gold, mut pred) = (vec![vec![]], vec![vec![]]);
    let mut n_tokens = 0;
    for line in src.lines().filter(|l| !l.starts_with('#')) {
        if line.is_empty() {
            gold.push(vec![]);
            pred.push(vec![]);
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        gold.last_mut().unwrap().push(cols[1].parse::<TokenLabel>().unwrap());
        pred.last_mut().unwrap().push(cols[2].parse::<TokenLabel>().unwrap());
        n_tokens += 1;
    }
    assert_eq!(n_tokens, 20);
    let rep = full_report(&gold, &pred).unwrap();
    let expected = std::fs::read_to_string(fixtures().join("metrics_20.expected.tsv")).unwrap();
    let tsv_ok = rep.to_tsv() == expected;
    let counts = |s: Scope| {
        let c = rep.get(s).counts.unwrap();
        (c.tp, c.fp, c.fn_)
    };
    let counts_ok = counts(Scope::BinaryHipaa) == (6, 3, 2)
        && counts(Scope::BinaryAll) == (9, 1, 3)
        && counts(Scope::Type(PhiType::Zip)) == (0, 0, 0);
    let zip = rep.get(Scope::Type(PhiType::Zip));
    let degenerate_ok = (zip.precision, zip.recall, zip.f1) == (100.0, 100.0, 100.0);
    let hipaa = rep.get(Scope::BinaryHipaa);
    let exact_ok = hipaa.recall == 75.0 && hipaa.precision == 100.0 * 6.0 / 9.0;
    let pass = tsv_ok && counts_ok && degenerate_ok && exact_ok;
    report(
        5,
        pass,
        &format!("TSV match {tsv_ok}, counts {counts_ok}, 0/0 convention {degenerate_ok}, exact values {exact_ok}"),
    );
    if !tsv_ok {
        eprintln!("got:\n{}", rep.to_tsv());
    }
    assert!(pass);
}

// ---------------------------------------------------------- end to end

struct Experiments {
    sets: Vec<(FeatureConfig, RunSet, Duration)>,
    val: HashMap<String, Vec<deid::training::Example>>,
    _dirs: Vec<tempfile::TempDir>,
}

fn feature_configs() -> [FeatureConfig; 3] {
    [FeatureConfig::None, FeatureConfig::EhrOnly, FeatureConfig::All]
}

fn run_all(checkpoints: bool) -> Experiments {
    let docs = generate_synthetic_corpus(N_NOTES, CORPUS_SEED, &GenProfile::default(), &TemplateBank::builtin()).unwrap();
    let (tr, va, te) = split_corpus(&docs, DEFAULT_FRACTIONS, SPLIT_SEED).unwrap().partition(&docs).unwrap();
    let resources = Resources::builtin();
    let mut sets = Vec::new();
    let mut val = HashMap::new();
    let mut dirs = Vec::new();
    for features in feature_configs() {
        let schema = build_schema(&features).unwrap();
        let config = Config {
            max_epochs: MAX_EPOCHS,
            ..Config::default()
        };
        let len = config.max_sequence_length;
        let (a, b, c) = (
            prepare(&tr, &schema, &resources, len).unwrap(),
            prepare(&va, &schema, &resources, len).unwrap(),
            prepare(&te, &schema, &resources, len).unwrap(),
        );
        let dir = checkpoints.then(|| tempfile::tempdir().unwrap());
        let opts = TrainOptions {
            criterion: SelectionCriterion::Recall,
            checkpoint_dir: dir.as_ref().map(|d| d.path().to_path_buf()),
            ..TrainOptions::new(config)
        };
        let started = Instant::now();
        let set = run_experiment(&opts, &schema, &SEEDS, &a, &b, &c).unwrap();
        sets.push((features.clone(), set, started.elapsed()));
        val.insert(features.to_string(), b);
        dirs.extend(dir);
    }
    Experiments {
        sets,
        val,
        _dirs: dirs,
    }
}

fn experiments() -> &'static Experiments {
    static EXP: OnceLock<Experiments> = OnceLock::new();
    EXP.get_or_init(|| run_all(true))
}

fn set_for<'e>(e: &'e Experiments, f: &FeatureConfig) -> &'e RunSet {
    &e.sets.iter().find(|(c, _, _)| c == f).unwrap().1
}

#[test]
fn criterion_6_synthetic_replication() {
    let _g = serial();
    let e = experiments();
    let all = set_for(e, &FeatureConfig::All);
    let ehr = set_for(e, &FeatureConfig::EhrOnly);
    let none = set_for(e, &FeatureConfig::None);
    let hipaa = Scope::BinaryHipaa;
    let patient = Scope::Type(PhiType::Patient);
    let a = all.mean_test.get(hipaa).f1;
    let (pe, pn) = (ehr.mean_test.get(patient).recall, none.mean_test.get(patient).recall);
    let (he, hn) = (ehr.mean_test.get(hipaa).recall, none.mean_test.get(hipaa).recall);
    let slowest = e.sets.iter().map(|(_, _, d)| *d).max().unwrap();
    let (ok_a, ok_b, ok_c) = (a >= HIPAA_F1_FLOOR, pe >= pn, he >= hn);
    // Each configuration's three runs together fit one run's budget.
    let ok_time = slowest < RUN_BUDGET;
    let pass = ok_a && ok_b && ok_c && ok_time;
    report(
        6,
        pass,
        &format!(
            "(a) all-features HIPAA F1 {a:.2} >= {HIPAA_F1_FLOOR:.1}: {ok_a}; (b) Patient recall ehr {pe:.2} vs none {pn:.2}: {ok_b}; (c) HIPAA recall ehr {he:.2} vs none {hn:.2}: {ok_c}; slowest 3-run set {:.0}s",
            slowest.as_secs_f64()
        ),
    );
    for (f, set, d) in &e.sets {
        let r = set.mean_test.get(hipaa);
        eprintln!(
            "  {f}: HIPAA P {:.2} R {:.2} F1 {:.2}, Patient R {:.2}, epochs {:?}, {:.0}s",
            r.precision,
            r.recall,
            r.f1,
            set.mean_test.get(patient).recall,
            set.runs.iter().map(|r| r.selected_epoch).collect::<Vec<_>>(),
            d.as_secs_f64()
        );
    }
    assert!(pass);
}

#[test]
fn criterion_7_selection_property() {
    let _g = serial();
    let e = experiments();
    let mut checked = 0;
    let mut violations = 0;
    for (_, set, _) in &e.sets {
        for run in &set.runs {
            let by_recall = select_epoch(&run.records, SelectionCriterion::Recall).unwrap();
            let by_f1 = select_epoch(&run.records, SelectionCriterion::F1).unwrap();
            let r = |rec: &deid::training::EpochRecord| rec.validation.get(Scope::BinaryHipaa).recall;
            if r(by_recall) < r(by_f1) {
                violations += 1;
            }
            if run.selected_epoch != by_recall.epoch {
                violations += 1;
            }
            checked += 1;
        }
    }
    let pass = violations == 0 && checked == 9;
    report(7, pass, &format!("{checked} runs, {violations} violations"));
    assert!(pass);
}

#[test]
fn criterion_8_determinism() {
    let _g = serial();
    let first = experiments();
    let again = run_all(false);
    let mut diffs = 0;
    for ((f, a, _), (_, b, _)) in first.sets.iter().zip(&again.sets) {
        let same = a.mean_test == b.mean_test
            && a.runs.len() == b.runs.len()
            && a.runs.iter().zip(&b.runs).all(|(x, y)| {
                x.seed == y.seed
                    && x.selected_epoch == y.selected_epoch
                    && x.validation == y.validation
                    && x.test == y.test
                    && x.records.len() == y.records.len()
                    && x.records.iter().zip(&y.records).all(|(p, q)| {
                        p.epoch == q.epoch
                            && p.train_loss.to_bits() == q.train_loss.to_bits()
                            && p.validation == q.validation
                    })
            });
        if !same {
            eprintln!("  rerun differs for {f}");
            diffs += 1;
        }
    }
    let mut reloads = 0;
    let mut reload_diffs = 0;
    for (f, set, _) in &first.sets {
        let val = &first.val[&f.to_string()];
        for run in &set.runs {
            let path = run.selected_checkpoint.as_ref().expect("checkpoints were written");
            let model = Model::load(path).unwrap();
            if evaluate_model(&model, val).unwrap() != run.validation {
                reload_diffs += 1;
            }
            reloads += 1;
        }
    }
    let pass = diffs == 0 && reload_diffs == 0 && reloads == 9;
    report(
        8,
        pass,
        &format!("rerun of 9 runs: {diffs} configurations differ; {reloads} checkpoint reloads, {reload_diffs} differ"),
    );
    assert!(pass);
}

#[test]
fn criterion_9_feature_golden() {
    let _g = serial();
    let dir = fixtures().join("features");
    let text = std::fs::read_to_string(dir.join("note.txt")).unwrap();
    let meta: EhrMetadata =
        serde_json::from_str(&std::fs::read_to_string(dir.join("note.meta.json")).unwrap()).unwrap();
    let expected = std::fs::read_to_string(dir.join("note.features.tsv")).unwrap();
    let schema = build_schema(&FeatureConfig::All).unwrap();
    let resources = Resources::builtin();
    let seqs = sequences("note", &text, 250);
    let vecs: Vec<Vec<FeatureVector>> = seqs
        .iter()
        .map(|s| extract_all(s, &text, &meta, &schema, &resources).unwrap())
        .collect();

    // Rebuild the expected bit vectors from the fired-name lists.
    let mut want: Vec<(String, Vec<bool>)> = Vec::new();
    for line in expected.lines().filter(|l| !l.is_empty()) {
        let (surface, fired) = line.split_once('\t').unwrap();
        let mut bits = vec![false; schema.len()];
        for name in fired.split(',').filter(|n| !n.is_empty()) {
            bits[schema.position(name).unwrap_or_else(|| panic!("unknown feature {name}"))] = true;
        }
        want.push((surface.to_string(), bits));
    }
    let got: Vec<(String, Vec<bool>)> = seqs
        .iter()
        .zip(&vecs)
        .flat_map(|(s, v)| s.tokens.iter().zip(v).map(|(t, f)| (t.surface.clone(), f.0.clone())))
        .collect();
    let exact = got == want && format_feature_dump(&seqs, &vecs, &schema) == expected;

    // The extension gap, checked independently of the golden file.
    let phone = schema.position("regex.phone").unwrap();
    let bit = |surface: &str, nth: usize| {
        got.iter().filter(|(s, _)| s == surface).nth(nth).map(|(_, b)| b[phone]).unwrap()
    };
    let gap = bit("617", 0) && bit("4031", 0) && !bit("ext", 0) && !bit("6599", 0) && bit("0199", 0);
    let pass = exact && gap;
    report(
        9,
        pass,
        &format!("{} tokens bit-exact: {exact}; phone bits on 617-690-4031 but not on `ext 6599`: {gap}", got.len()),
    );
    assert!(pass);
}
