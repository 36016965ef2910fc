use std::collections::HashMap;

use super::crf::{nll_with_gradient, repair_bio, viterbi, EmissionScores, LabelSet, TransitionMatrix};
use super::TaggerError;
use crate::embedding::{CharVocab, Config, EmbeddingLayer, TokenInput, TokenVocab};
use crate::features::{FeatureSchema, FeatureVector};
use crate::nn::{Dense, LocalGradient, LstmParams, NnError, NodeId, ParamId, ParamStore, Rng, Tape, Tensor};
use crate::tokenizer::{Sequence, TokenLabel};

/// Decoded labels for one sequence with the Viterbi path score.
#[derive(Debug, Clone, PartialEq)]
pub struct TagSequence {
    pub labels: Vec<TokenLabel>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayers {
    pub embedding: EmbeddingLayer,
    pub label_forward: LstmParams,
    pub label_backward: LstmParams,
    pub output: Dense,
    pub transitions: ParamId,
}

/// Everything needed to tag: hyperparameters, feature layout, label
/// inventory, vocabularies and weights.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: Config,
    pub schema: FeatureSchema,
    pub labels: LabelSet,
    pub chars: CharVocab,
    pub tokens: TokenVocab,
    pub store: ParamStore,
    pub layers: ModelLayers,
}

impl Model {
    /// Fresh weights. `token_table` must have one row per entry of `tokens`.
    pub fn new(
        config: Config,
        schema: FeatureSchema,
        chars: CharVocab,
        tokens: TokenVocab,
        token_table: Tensor,
        rng: &mut Rng,
    ) -> Result<Self, TaggerError> {
        if token_table.rows() != tokens.size() {
            return Err(TaggerError::Shape(format!(
                "token table has {} rows for a vocabulary of {}",
                token_table.rows(),
                tokens.size()
            )));
        }
        let labels = LabelSet::default();
        let mut store = ParamStore::new();
        let embedding =
            EmbeddingLayer::init(&mut store, &config, chars.size(), token_table, schema.len(), rng)?;
        let d_in = embedding.output_dim(&store);
        let h = config.d_label_lstm;
        let label_forward = LstmParams::init(&mut store, "label_lstm.forward", d_in, h, rng);
        let label_backward = LstmParams::init(&mut store, "label_lstm.backward", d_in, h, rng);
        let output = Dense::init(&mut store, "output", 2 * h, labels.len(), rng);
        let n = labels.len() + 2;
        let transitions = store.add("crf.transitions", Tensor::zeros(&[n, n]));
        Ok(Model {
            config,
            schema,
            labels,
            chars,
            tokens,
            store,
            layers: ModelLayers {
                embedding,
                label_forward,
                label_backward,
                output,
                transitions,
            },
        })
    }

    /// Rebuild layer handles from tensor names, for a loaded store.
    pub fn from_parts(
        config: Config,
        schema: FeatureSchema,
        labels: LabelSet,
        chars: CharVocab,
        tokens: TokenVocab,
        store: ParamStore,
    ) -> Result<Self, TaggerError> {
        let embedding = EmbeddingLayer::bind(&store, &config, schema.len())?;
        let transitions = store
            .find("crf.transitions")
            .ok_or_else(|| NnError::MissingParam("crf.transitions".into()))?;
        let layers = ModelLayers {
            embedding,
            label_forward: LstmParams::bind(&store, "label_lstm.forward")?,
            label_backward: LstmParams::bind(&store, "label_lstm.backward")?,
            output: Dense::bind(&store, "output")?,
            transitions,
        };
        let n = labels.len() + 2;
        if store.get(transitions).shape() != [n, n] || layers.output.output_dim != labels.len() {
            return Err(TaggerError::Shape("label layer does not match the label set".into()));
        }
        Ok(Model {
            config,
            schema,
            labels,
            chars,
            tokens,
            store,
            layers,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.embedding.output_dim(&self.store)
    }

    /// Vocabulary ids and feature values for each token.
    pub fn encode(
        &self,
        seq: &Sequence,
        features: &[FeatureVector],
    ) -> Result<Vec<TokenInput>, TaggerError> {
        if features.len() != seq.len() {
            return Err(TaggerError::Shape(format!(
                "{} feature vectors for {} tokens",
                features.len(),
                seq.len()
            )));
        }
        Ok(seq
            .tokens
            .iter()
            .zip(features)
            .map(|(t, f)| TokenInput {
                token: self.tokens.get(&t.surface),
                chars: self.chars.encode(&t.surface),
                features: f.to_f64(),
            })
            .collect())
    }

    /// Emission score nodes, one per token.
    pub fn emission_nodes(
        &self,
        tape: &mut Tape<'_>,
        inputs: &[TokenInput],
        rng: &mut Rng,
        training: bool,
    ) -> Result<Vec<NodeId>, TaggerError> {
        if inputs.is_empty() {
            return Err(TaggerError::EmptySequence);
        }
        let l = &self.layers;
        let mut chars: HashMap<&[usize], NodeId> = HashMap::new();
        let mut xs = Vec::with_capacity(inputs.len());
        for inp in inputs {
            let c = match chars.get(inp.chars.as_slice()) {
                Some(&c) => c,
                None => {
                    let c = tape.char_encode(&l.embedding, &inp.chars)?;
                    chars.insert(&inp.chars, c);
                    c
                }
            };
            xs.push(tape.embed_with_chars(&l.embedding, inp, c, rng, training)?);
        }
        Ok(tape.label_scores(&l.label_forward, &l.label_backward, &l.output, &xs)?)
    }

    /// Recorded CRF negative log-likelihood of `gold` label indices.
    pub fn loss(
        &self,
        tape: &mut Tape<'_>,
        inputs: &[TokenInput],
        gold: &[usize],
        rng: &mut Rng,
        training: bool,
    ) -> Result<NodeId, TaggerError> {
        let em = self.emission_nodes(tape, inputs, rng, training)?;
        crf_nll(tape, &em, self.layers.transitions, gold)
    }

    pub fn transition_matrix(&self) -> TransitionMatrix {
        let t = self.store.get(self.layers.transitions);
        TransitionMatrix::from_flat(self.labels.len(), t.data().to_vec()).expect("square transitions")
    }

    /// Emission scores with dropout off.
    pub fn emissions(&self, inputs: &[TokenInput]) -> Result<EmissionScores, TaggerError> {
        let mut tape = Tape::new(&self.store);
        let nodes = self.emission_nodes(&mut tape, inputs, &mut Rng::new(0), false)?;
        EmissionScores::new(nodes.iter().map(|&n| tape.value(n).to_vec()).collect())
    }

    /// Viterbi decode followed by BIO repair.
    pub fn decode(&self, inputs: &[TokenInput]) -> Result<TagSequence, TaggerError> {
        let em = self.emissions(inputs)?;
        let path = viterbi(&em, &self.transition_matrix())?;
        let labels = self.labels.decode(&path.labels)?;
        Ok(TagSequence {
            labels: repair_bio(&labels),
            score: path.score,
        })
    }

    /// Tag one sequence whose features were computed with `schema`.
    pub fn predict(
        &self,
        seq: &Sequence,
        features: &[FeatureVector],
        schema: &FeatureSchema,
    ) -> Result<TagSequence, TaggerError> {
        let (expected, found) = (self.schema.hash(), schema.hash());
        if expected != found {
            return Err(TaggerError::SchemaMismatch { expected, found });
        }
        if seq.is_empty() {
            return Err(TaggerError::EmptySequence);
        }
        self.decode(&self.encode(seq, features)?)
    }
}

impl<'p> Tape<'p> {
    /// Token bi-LSTM followed by an affine map to one score per label.
    pub fn label_scores(
        &mut self,
        forward: &LstmParams,
        backward: &LstmParams,
        output: &Dense,
        xs: &[NodeId],
    ) -> Result<Vec<NodeId>, NnError> {
        let hs = self.bilstm(forward, backward, xs)?;
        hs.into_iter().map(|h| self.affine(output, h)).collect()
    }
}

/// Record the CRF negative log-likelihood as one fused node whose local
/// gradients come from forward-backward marginals.
pub fn crf_nll(
    tape: &mut Tape<'_>,
    emissions: &[NodeId],
    transitions: ParamId,
    gold: &[usize],
) -> Result<NodeId, TaggerError> {
    let em = EmissionScores::new(emissions.iter().map(|&n| tape.value(n).to_vec()).collect())?;
    let t = tape.params().get(transitions);
    let trans = TransitionMatrix::from_flat(em.n_labels(), t.data().to_vec())?;
    let g = nll_with_gradient(&em, &trans, gold)?;
    let local = LocalGradient {
        inputs: emissions.iter().copied().zip(g.emissions).collect(),
        params: vec![(transitions, g.transitions)],
    };
    Ok(tape.fused_scalar(g.loss, local)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EhrMetadata, PhiType};
    use crate::features::{build_schema, extract_all, FeatureConfig, Resources};
    use crate::tagger::crf::nll_loss;
    use crate::tokenizer::sequences;

    fn tiny(schema: FeatureSchema) -> Model {
        let cfg = Config {
            d_char: 4,
            d_char_lstm: 3,
            d_token: 5,
            d_label_lstm: 4,
            d_feat: 3,
            ..Config::default()
        };
        let chars = CharVocab::build(["John", "Doe", "came", "."]);
        let tokens = TokenVocab::from_words(["john", "doe", "came"].map(String::from));
        let mut rng = Rng::new(4);
        let table = crate::embedding::token_table(&tokens, None, cfg.d_token, &mut rng).unwrap();
        Model::new(cfg, schema, chars, tokens, table, &mut rng).unwrap()
    }

    fn fixture(schema: &FeatureSchema) -> (Sequence, Vec<FeatureVector>) {
        let text = "John Doe came.";
        let seq = sequences("d", text, 250).remove(0);
        let meta = EhrMetadata {
            patient_first_name: "John".into(),
            patient_last_name: "Doe".into(),
            doctor_first_names: vec![],
            doctor_last_names: vec![],
        };
        let f = extract_all(&seq, text, &meta, schema, &Resources::builtin()).unwrap();
        (seq, f)
    }

    #[test]
    fn emission_shape() {
        let schema = build_schema(&FeatureConfig::EhrOnly).unwrap();
        let m = tiny(schema.clone());
        let (seq, f) = fixture(&schema);
        let em = m.emissions(&m.encode(&seq, &f).unwrap()).unwrap();
        assert_eq!((em.len(), em.n_labels()), (4, 25));
        let one = m.emissions(&m.encode(&seq, &f).unwrap()[..1]).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn zero_params_give_zero_emissions() {
        let schema = build_schema(&FeatureConfig::None).unwrap();
        let mut m = tiny(schema.clone());
        let ids: Vec<ParamId> = m.store.ids().collect();
        for id in ids {
            m.store.get_mut(id).data_mut().fill(0.0);
        }
        let (seq, f) = fixture(&schema);
        let em = m.emissions(&m.encode(&seq, &f).unwrap()).unwrap();
        assert!((0..em.len()).all(|t| em.row(t).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn taped_loss_matches_plain_nll() {
        let schema = build_schema(&FeatureConfig::All).unwrap();
        let m = tiny(schema.clone());
        let (seq, f) = fixture(&schema);
        let inputs = m.encode(&seq, &f).unwrap();
        let gold = m
            .labels
            .encode(&[
                TokenLabel::B(PhiType::Patient),
                TokenLabel::I(PhiType::Patient),
                TokenLabel::O,
                TokenLabel::O,
            ])
            .unwrap();
        let mut tape = Tape::new(&m.store);
        let loss = m.loss(&mut tape, &inputs, &gold, &mut Rng::new(0), false).unwrap();
        let em = m.emissions(&inputs).unwrap();
        let want = nll_loss(&em, &m.transition_matrix(), &gold).unwrap();
        assert!((tape.value(loss)[0] - want).abs() < 1e-12);
    }

    #[test]
    fn predict_checks_schema_and_input() {
        let schema = build_schema(&FeatureConfig::EhrOnly).unwrap();
        let m = tiny(schema.clone());
        let (seq, f) = fixture(&schema);
        let a = m.predict(&seq, &f, &schema).unwrap();
        let b = m.predict(&seq, &f, &schema).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels.len(), 4);
        let other = build_schema(&FeatureConfig::All).unwrap();
        assert!(matches!(
            m.predict(&seq, &f, &other),
            Err(TaggerError::SchemaMismatch { .. })
        ));
        let empty = Sequence {
            doc_id: "d".into(),
            tokens: vec![],
        };
        assert!(matches!(
            m.predict(&empty, &[], &schema),
            Err(TaggerError::EmptySequence)
        ));
    }
}
