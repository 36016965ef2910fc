//! Token representation: feature projection, token embedding and character
//! bi-LSTM encoding, concatenated and passed through dropout.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Dense, LstmParams, NnError, NodeId, ParamId, ParamStore, Rng, Tape, Tensor};

/// Range of the uniform initialization for embedding rows not covered by a
/// pretrained file.
pub const EMBEDDING_INIT_RANGE: f64 = 0.25;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{0}")]
    Io(String),
    #[error("{path} line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("word vectors have dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("token has no characters")]
    EmptyToken,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Model and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub d_char: usize,
    pub d_char_lstm: usize,
    pub d_token: usize,
    pub d_label_lstm: usize,
    pub d_feat: usize,
    /// Number of tanh layers in the feature projection.
    pub feature_layers: usize,
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub max_sequence_length: usize,
    /// Probability of replacing a training-set singleton with UNK during
    /// training, so the UNK row is learned.
    pub singleton_unk_p: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            d_char: 25,
            d_char_lstm: 25,
            d_token: 100,
            d_label_lstm: 100,
            d_feat: 25,
            feature_layers: 1,
            dropout_p: 0.5,
            learning_rate: 0.005,
            clip_norm: 5.0,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            max_sequence_length: 250,
            singleton_unk_p: 0.5,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let dims = [
            ("d_char", self.d_char),
            ("d_char_lstm", self.d_char_lstm),
            ("d_token", self.d_token),
            ("d_label_lstm", self.d_label_lstm),
            ("d_feat", self.d_feat),
            ("feature_layers", self.feature_layers),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("max_sequence_length", self.max_sequence_length),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(EmbeddingError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(EmbeddingError::Config(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        if !(0.0..=1.0).contains(&self.singleton_unk_p) {
            return Err(EmbeddingError::Config(format!(
                "singleton_unk_p {} outside [0, 1]",
                self.singleton_unk_p
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(EmbeddingError::Config(
                "learning_rate and clip_norm must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Width of the concatenated token representation.
    pub fn embedding_dim(&self, n_features: usize) -> usize {
        let feat = if n_features > 0 { self.d_feat } else { 0 };
        feat + self.d_token + 2 * self.d_char_lstm
    }
}

/// Character to row index; row 0 is UNK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<char>", into = "Vec<char>")]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl From<Vec<char>> for CharVocab {
    fn from(chars: Vec<char>) -> Self {
        CharVocab::from_chars(chars)
    }
}

impl From<CharVocab> for Vec<char> {
    fn from(v: CharVocab) -> Self {
        v.chars
    }
}

impl CharVocab {
    pub const UNK: usize = 0;

    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Self {
        let mut sorted: Vec<char> = chars.into_iter().collect();
        sorted.sort_unstable();
        sorted.dedup();
        let index = sorted.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
        CharVocab {
            chars: sorted,
            index,
        }
    }

    /// Every character of the given token surfaces.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(surfaces: I) -> Self {
        Self::from_chars(surfaces.into_iter().flat_map(str::chars))
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Rows in the embedding table, UNK included.
    pub fn size(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn get(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(Self::UNK)
    }

    pub fn encode(&self, surface: &str) -> Vec<usize> {
        surface.chars().map(|c| self.get(c)).collect()
    }
}

/// Case-folded token to row index; row 0 is UNK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for TokenVocab {
    fn from(words: Vec<String>) -> Self {
        TokenVocab::from_words(words)
    }
}

impl From<TokenVocab> for Vec<String> {
    fn from(v: TokenVocab) -> Self {
        v.words
    }
}

impl TokenVocab {
    pub const UNK: usize = 0;

    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut sorted: Vec<String> = words.into_iter().map(|w| w.to_lowercase()).collect();
        sorted.sort_unstable();
        sorted.dedup();
        let index = sorted
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i + 1))
            .collect();
        TokenVocab {
            words: sorted,
            index,
        }
    }

    /// Training tokens, plus pretrained words that occur anywhere in
    /// `corpus_tokens`.
    pub fn build<'a>(
        training_tokens: impl IntoIterator<Item = &'a str>,
        corpus_tokens: impl IntoIterator<Item = &'a str>,
        pretrained: Option<&WordVectors>,
    ) -> Self {
        let mut words: Vec<String> = training_tokens.into_iter().map(str::to_lowercase).collect();
        if let Some(wv) = pretrained {
            words.extend(
                corpus_tokens
                    .into_iter()
                    .map(str::to_lowercase)
                    .filter(|w| wv.get(w).is_some()),
            );
        }
        Self::from_words(words)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn size(&self) -> usize {
        self.words.len() + 1
    }

    pub fn get(&self, token: &str) -> usize {
        self.index
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(Self::UNK)
    }
}

/// Word vectors read from a text file: a token followed by its values on
/// each line, separated by spaces. Words are case-folded; the first
/// occurrence wins.
#[derive(Debug, Clone, Default)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn read(path: &Path) -> Result<Self, EmbeddingError> {
        let io = |e: std::io::Error| EmbeddingError::Io(format!("{}: {e}", path.display()));
        let reader = BufReader::new(File::open(path).map_err(io)?);
        let mut wv = WordVectors::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| EmbeddingError::Format {
                path: path.display().to_string(),
                line: n + 1,
                message,
            };
            let mut parts = line.split_whitespace();
            let word = parts.next().expect("nonblank line has a field");
            let values = parts
                .map(|p| p.parse::<f64>().map_err(|_| bad(format!("`{p}` is not a number"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(bad("no values".into()));
            }
            if wv.dim == 0 {
                wv.dim = values.len();
            } else if values.len() != wv.dim {
                return Err(bad(format!("{} values, expected {}", values.len(), wv.dim)));
            }
            wv.vectors.entry(word.to_lowercase()).or_insert(values);
        }
        Ok(wv)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

/// Token embedding table for `vocab`: every row drawn uniformly from
/// ±[`EMBEDDING_INIT_RANGE`], then rows found in `vectors` overwritten.
pub fn token_table(
    vocab: &TokenVocab,
    vectors: Option<&WordVectors>,
    d_token: usize,
    rng: &mut Rng,
) -> Result<Tensor, EmbeddingError> {
    let mut table = Tensor::uniform(&[vocab.size(), d_token], EMBEDDING_INIT_RANGE, rng);
    if let Some(wv) = vectors {
        if !wv.is_empty() && wv.dim() != d_token {
            return Err(EmbeddingError::Dimension {
                expected: d_token,
                found: wv.dim(),
            });
        }
        for (i, w) in vocab.words().iter().enumerate() {
            if let Some(v) = wv.get(w) {
                table.row_mut(i + 1).copy_from_slice(v);
            }
        }
    }
    Ok(table)
}

/// Read `path` and build the token table for `vocab`.
pub fn load_pretrained(
    path: &Path,
    vocab: &TokenVocab,
    d_token: usize,
    rng: &mut Rng,
) -> Result<Tensor, EmbeddingError> {
    let wv = WordVectors::read(path)?;
    token_table(vocab, Some(&wv), d_token, rng)
}

/// One token ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenInput {
    pub token: usize,
    pub chars: Vec<usize>,
    pub features: Vec<f64>,
}

/// Handles to the embedding block's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingLayer {
    pub char_table: ParamId,
    pub token_table: ParamId,
    pub feature_layers: Vec<Dense>,
    pub char_forward: LstmParams,
    pub char_backward: LstmParams,
    pub n_features: usize,
    pub dropout_p: f64,
}

impl EmbeddingLayer {
    pub fn init(
        store: &mut ParamStore,
        cfg: &Config,
        n_chars: usize,
        token_table: Tensor,
        n_features: usize,
        rng: &mut Rng,
    ) -> Result<Self, EmbeddingError> {
        cfg.validate()?;
        if token_table.cols() != cfg.d_token {
            return Err(EmbeddingError::Dimension {
                expected: cfg.d_token,
                found: token_table.cols(),
            });
        }
        let char_table = store.add(
            "char_embeddings",
            Tensor::uniform(&[n_chars, cfg.d_char], EMBEDDING_INIT_RANGE, rng),
        );
        let token_table = store.add("token_embeddings", token_table);
        let mut feature_layers = Vec::new();
        if n_features > 0 {
            let mut input = n_features;
            for k in 0..cfg.feature_layers {
                feature_layers.push(Dense::init(store, &format!("features.{k}"), input, cfg.d_feat, rng));
                input = cfg.d_feat;
            }
        }
        let char_forward = LstmParams::init(store, "char_lstm.forward", cfg.d_char, cfg.d_char_lstm, rng);
        let char_backward =
            LstmParams::init(store, "char_lstm.backward", cfg.d_char, cfg.d_char_lstm, rng);
        Ok(EmbeddingLayer {
            char_table,
            token_table,
            feature_layers,
            char_forward,
            char_backward,
            n_features,
            dropout_p: cfg.dropout_p,
        })
    }

    pub fn bind(store: &ParamStore, cfg: &Config, n_features: usize) -> Result<Self, EmbeddingError> {
        let find = |name: &str| {
            store
                .find(name)
                .ok_or_else(|| NnError::MissingParam(name.to_string()))
        };
        let feature_layers = if n_features > 0 {
            (0..cfg.feature_layers)
                .map(|k| Dense::bind(store, &format!("features.{k}")))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            vec![]
        };
        Ok(EmbeddingLayer {
            char_table: find("char_embeddings")?,
            token_table: find("token_embeddings")?,
            feature_layers,
            char_forward: LstmParams::bind(store, "char_lstm.forward")?,
            char_backward: LstmParams::bind(store, "char_lstm.backward")?,
            n_features,
            dropout_p: cfg.dropout_p,
        })
    }

    pub fn output_dim(&self, store: &ParamStore) -> usize {
        let feat = self.feature_layers.last().map_or(0, |d| d.output_dim);
        feat + store.get(self.token_table).cols() + self.char_forward.hidden_dim + self.char_backward.hidden_dim
    }
}

impl<'p> Tape<'p> {
    /// Final forward state and final backward state of the character
    /// bi-LSTM.
    pub fn char_encode(
        &mut self,
        layer: &EmbeddingLayer,
        chars: &[usize],
    ) -> Result<NodeId, EmbeddingError> {
        if chars.is_empty() {
            return Err(EmbeddingError::EmptyToken);
        }
        let xs = chars
            .iter()
            .map(|&c| self.row(layer.char_table, c))
            .collect::<Result<Vec<_>, _>>()?;
        let fwd = self.lstm_sequence(&layer.char_forward, &xs, false)?;
        let bwd = self.lstm_sequence(&layer.char_backward, &xs, true)?;
        Ok(self.concat(&[fwd[fwd.len() - 1], bwd[0]])?)
    }

    /// `dropout(concat(ffn(features), token row, char encoding))`.
    pub fn embed(
        &mut self,
        layer: &EmbeddingLayer,
        input: &TokenInput,
        rng: &mut Rng,
        training: bool,
    ) -> Result<NodeId, EmbeddingError> {
        let chars = self.char_encode(layer, &input.chars)?;
        self.embed_with_chars(layer, input, chars, rng, training)
    }

    /// [`Tape::embed`] with the character encoding already recorded.
    pub fn embed_with_chars(
        &mut self,
        layer: &EmbeddingLayer,
        input: &TokenInput,
        chars: NodeId,
        rng: &mut Rng,
        training: bool,
    ) -> Result<NodeId, EmbeddingError> {
        if input.features.len() != layer.n_features {
            return Err(EmbeddingError::Nn(NnError::Shape(format!(
                "{} feature values, projection expects {}",
                input.features.len(),
                layer.n_features
            ))));
        }
        let mut parts = Vec::with_capacity(3);
        if !layer.feature_layers.is_empty() {
            let mut h = self.input(input.features.clone());
            for d in &layer.feature_layers {
                h = self.feedforward(d, h)?;
            }
            parts.push(h);
        }
        parts.push(self.row(layer.token_table, input.token)?);
        parts.push(chars);
        let x = self.concat(&parts)?;
        Ok(self.dropout(x, layer.dropout_p, rng, training)?)
    }
}
