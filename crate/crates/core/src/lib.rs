//! De-identification of patient notes with a feature-augmented
//! bidirectional-LSTM / CRF sequence tagger.

pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod features;
pub mod nn;
pub mod pipeline;
pub mod tagger;
pub mod tokenizer;
pub mod training;
