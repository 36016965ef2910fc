//! Build a token vocabulary and embedding table from a word-vector file.

use deid::embedding::{token_table, TokenVocab, WordVectors};
use deid::nn::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("vectors.txt");
    std::fs::write(&path, "the 0.1 0.2 0.3\nboston 0.5 -0.1 0.0\nHospital 0.9 0.9 0.9\nzebra 1 1 1\n")?;
    let wv = WordVectors::read(&path)?;
    println!("{} vectors of dimension {}", wv.len(), wv.dim());

    let training = ["The", "patient", "left"];
    let corpus = ["The", "patient", "left", "Boston", "hospital"];
    let vocab = TokenVocab::build(training, corpus, Some(&wv));
    let table = token_table(&vocab, Some(&wv), wv.dim(), &mut Rng::new(0))?;
    for w in ["the", "boston", "hospital", "patient", "zebra", "unseen"] {
        let row = vocab.get(w);
        let v = &table.data()[row * wv.dim()..(row + 1) * wv.dim()];
        println!("{w:>9} -> row {row:>2} {v:.3?}");
    }
    Ok(())
}
