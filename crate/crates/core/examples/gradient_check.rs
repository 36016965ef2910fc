//! Finite-difference check of the full tagger loss on a tiny model.

use deid::embedding::{token_table, CharVocab, Config, TokenInput, TokenVocab};
use deid::features::{build_schema, FeatureConfig};
use deid::nn::{gradient_check, Rng};
use deid::tagger::Model;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = Config {
        d_char: 4,
        d_char_lstm: 3,
        d_token: 5,
        d_label_lstm: 4,
        d_feat: 3,
        ..Config::default()
    };
    let schema = build_schema(&FeatureConfig::EhrOnly)?;
    let words = ["patient", "doe", "seen", "today"];
    let chars = CharVocab::build(words);
    let tokens = TokenVocab::from_words(words.iter().map(|w| w.to_string()));
    let mut rng = Rng::new(5);
    let table = token_table(&tokens, None, config.d_token, &mut rng)?;
    let model = Model::new(config, schema, chars.clone(), tokens.clone(), table, &mut rng)?;
    let inputs: Vec<TokenInput> = words
        .iter()
        .enumerate()
        .map(|(i, w)| TokenInput {
            token: tokens.get(w),
            chars: chars.encode(w),
            features: vec![0.0, if i == 1 { 1.0 } else { 0.0 }, 0.0, 0.0],
        })
        .collect();
    let gold = [0, 1, 0, 0];

    let mut samples = Vec::new();
    for (id, _, tensor) in model.store.iter() {
        for _ in 0..5 {
            samples.push((id, rng.below(tensor.len())));
        }
    }
    let report = gradient_check(
        &model.store,
        |tape| Ok(model.loss(tape, &inputs, &gold, &mut Rng::new(1), false).expect("loss builds")),
        &samples,
        1e-5,
    )?;
    println!(
        "{} elements checked, max relative error {:.2e} at {:?}",
        report.checked, report.max_relative_error, report.worst
    );
    Ok(())
}
