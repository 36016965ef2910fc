//! Token-level scoring of predicted against gold BIO labels.

use deid::evaluation::full_report;
use deid::tokenizer::TokenLabel;

fn labels(s: &str) -> Result<Vec<TokenLabel>, Box<dyn std::error::Error>> {
    s.split_whitespace().map(|l| l.parse().map_err(|_| format!("bad label {l}").into())).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gold = vec![
        labels("O B-Patient I-Patient O O B-Doctor O B-Date")?,
        labels("O O B-Phone O B-Hospital I-Hospital")?,
    ];
    let pred = vec![
        labels("O B-Patient O O O B-Patient O B-Date")?,
        labels("O O B-Phone O O B-Hospital")?,
    ];
    print!("{}", full_report(&gold, &pred)?.to_tsv());
    Ok(())
}
