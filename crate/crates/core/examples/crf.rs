//! Viterbi decoding, the partition function and marginals on a toy
//! three-token, three-label problem, checked against enumeration.

use deid::tagger::{log_partition, marginals, path_score, viterbi, EmissionScores, TransitionMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let em = EmissionScores::new(vec![
        vec![1.0, 0.2, -0.5],
        vec![0.1, 0.9, 0.4],
        vec![-0.3, 0.5, 1.2],
    ])?;
    let mut trans = TransitionMatrix::zeros(3);
    trans.set(0, 1, 0.8);
    trans.set(1, 1, -1.0);
    trans.set(2, 0, -0.7);
    trans.set(trans.start(), 2, -2.0);

    let best = viterbi(&em, &trans)?;
    let log_z = log_partition(&em, &trans)?;
    println!("viterbi path {:?} score {:.4}", best.labels, best.score);
    println!("log Z {log_z:.6}");

    let mut paths = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                paths.push(vec![a, b, c]);
            }
        }
    }
    let scores = paths
        .iter()
        .map(|p| path_score(&em, &trans, p))
        .collect::<Result<Vec<_>, _>>()?;
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let brute_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    println!("enumerated: best score {max:.4}, log Z {brute_z:.6}");

    let m = marginals(&em, &trans)?;
    println!("token marginals:");
    for (t, row) in m.unary.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
        println!("  {t}: {}", cells.join(" "));
    }
    Ok(())
}
