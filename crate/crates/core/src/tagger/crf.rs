//! Linear-chain CRF over per-token emission scores with START and END
//! transitions.

use super::TaggerError;
use crate::tokenizer::TokenLabel;

/// Ordered label inventory. Index order is part of a trained model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<TokenLabel>,
}

impl Default for LabelSet {
    /// `O`, then `B-`/`I-` for each PHI type: 25 labels.
    fn default() -> Self {
        LabelSet {
            labels: (0..TokenLabel::COUNT)
                .map(|i| TokenLabel::from_index(i).expect("index in range"))
                .collect(),
        }
    }
}

impl LabelSet {
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, TaggerError> {
        let labels = names
            .iter()
            .map(|n| {
                n.as_ref()
                    .parse()
                    .map_err(|_| TaggerError::Label(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<TokenLabel>, _>>()?;
        Ok(LabelSet { labels })
    }

    pub fn names(&self) -> Vec<String> {
        self.labels.iter().map(ToString::to_string).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> Option<TokenLabel> {
        self.labels.get(index).copied()
    }

    pub fn index_of(&self, label: TokenLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Index of the START pseudo-label in a [`TransitionMatrix`].
    pub fn start(&self) -> usize {
        self.labels.len()
    }

    pub fn end(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn encode(&self, labels: &[TokenLabel]) -> Result<Vec<usize>, TaggerError> {
        labels
            .iter()
            .map(|&l| self.index_of(l).ok_or_else(|| TaggerError::Label(l.to_string())))
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Result<Vec<TokenLabel>, TaggerError> {
        indices
            .iter()
            .map(|&i| {
                self.label(i)
                    .ok_or_else(|| TaggerError::Label(format!("index {i}")))
            })
            .collect()
    }
}

/// `T x L` unnormalized scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionScores {
    n_labels: usize,
    data: Vec<f64>,
}

impl EmissionScores {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, TaggerError> {
        let n_labels = rows.first().map(Vec::len).ok_or(TaggerError::EmptySequence)?;
        if n_labels == 0 || rows.iter().any(|r| r.len() != n_labels) {
            return Err(TaggerError::Shape("ragged or empty emission rows".into()));
        }
        Ok(EmissionScores {
            n_labels,
            data: rows.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n_labels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_labels..(t + 1) * self.n_labels]
    }

    pub fn at(&self, t: usize, y: usize) -> f64 {
        self.data[t * self.n_labels + y]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.n_labels..(t + 1) * self.n_labels]
    }
}

/// `(L+2) x (L+2)` transition scores, `[from][to]`. Row `L` is START and
/// column `L+1` is END. Entries into START or out of END are never read,
/// which is the same as masking them to negative infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n_labels: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn zeros(n_labels: usize) -> Self {
        let n = n_labels + 2;
        TransitionMatrix {
            n_labels,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_flat(n_labels: usize, data: Vec<f64>) -> Result<Self, TaggerError> {
        let n = n_labels + 2;
        if data.len() != n * n {
            return Err(TaggerError::Shape(format!(
                "transition matrix for {n_labels} labels needs {} values, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(TransitionMatrix { n_labels, data })
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn start(&self) -> usize {
        self.n_labels
    }

    pub fn end(&self) -> usize {
        self.n_labels + 1
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * (self.n_labels + 2) + to]
    }

    pub fn set(&mut self, from: usize, to: usize, v: f64) {
        self.data[from * (self.n_labels + 2) + to] = v;
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check(em: &EmissionScores, trans: &TransitionMatrix) -> Result<(), TaggerError> {
    if em.n_labels() != trans.n_labels() {
        return Err(TaggerError::Shape(format!(
            "{} emission labels vs {} transition labels",
            em.n_labels(),
            trans.n_labels()
        )));
    }
    Ok(())
}

fn forward(em: &EmissionScores, trans: &TransitionMatrix) -> Vec<Vec<f64>> {
    let l = em.n_labels();
    let mut alpha = Vec::with_capacity(em.len());
    alpha.push(
        (0..l)
            .map(|y| trans.get(trans.start(), y) + em.at(0, y))
            .collect::<Vec<_>>(),
    );
    let mut buf = vec![0.0; l];
    for t in 1..em.len() {
        let prev: &Vec<f64> = &alpha[t - 1];
        let row = (0..l)
            .map(|y| {
                for k in 0..l {
                    buf[k] = prev[k] + trans.get(k, y);
                }
                em.at(t, y) + log_sum_exp(&buf)
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

fn backward(em: &EmissionScores, trans: &TransitionMatrix) -> Vec<Vec<f64>> {
    let l = em.n_labels();
    let n = em.len();
    let mut beta = vec![vec![0.0; l]; n];
    for y in 0..l {
        beta[n - 1][y] = trans.get(y, trans.end());
    }
    let mut buf = vec![0.0; l];
    for t in (0..n - 1).rev() {
        for y in 0..l {
            for k in 0..l {
                buf[k] = trans.get(y, k) + em.at(t + 1, k) + beta[t + 1][k];
            }
            beta[t][y] = log_sum_exp(&buf);
        }
    }
    beta
}

fn finish(alpha_last: &[f64], trans: &TransitionMatrix) -> f64 {
    let v: Vec<f64> = alpha_last
        .iter()
        .enumerate()
        .map(|(y, a)| a + trans.get(y, trans.end()))
        .collect();
    log_sum_exp(&v)
}

/// Log of the sum over all label paths of `exp(score)`.
pub fn log_partition(em: &EmissionScores, trans: &TransitionMatrix) -> Result<f64, TaggerError> {
    check(em, trans)?;
    let alpha = forward(em, trans);
    Ok(finish(alpha.last().expect("nonempty"), trans))
}

/// Score of one path including START and END transitions.
pub fn path_score(
    em: &EmissionScores,
    trans: &TransitionMatrix,
    path: &[usize],
) -> Result<f64, TaggerError> {
    check(em, trans)?;
    if path.len() != em.len() {
        return Err(TaggerError::Shape(format!(
            "path of length {} for {} tokens",
            path.len(),
            em.len()
        )));
    }
    if let Some(&bad) = path.iter().find(|&&y| y >= em.n_labels()) {
        return Err(TaggerError::Label(format!("index {bad}")));
    }
    let mut s = trans.get(trans.start(), path[0]);
    for (t, &y) in path.iter().enumerate() {
        s += em.at(t, y);
        if t > 0 {
            s += trans.get(path[t - 1], y);
        }
    }
    Ok(s + trans.get(path[path.len() - 1], trans.end()))
}

/// `log Z - score(gold)`.
pub fn nll_loss(
    em: &EmissionScores,
    trans: &TransitionMatrix,
    gold: &[usize],
) -> Result<f64, TaggerError> {
    let s = path_score(em, trans, gold)?;
    Ok(log_partition(em, trans)? - s)
}

/// Per-position label marginals and expected transition counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub log_partition: f64,
    /// `T x L`
    pub unary: Vec<Vec<f64>>,
    /// Expected count of each transition, laid out like [`TransitionMatrix`].
    pub transitions: TransitionMatrix,
}

pub fn marginals(em: &EmissionScores, trans: &TransitionMatrix) -> Result<Marginals, TaggerError> {
    check(em, trans)?;
    let l = em.n_labels();
    let n = em.len();
    let alpha = forward(em, trans);
    let beta = backward(em, trans);
    let log_z = finish(&alpha[n - 1], trans);
    let unary: Vec<Vec<f64>> = (0..n)
        .map(|t| (0..l).map(|y| (alpha[t][y] + beta[t][y] - log_z).exp()).collect())
        .collect();
    let mut counts = TransitionMatrix::zeros(l);
    for y in 0..l {
        counts.set(trans.start(), y, unary[0][y]);
        counts.set(y, trans.end(), unary[n - 1][y]);
    }
    for t in 1..n {
        for i in 0..l {
            for j in 0..l {
                let p = (alpha[t - 1][i] + trans.get(i, j) + em.at(t, j) + beta[t][j] - log_z).exp();
                counts.set(i, j, counts.get(i, j) + p);
            }
        }
    }
    Ok(Marginals {
        log_partition: log_z,
        unary,
        transitions: counts,
    })
}

/// NLL with its gradients: `marginals - gold indicators` for emissions and
/// `expected - observed counts` for transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct NllGradient {
    pub loss: f64,
    pub emissions: Vec<Vec<f64>>,
    pub transitions: Vec<f64>,
}

pub fn nll_with_gradient(
    em: &EmissionScores,
    trans: &TransitionMatrix,
    gold: &[usize],
) -> Result<NllGradient, TaggerError> {
    let score = path_score(em, trans, gold)?;
    let m = marginals(em, trans)?;
    let mut emissions = m.unary;
    for (t, &y) in gold.iter().enumerate() {
        emissions[t][y] -= 1.0;
    }
    let mut tg = m.transitions;
    let (s, e) = (tg.start(), tg.end());
    tg.set(s, gold[0], tg.get(s, gold[0]) - 1.0);
    for w in gold.windows(2) {
        tg.set(w[0], w[1], tg.get(w[0], w[1]) - 1.0);
    }
    let last = gold[gold.len() - 1];
    tg.set(last, e, tg.get(last, e) - 1.0);
    Ok(NllGradient {
        loss: m.log_partition - score,
        emissions,
        transitions: tg.data,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub labels: Vec<usize>,
    pub score: f64,
}

/// Highest-scoring path. Ties go to the lower label index.
pub fn viterbi(em: &EmissionScores, trans: &TransitionMatrix) -> Result<ViterbiPath, TaggerError> {
    check(em, trans)?;
    let l = em.n_labels();
    let n = em.len();
    let mut delta: Vec<f64> = (0..l)
        .map(|y| trans.get(trans.start(), y) + em.at(0, y))
        .collect();
    let mut back = vec![vec![0usize; l]; n];
    for t in 1..n {
        let mut next = vec![0.0; l];
        for y in 0..l {
            let mut best = 0;
            let mut best_v = delta[0] + trans.get(0, y);
            for k in 1..l {
                let v = delta[k] + trans.get(k, y);
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            back[t][y] = best;
            next[y] = best_v + em.at(t, y);
        }
        delta = next;
    }
    let mut best = 0;
    let mut best_v = delta[0] + trans.get(0, trans.end());
    for (y, d) in delta.iter().enumerate().skip(1) {
        let v = d + trans.get(y, trans.end());
        if v > best_v {
            best = y;
            best_v = v;
        }
    }
    let mut labels = vec![best; n];
    for t in (1..n).rev() {
        labels[t - 1] = back[t][labels[t]];
    }
    Ok(ViterbiPath {
        labels,
        score: best_v,
    })
}

/// Turn every `I-X` that does not follow `B-X` or `I-X` into `B-X`.
pub fn repair_bio(tags: &[TokenLabel]) -> Vec<TokenLabel> {
    let mut out = Vec::with_capacity(tags.len());
    let mut prev = TokenLabel::O;
    for &tag in tags {
        let fixed = match tag {
            TokenLabel::I(t) if prev.phi_type() != Some(t) => TokenLabel::B(t),
            other => other,
        };
        out.push(fixed);
        prev = fixed;
    }
    out
}
