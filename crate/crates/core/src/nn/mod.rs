//! Numerical substrate: tensors, a taped reverse-mode differentiator, LSTM
//! and feedforward layers, dropout, plain SGD and finite-difference checks.

mod layers;
mod rng;
mod tape;
mod tensor;

pub use layers::{bilstm, dropout, feedforward, lstm_step, Dense, LstmNodes, LstmParams};
pub use rng::{Rng, LCG_INCREMENT, LCG_MULTIPLIER};
pub use tape::{sigmoid, Grad, Gradients, LocalGradient, NodeId, Tape};
pub use tensor::{axpy, dot, ParamId, ParamStore, Tensor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0}: empty input sequence")]
    EmptyInput(&'static str),
    #[error("node was not recorded on this tape")]
    UnrecordedNode,
    #[error("loss must be a scalar, got length {0}")]
    NotScalar(usize),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub gradient_clip_norm: f64,
    pub dropout_p: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.005,
            gradient_clip_norm: 5.0,
            dropout_p: 0.5,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0) {
            return Err(NnError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(NnError::InvalidConfig(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout_p
            )));
        }
        if !(self.gradient_clip_norm > 0.0) {
            return Err(NnError::InvalidConfig(format!(
                "clip norm must be positive, got {}",
                self.gradient_clip_norm
            )));
        }
        Ok(())
    }
}

/// Clip by global norm, then `p -= lr * g`. Returns the pre-clip norm.
pub fn sgd_step(
    store: &mut ParamStore,
    grads: &mut Gradients,
    cfg: &SgdConfig,
) -> Result<f64, NnError> {
    if let Some(bad) = grads.first_non_finite() {
        return Err(NnError::NonFiniteGradient(store.name(bad).to_string()));
    }
    let norm = grads.norm();
    if norm > cfg.gradient_clip_norm {
        grads.scale(cfg.gradient_clip_norm / norm);
    }
    let lr = cfg.learning_rate;
    for (id, g) in grads.iter() {
        let t = store.get_mut(id);
        match g {
            Grad::Dense(v) => {
                axpy(-lr, v, t.data_mut());
                debug_assert!(t.is_finite(), "parameter {} became non-finite", id.index());
            }
            Grad::Rows { rows, .. } => {
                for (&r, v) in rows {
                    let row = t.row_mut(r);
                    axpy(-lr, v, row);
                    debug_assert!(row.iter().all(|x| x.is_finite()));
                }
            }
        }
    }
    Ok(norm)
}

/// Result of comparing taped gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
}

/// Denominator floor for the relative error. Central differences in f64
/// carry roundoff near `eps_machine * |L| / h` (about 3e-10 for a loss of 15
/// at h = 1e-5), so smaller derivatives are compared by absolute difference.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compare backprop against `(L(p + e) - L(p - e)) / 2e` for each sampled
/// `(parameter, flat index)`. `loss` must rebuild the same graph on each
/// call (any randomness must come from a freshly seeded stream).
pub fn gradient_check<F>(
    store: &ParamStore,
    loss: F,
    samples: &[(ParamId, usize)],
    epsilon: f64,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape) -> Result<NodeId, NnError>,
{
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(NnError::InvalidConfig(format!(
            "finite-difference step must be positive, got {epsilon}"
        )));
    }
    let grads = {
        let mut tape = Tape::new(store);
        let l = loss(&mut tape)?;
        tape.backward(l)?
    };
    let eval = |s: &ParamStore| -> Result<f64, NnError> {
        let mut tape = Tape::new(s);
        let l = loss(&mut tape)?;
        Ok(tape.value(l)[0])
    };
    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        worst: None,
    };
    for &(id, k) in samples {
        let orig = work.get(id).data()[k];
        work.get_mut(id).data_mut()[k] = orig + epsilon;
        let up = eval(&work)?;
        work.get_mut(id).data_mut()[k] = orig - epsilon;
        let down = eval(&work)?;
        work.get_mut(id).data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let err = relative_error(grads.at(id, k), numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            if err >= report.max_relative_error {
                report.worst = Some((store.name(id).to_string(), k));
            }
        }
    }
    Ok(report)
}

/// `per_param` seeded flat indices from each listed parameter.
pub fn sample_elements(
    store: &ParamStore,
    params: &[ParamId],
    per_param: usize,
    rng: &mut Rng,
) -> Vec<(ParamId, usize)> {
    let mut out = Vec::new();
    for &id in params {
        let n = store.get(id).len();
        for _ in 0..per_param.min(n) {
            out.push((id, rng.below(n)));
        }
    }
    out
}
