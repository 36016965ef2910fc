use super::tape::{NodeId, Tape};
use super::tensor::{ParamId, ParamStore, Tensor};
use super::{NnError, Rng};

/// Handles to the tensors of one LSTM direction.
///
/// The four gate blocks are stacked row-wise as input, forget, cell
/// candidate, output, so `input_weights` is `4H x D`, `hidden_weights` is
/// `4H x H` and `bias` has length `4H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub input_weights: ParamId,
    pub hidden_weights: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmParams {
    /// Glorot-uniform weights, zero biases, forget-gate bias 1.0.
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let g = 4 * hidden_dim;
        let input_weights = store.add(
            format!("{prefix}.input_weights"),
            Tensor::glorot(g, input_dim, rng),
        );
        let hidden_weights = store.add(
            format!("{prefix}.hidden_weights"),
            Tensor::glorot(g, hidden_dim, rng),
        );
        let mut b = Tensor::zeros(&[g]);
        b.data_mut()[hidden_dim..2 * hidden_dim].fill(1.0);
        let bias = store.add(format!("{prefix}.bias"), b);
        LstmParams {
            input_weights,
            hidden_weights,
            bias,
            input_dim,
            hidden_dim,
        }
    }

    /// Re-bind handles after loading a store by name.
    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self, NnError> {
        let find = |suffix: &str| {
            store
                .find(&format!("{prefix}.{suffix}"))
                .ok_or_else(|| NnError::MissingParam(format!("{prefix}.{suffix}")))
        };
        let input_weights = find("input_weights")?;
        let hidden_weights = find("hidden_weights")?;
        let bias = find("bias")?;
        let wx = store.get(input_weights);
        Ok(LstmParams {
            input_weights,
            hidden_weights,
            bias,
            input_dim: wx.cols(),
            hidden_dim: wx.rows() / 4,
        })
    }
}

/// Affine layer `W x + b` with `W` stored as `out x in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weights: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Dense {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        output_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let weights = store.add(
            format!("{prefix}.weights"),
            Tensor::glorot(output_dim, input_dim, rng),
        );
        let bias = store.add(format!("{prefix}.bias"), Tensor::zeros(&[output_dim]));
        Dense {
            weights,
            bias,
            input_dim,
            output_dim,
        }
    }

    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self, NnError> {
        let find = |suffix: &str| {
            store
                .find(&format!("{prefix}.{suffix}"))
                .ok_or_else(|| NnError::MissingParam(format!("{prefix}.{suffix}")))
        };
        let weights = find("weights")?;
        let bias = find("bias")?;
        let w = store.get(weights);
        Ok(Dense {
            weights,
            bias,
            input_dim: w.cols(),
            output_dim: w.rows(),
        })
    }
}

/// Bias nodes recorded once per tape and reused at every time step.
#[derive(Debug, Clone, Copy)]
pub struct LstmNodes {
    params: LstmParams,
    bias: NodeId,
}

impl<'p> Tape<'p> {
    pub fn lstm_nodes(&mut self, params: &LstmParams) -> LstmNodes {
        LstmNodes {
            params: *params,
            bias: self.param(params.bias),
        }
    }

    /// One LSTM step without peepholes:
    ///
    /// ```text
    /// i = σ(Wi x + Ui h + bi)      f = σ(Wf x + Uf h + bf)
    /// g = tanh(Wg x + Ug h + bg)   o = σ(Wo x + Uo h + bo)
    /// c' = f ⊙ c + i ⊙ g           h' = o ⊙ tanh(c')
    /// ```
    pub fn lstm_step(
        &mut self,
        lstm: &LstmNodes,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId), NnError> {
        let hd = lstm.params.hidden_dim;
        if self.value(h).len() != hd || self.value(c).len() != hd {
            return Err(NnError::Shape(format!(
                "lstm state has length {}/{}, hidden_dim is {hd}",
                self.value(h).len(),
                self.value(c).len()
            )));
        }
        let zx = self.matvec(lstm.params.input_weights, x)?;
        self.lstm_step_projected(lstm, zx, h, c)
    }

    /// `lstm_step` with `W x` already computed.
    fn lstm_step_projected(
        &mut self,
        lstm: &LstmNodes,
        zx: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId), NnError> {
        let hd = lstm.params.hidden_dim;
        let zh = self.matvec(lstm.params.hidden_weights, h)?;
        let z = self.add(zx, zh)?;
        let z = self.add(z, lstm.bias)?;
        let zi = self.slice(z, 0, hd)?;
        let zf = self.slice(z, hd, hd)?;
        let zg = self.slice(z, 2 * hd, hd)?;
        let zo = self.slice(z, 3 * hd, hd)?;
        let i = self.sigmoid(zi)?;
        let f = self.sigmoid(zf)?;
        let g = self.tanh(zg)?;
        let o = self.sigmoid(zo)?;
        let fc = self.mul(f, c)?;
        let ig = self.mul(i, g)?;
        let c_next = self.add(fc, ig)?;
        let tc = self.tanh(c_next)?;
        let h_next = self.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    /// Hidden states of one direction, aligned with `xs` (index t is the
    /// state after reading `xs[t]`, whichever direction is used).
    pub fn lstm_sequence(
        &mut self,
        params: &LstmParams,
        xs: &[NodeId],
        reverse: bool,
    ) -> Result<Vec<NodeId>, NnError> {
        let nodes = self.lstm_nodes(params);
        let mut h = self.input(vec![0.0; params.hidden_dim]);
        let mut c = self.input(vec![0.0; params.hidden_dim]);
        let mut out = vec![h; xs.len()];
        if xs.is_empty() {
            return Ok(out);
        }
        let zs = self.matvec_many(params.input_weights, xs)?;
        let width = 4 * params.hidden_dim;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..xs.len()).rev())
        } else {
            Box::new(0..xs.len())
        };
        for t in order {
            let zx = self.slice(zs, t * width, width)?;
            (h, c) = self.lstm_step_projected(&nodes, zx, h, c)?;
            out[t] = h;
        }
        Ok(out)
    }

    /// Per-position concatenation of forward and backward hidden states.
    pub fn bilstm(
        &mut self,
        forward: &LstmParams,
        backward: &LstmParams,
        xs: &[NodeId],
    ) -> Result<Vec<NodeId>, NnError> {
        if xs.is_empty() {
            return Err(NnError::EmptyInput("bilstm"));
        }
        let fwd = self.lstm_sequence(forward, xs, false)?;
        let bwd = self.lstm_sequence(backward, xs, true)?;
        fwd.iter()
            .zip(&bwd)
            .map(|(&f, &b)| self.concat(&[f, b]))
            .collect()
    }

    pub fn affine(&mut self, layer: &Dense, x: NodeId) -> Result<NodeId, NnError> {
        let wx = self.matvec(layer.weights, x)?;
        let b = self.param(layer.bias);
        self.add(wx, b)
    }

    /// `tanh(W x + b)`
    pub fn feedforward(&mut self, layer: &Dense, x: NodeId) -> Result<NodeId, NnError> {
        let a = self.affine(layer, x)?;
        self.tanh(a)
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - p)` so the
    /// expectation is unchanged; identity when not training.
    pub fn dropout(
        &mut self,
        x: NodeId,
        p: f64,
        rng: &mut Rng,
        training: bool,
    ) -> Result<NodeId, NnError> {
        check_dropout(p)?;
        if !training || p == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(self.value(x).len(), p, rng);
        self.scale(x, mask)
    }
}

fn check_dropout(p: f64) -> Result<(), NnError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NnError::InvalidConfig(format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    Ok(())
}

fn dropout_mask(n: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n)
        .map(|_| if rng.next_f64() < p { 0.0 } else { keep })
        .collect()
}

pub fn lstm_step(
    store: &ParamStore,
    params: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let mut tape = Tape::new(store);
    let nodes = tape.lstm_nodes(params);
    let (x, h, c) = (
        tape.input(x.to_vec()),
        tape.input(h_prev.to_vec()),
        tape.input(c_prev.to_vec()),
    );
    let (h, c) = tape.lstm_step(&nodes, x, h, c)?;
    Ok((tape.value(h).to_vec(), tape.value(c).to_vec()))
}

pub fn bilstm(
    store: &ParamStore,
    forward: &LstmParams,
    backward: &LstmParams,
    xs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, NnError> {
    let mut tape = Tape::new(store);
    let inputs: Vec<NodeId> = xs.iter().map(|x| tape.input(x.clone())).collect();
    let out = tape.bilstm(forward, backward, &inputs)?;
    Ok(out.iter().map(|&n| tape.value(n).to_vec()).collect())
}

pub fn feedforward(store: &ParamStore, layer: &Dense, x: &[f64]) -> Result<Vec<f64>, NnError> {
    let mut tape = Tape::new(store);
    let x = tape.input(x.to_vec());
    let y = tape.feedforward(layer, x)?;
    Ok(tape.value(y).to_vec())
}

pub fn dropout(x: &[f64], p: f64, rng: &mut Rng, training: bool) -> Result<Vec<f64>, NnError> {
    check_dropout(p)?;
    if !training || p == 0.0 {
        return Ok(x.to_vec());
    }
    let mask = dropout_mask(x.len(), p, rng);
    Ok(x.iter().zip(mask).map(|(v, m)| v * m).collect())
}
