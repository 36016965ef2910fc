//! Reverse-mode differentiation over a recorded tape of vector operations.
//!
//! A [`Tape`] borrows the parameter store immutably while the forward pass is
//! recorded; [`Tape::backward`] then produces a [`Gradients`] value that is
//! applied to the store once the tape has been dropped.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{axpy, dot, ParamId, ParamStore};
use super::NnError;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

/// Local derivative of a scalar-valued node with respect to its inputs,
/// computed during the forward pass. Used for fused ops whose backward rule
/// is known in closed form (the CRF likelihood).
#[derive(Debug, Clone, Default)]
pub struct LocalGradient {
    pub inputs: Vec<(NodeId, Vec<f64>)>,
    pub params: Vec<(ParamId, Vec<f64>)>,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Row { table: ParamId, row: usize },
    MatVec { w: ParamId, x: usize },
    MatVecMany { w: ParamId, xs: Vec<usize> },
    Add(usize, usize),
    Mul(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Concat(Vec<usize>),
    Slice { x: usize, start: usize },
    Scale { x: usize, factors: Vec<f64> },
    Sum(usize),
    Fused(LocalGradient),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    id: u64,
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn idx(&self, node: NodeId) -> Result<usize, NnError> {
        if node.tape != self.id || node.index >= self.nodes.len() {
            return Err(NnError::UnrecordedNode);
        }
        Ok(node.index)
    }

    pub fn value(&self, node: NodeId) -> &[f64] {
        let i = self.idx(node).expect("node belongs to another tape");
        &self.nodes[i].value
    }

    /// A constant; receives no gradient.
    pub fn input(&mut self, values: Vec<f64>) -> NodeId {
        self.push(values, Op::Input)
    }

    /// The whole parameter tensor, flattened.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        let value = self.params.get(id).data().to_vec();
        self.push(value, Op::Param(id))
    }

    /// One row of a 2-d parameter (embedding lookup).
    pub fn row(&mut self, table: ParamId, row: usize) -> Result<NodeId, NnError> {
        let t = self.params.get(table);
        if row >= t.rows() {
            return Err(NnError::Shape(format!(
                "row {row} out of range for {} with {} rows",
                self.params.name(table),
                t.rows()
            )));
        }
        let value = t.row(row).to_vec();
        Ok(self.push(value, Op::Row { table, row }))
    }

    /// `W x` for a 2-d parameter `W`.
    pub fn matvec(&mut self, w: ParamId, x: NodeId) -> Result<NodeId, NnError> {
        let xi = self.idx(x)?;
        let wt = self.params.get(w);
        let xv = &self.nodes[xi].value;
        if wt.shape().len() != 2 || wt.cols() != xv.len() {
            return Err(NnError::Shape(format!(
                "{} has shape {:?}, input has length {}",
                self.params.name(w),
                wt.shape(),
                xv.len()
            )));
        }
        let value = (0..wt.rows()).map(|r| dot(wt.row(r), xv)).collect();
        Ok(self.push(value, Op::MatVec { w, x: xi }))
    }

    /// `w · x` for every `x`, concatenated. Each weight row is read once for
    /// the whole batch.
    pub fn matvec_many(&mut self, w: ParamId, xs: &[NodeId]) -> Result<NodeId, NnError> {
        let xi: Vec<usize> = xs.iter().map(|&x| self.idx(x)).collect::<Result<_, _>>()?;
        let wt = self.params.get(w);
        if wt.shape().len() != 2 {
            return Err(NnError::Shape(format!("{} is not a matrix", self.params.name(w))));
        }
        if let Some(&bad) = xi.iter().find(|&&i| self.nodes[i].value.len() != wt.cols()) {
            return Err(NnError::Shape(format!(
                "{} has shape {:?}, input has length {}",
                self.params.name(w),
                wt.shape(),
                self.nodes[bad].value.len()
            )));
        }
        let rows = wt.rows();
        let mut value = vec![0.0; rows * xi.len()];
        for r in 0..rows {
            let wr = wt.row(r);
            for (t, &x) in xi.iter().enumerate() {
                value[t * rows + r] = dot(wr, &self.nodes[x].value);
            }
        }
        Ok(self.push(value, Op::MatVecMany { w, xs: xi }))
    }

    fn same_len(&self, a: usize, b: usize, what: &str) -> Result<(), NnError> {
        let (la, lb) = (self.nodes[a].value.len(), self.nodes[b].value.len());
        if la != lb {
            return Err(NnError::Shape(format!("{what}: lengths {la} and {lb}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (a, b) = (self.idx(a)?, self.idx(b)?);
        self.same_len(a, b, "add")?;
        let value = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (a, b) = (self.idx(a)?, self.idx(b)?);
        self.same_len(a, b, "mul")?;
        let value = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let xi = self.idx(x)?;
        let value = self.nodes[xi].value.iter().map(|&v| sigmoid(v)).collect();
        Ok(self.push(value, Op::Sigmoid(xi)))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let xi = self.idx(x)?;
        let value = self.nodes[xi].value.iter().map(|v| v.tanh()).collect();
        Ok(self.push(value, Op::Tanh(xi)))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, NnError> {
        let idx = parts
            .iter()
            .map(|&p| self.idx(p))
            .collect::<Result<Vec<_>, _>>()?;
        let mut value = Vec::with_capacity(idx.iter().map(|&i| self.nodes[i].value.len()).sum());
        for &i in &idx {
            value.extend_from_slice(&self.nodes[i].value);
        }
        Ok(self.push(value, Op::Concat(idx)))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, NnError> {
        let xi = self.idx(x)?;
        let n = self.nodes[xi].value.len();
        if start + len > n {
            return Err(NnError::Shape(format!(
                "slice {start}..{} of length {n}",
                start + len
            )));
        }
        let value = self.nodes[xi].value[start..start + len].to_vec();
        Ok(self.push(value, Op::Slice { x: xi, start }))
    }

    /// Elementwise product with constant factors (dropout masks).
    pub fn scale(&mut self, x: NodeId, factors: Vec<f64>) -> Result<NodeId, NnError> {
        let xi = self.idx(x)?;
        if factors.len() != self.nodes[xi].value.len() {
            return Err(NnError::Shape(format!(
                "scale: {} factors for length {}",
                factors.len(),
                self.nodes[xi].value.len()
            )));
        }
        let value = self.nodes[xi]
            .value
            .iter()
            .zip(&factors)
            .map(|(v, f)| v * f)
            .collect();
        Ok(self.push(value, Op::Scale { x: xi, factors }))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let xi = self.idx(x)?;
        let total = self.nodes[xi].value.iter().sum();
        Ok(self.push(vec![total], Op::Sum(xi)))
    }

    /// Record a scalar whose derivatives were computed by the caller.
    pub fn fused_scalar(&mut self, value: f64, local: LocalGradient) -> Result<NodeId, NnError> {
        for (node, g) in &local.inputs {
            let i = self.idx(*node)?;
            if g.len() != self.nodes[i].value.len() {
                return Err(NnError::Shape("fused gradient length mismatch".into()));
            }
        }
        for (p, g) in &local.params {
            if g.len() != self.params.get(*p).len() {
                return Err(NnError::Shape("fused parameter gradient length mismatch".into()));
            }
        }
        Ok(self.push(vec![value], Op::Fused(local)))
    }

    /// Propagate d(loss)/d(node) back to every parameter reachable from `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NnError> {
        let root = self.idx(loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(NnError::NotScalar(self.nodes[root].value.len()));
        }
        let mut grads = Gradients::new(self.params);
        let mut adj: Vec<Option<Vec<f64>>> = (0..=root).map(|_| None).collect();
        adj[root] = Some(vec![1.0]);

        fn acc(adj: &mut [Option<Vec<f64>>], i: usize, len: usize) -> &mut Vec<f64> {
            adj[i].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=root).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => grads.add_dense(*p, &g),
                Op::Row { table, row } => grads.add_row(*table, *row, &g),
                Op::MatVec { w, x } => {
                    let wt = self.params.get(*w);
                    let xv = &self.nodes[*x].value;
                    let dw = grads.dense_mut(*w);
                    let cols = xv.len();
                    for (r, &gr) in g.iter().enumerate() {
                        if gr != 0.0 {
                            axpy(gr, xv, &mut dw[r * cols..(r + 1) * cols]);
                        }
                    }
                    let dx = acc(&mut adj, *x, cols);
                    for (r, &gr) in g.iter().enumerate() {
                        if gr != 0.0 {
                            axpy(gr, wt.row(r), dx);
                        }
                    }
                }
                Op::MatVecMany { w, xs } => {
                    let wt = self.params.get(*w);
                    let (rows, cols) = (wt.rows(), wt.cols());
                    let dw = grads.dense_mut(*w);
                    for r in 0..rows {
                        let dwr = &mut dw[r * cols..(r + 1) * cols];
                        for (t, &x) in xs.iter().enumerate() {
                            let gr = g[t * rows + r];
                            if gr != 0.0 {
                                axpy(gr, &self.nodes[x].value, dwr);
                            }
                        }
                    }
                    let mut dxs: Vec<Vec<f64>> = xs.iter().map(|_| vec![0.0; cols]).collect();
                    for r in 0..rows {
                        let wr = wt.row(r);
                        for (t, dx) in dxs.iter_mut().enumerate() {
                            let gr = g[t * rows + r];
                            if gr != 0.0 {
                                axpy(gr, wr, dx);
                            }
                        }
                    }
                    for (&x, dx) in xs.iter().zip(dxs) {
                        axpy(1.0, &dx, acc(&mut adj, x, cols));
                    }
                }
                Op::Add(a, b) => {
                    for &k in [a, b].iter() {
                        let d = acc(&mut adj, *k, g.len());
                        axpy(1.0, &g, d);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let da: Vec<f64> = g.iter().zip(vb).map(|(g, v)| g * v).collect();
                    let db: Vec<f64> = g.iter().zip(va).map(|(g, v)| g * v).collect();
                    axpy(1.0, &da, acc(&mut adj, *a, g.len()));
                    axpy(1.0, &db, acc(&mut adj, *b, g.len()));
                }
                Op::Sigmoid(x) => {
                    let d = acc(&mut adj, *x, g.len());
                    for ((di, gi), y) in d.iter_mut().zip(&g).zip(&node.value) {
                        *di += gi * y * (1.0 - y);
                    }
                }
                Op::Tanh(x) => {
                    let d = acc(&mut adj, *x, g.len());
                    for ((di, gi), y) in d.iter_mut().zip(&g).zip(&node.value) {
                        *di += gi * (1.0 - y * y);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.nodes[p].value.len();
                        axpy(1.0, &g[off..off + n], acc(&mut adj, p, n));
                        off += n;
                    }
                }
                Op::Slice { x, start } => {
                    let n = self.nodes[*x].value.len();
                    let d = acc(&mut adj, *x, n);
                    axpy(1.0, &g, &mut d[*start..*start + g.len()]);
                }
                Op::Scale { x, factors } => {
                    let d = acc(&mut adj, *x, g.len());
                    for ((di, gi), f) in d.iter_mut().zip(&g).zip(factors) {
                        *di += gi * f;
                    }
                }
                Op::Sum(x) => {
                    let n = self.nodes[*x].value.len();
                    let d = acc(&mut adj, *x, n);
                    for di in d.iter_mut() {
                        *di += g[0];
                    }
                }
                Op::Fused(local) => {
                    for (inp, lg) in &local.inputs {
                        axpy(g[0], lg, acc(&mut adj, inp.index, lg.len()));
                    }
                    for (p, lg) in &local.params {
                        let d = grads.dense_mut(*p);
                        axpy(g[0], lg, d);
                    }
                }
            }
        }
        Ok(grads)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient buffer for one parameter. Embedding tables only accumulate the
/// rows that were looked up.
#[derive(Debug, Clone, PartialEq)]
pub enum Grad {
    Dense(Vec<f64>),
    Rows { width: usize, rows: BTreeMap<usize, Vec<f64>> },
}

impl Grad {
    fn norm_sq(&self) -> f64 {
        match self {
            Grad::Dense(v) => v.iter().map(|x| x * x).sum(),
            Grad::Rows { rows, .. } => rows.values().flatten().map(|x| x * x).sum(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Grad::Dense(v) => v.iter().all(|x| x.is_finite()),
            Grad::Rows { rows, .. } => rows.values().flatten().all(|x| x.is_finite()),
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            Grad::Dense(v) => v.iter_mut().for_each(|x| *x *= s),
            Grad::Rows { rows, .. } => rows.values_mut().flatten().for_each(|x| *x *= s),
        }
    }

    /// Derivative with respect to the flat element `index`.
    pub fn at(&self, index: usize) -> f64 {
        match self {
            Grad::Dense(v) => v[index],
            Grad::Rows { width, rows } => rows
                .get(&(index / width))
                .map(|r| r[index % width])
                .unwrap_or(0.0),
        }
    }
}

/// Gradients for every parameter in a store; parameters the loss does not
/// reach have no buffer and an implicit gradient of zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    shapes: Vec<(usize, usize)>,
    slots: Vec<Option<Grad>>,
}

impl Gradients {
    pub fn new(store: &ParamStore) -> Self {
        let shapes = store.iter().map(|(_, _, t)| (t.len(), t.cols())).collect();
        Gradients {
            shapes,
            slots: vec![None; store.len()],
        }
    }

    fn dense_mut(&mut self, p: ParamId) -> &mut Vec<f64> {
        let (len, width) = self.shapes[p.0];
        let slot = &mut self.slots[p.0];
        if let Some(Grad::Rows { rows, .. }) = slot {
            let mut dense = vec![0.0; len];
            for (r, v) in rows.iter() {
                dense[r * width..(r + 1) * width].copy_from_slice(v);
            }
            *slot = Some(Grad::Dense(dense));
        }
        match slot.get_or_insert_with(|| Grad::Dense(vec![0.0; len])) {
            Grad::Dense(v) => v,
            Grad::Rows { .. } => unreachable!(),
        }
    }

    fn add_dense(&mut self, p: ParamId, g: &[f64]) {
        axpy(1.0, g, self.dense_mut(p));
    }

    fn add_row(&mut self, p: ParamId, row: usize, g: &[f64]) {
        let width = self.shapes[p.0].1;
        match self.slots[p.0].get_or_insert_with(|| Grad::Rows {
            width,
            rows: BTreeMap::new(),
        }) {
            Grad::Dense(v) => axpy(1.0, g, &mut v[row * width..(row + 1) * width]),
            Grad::Rows { rows, .. } => {
                axpy(1.0, g, rows.entry(row).or_insert_with(|| vec![0.0; width]))
            }
        }
    }

    pub fn get(&self, p: ParamId) -> Option<&Grad> {
        self.slots[p.0].as_ref()
    }

    /// Flat derivative for one element; zero when the parameter was not reached.
    pub fn at(&self, p: ParamId, index: usize) -> f64 {
        self.get(p).map(|g| g.at(index)).unwrap_or(0.0)
    }

    pub fn dense(&self, p: ParamId) -> Vec<f64> {
        let (len, _) = self.shapes[p.0];
        (0..len).map(|i| self.at(p, i)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .map(Grad::norm_sq)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.slots.iter_mut().flatten().for_each(|g| g.scale(s));
    }

    /// First parameter whose gradient holds a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<ParamId> {
        self.slots
            .iter()
            .enumerate()
            .find(|(_, g)| g.as_ref().is_some_and(|g| !g.is_finite()))
            .map(|(i, _)| ParamId(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Grad)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}
