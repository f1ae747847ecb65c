use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on the tape. Only valid for the graph that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    MatMul(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    Dot(NodeId, NodeId),
    Concat(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    Reshape(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Softmax(NodeId),
    // Masked entries hold output 0.0 exactly; backward needs no stored mask
    // because dx_i = y_i * (...) is already 0 there.
    MaskedSoftmax(NodeId),
    GradReverse { input: NodeId, eta: f64 },
    EmbedRow { table: NodeId, row: usize },
}

#[derive(Debug)]
struct NodeData {
    op: Op,
    value: Tensor,
    grad: Vec<f64>,
}

/// Log inputs are clamped at this floor so probabilities arbitrarily close to
/// zero cannot produce -inf.
pub const LOG_FLOOR: f64 = 1e-12;

/// Append-only computation tape. Parameters are recorded first and sealed;
/// `reset_to_params` drops everything built after the seal so the same
/// parameter nodes survive across training steps.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<NodeData>,
    param_watermark: usize,
    grl_sign_bug: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), param_watermark: 0, grl_sign_bug: false }
    }

    /// Fault injection for harness validation: flips the reversal layer's
    /// backward factor from -eta to +eta so a gradient check must fail.
    pub fn inject_grl_sign_bug(&mut self, enabled: bool) {
        self.grl_sign_bug = enabled;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let grad = vec![0.0; value.elems()];
        self.nodes.push(NodeData { op, value, grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Record a constant input. Constants created after `seal_params` are
    /// dropped by `reset_to_params` like any other non-parameter node.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(Op::Leaf, value, "constant")
    }

    /// Record a trainable parameter. Must be called before `seal_params`.
    pub fn param(&mut self, value: Tensor) -> Result<NodeId> {
        assert!(
            self.param_watermark == 0 || self.nodes.len() < self.param_watermark,
            "param created after seal_params"
        );
        self.push(Op::Leaf, value, "param")
    }

    /// Freeze the current tape prefix as the parameter section.
    pub fn seal_params(&mut self) {
        self.param_watermark = self.nodes.len();
    }

    /// Drop all nodes built after the parameter seal. Parameter values and
    /// accumulated gradients are untouched.
    pub fn reset_to_params(&mut self) {
        self.nodes.truncate(self.param_watermark);
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    /// Overwrite a leaf's value in place. Shape must match; used by the
    /// optimizer and by checkpoint restore.
    pub fn set_value(&mut self, id: NodeId, data: &[f64]) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if node.value.elems() != data.len() {
            return Err(Error::ShapeMismatch {
                op: "set_value",
                detail: format!("node has {} elements, got {}", node.value.elems(), data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "set_value" });
        }
        node.value.data_mut().copy_from_slice(data);
        Ok(())
    }

    fn shape_of(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn data_of(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    fn same_shape(&self, name: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::ShapeMismatch {
                op: name,
                detail: format!("{:?} vs {:?}", self.shape_of(a), self.shape_of(b)),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let data: Vec<f64> =
            self.data_of(a).iter().zip(self.data_of(b)).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        self.push(Op::Add(a, b), value, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let data: Vec<f64> =
            self.data_of(a).iter().zip(self.data_of(b)).map(|(x, y)| x - y).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        self.push(Op::Sub(a, b), value, "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let data: Vec<f64> =
            self.data_of(a).iter().zip(self.data_of(b)).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        self.push(Op::Mul(a, b), value, "mul")
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        if !c.is_finite() {
            return Err(Error::NonFinite { op: "scale" });
        }
        let data: Vec<f64> = self.data_of(a).iter().map(|x| c * x).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        self.push(Op::Scale(a, c), value, "scale")
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<f64> = self.data_of(a).iter().map(|x| x.tanh()).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        self.push(Op::Tanh(a), value, "tanh")
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<f64> = self.data_of(a).iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        self.push(Op::Sigmoid(a), value, "sigmoid")
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<f64> = self.data_of(a).iter().map(|x| x.exp()).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        self.push(Op::Exp(a), value, "exp")
    }

    /// Natural log of the input clamped below at `LOG_FLOOR`.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<f64> = self.data_of(a).iter().map(|x| x.max(LOG_FLOOR).ln()).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        self.push(Op::Log(a), value, "log")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("{sa:?} x {sb:?}"),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.data_of(a), self.data_of(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = da[i * k + p];
                for j in 0..n {
                    out[i * n + j] += aip * db[p * n + j];
                }
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        self.push(Op::MatMul(a, b), value, "matmul")
    }

    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> Result<NodeId> {
        let (sa, sx) = (self.shape_of(a), self.shape_of(x));
        if sa.len() != 2 || sx.len() != 1 || sa[1] != sx[0] {
            return Err(Error::ShapeMismatch {
                op: "matvec",
                detail: format!("{sa:?} x {sx:?}"),
            });
        }
        let (m, k) = (sa[0], sa[1]);
        let (da, dx) = (self.data_of(a), self.data_of(x));
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for p in 0..k {
                acc += da[i * k + p] * dx[p];
            }
            out[i] = acc;
        }
        let value = Tensor::vector(out)?;
        self.push(Op::MatVec(a, x), value, "matvec")
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa.len() != 1 || sa != sb {
            return Err(Error::ShapeMismatch { op: "dot", detail: format!("{sa:?} . {sb:?}") });
        }
        let v: f64 = self.data_of(a).iter().zip(self.data_of(b)).map(|(x, y)| x * y).sum();
        self.push(Op::Dot(a, b), Tensor::scalar(v), "dot")
    }

    /// Concatenate scalars and vectors into one vector, in argument order.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptySequence { op: "concat" });
        }
        let mut data = Vec::new();
        for &p in parts {
            if self.shape_of(p).len() > 1 {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    detail: format!("rank {} part", self.shape_of(p).len()),
                });
            }
            data.extend_from_slice(self.data_of(p));
        }
        let value = Tensor::vector(data)?;
        self.push(Op::Concat(parts.to_vec()), value, "concat")
    }

    /// Stack equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(Error::EmptySequence { op: "stack_rows" });
        }
        let cols = match self.shape_of(rows[0]) {
            [c] => *c,
            s => {
                return Err(Error::ShapeMismatch {
                    op: "stack_rows",
                    detail: format!("row 0 has shape {s:?}"),
                })
            }
        };
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, &r) in rows.iter().enumerate() {
            if self.shape_of(r) != [cols] {
                return Err(Error::ShapeMismatch {
                    op: "stack_rows",
                    detail: format!("row {i} has shape {:?}, want [{cols}]", self.shape_of(r)),
                });
            }
            data.extend_from_slice(self.data_of(r));
        }
        let value = Tensor::matrix(rows.len(), cols, data)?;
        self.push(Op::StackRows(rows.to_vec()), value, "stack_rows")
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let elems: usize = shape.iter().product();
        if elems != self.data_of(a).len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                detail: format!(
                    "cannot view {} elements as {shape:?}",
                    self.data_of(a).len()
                ),
            });
        }
        let value = Tensor::new(shape, self.data_of(a).to_vec())?;
        self.push(Op::Reshape(a), value, "reshape")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v: f64 = self.data_of(a).iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(v), "sum")
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.data_of(a).len() as f64;
        let v: f64 = self.data_of(a).iter().sum::<f64>() / n;
        self.push(Op::Mean(a), Tensor::scalar(v), "mean")
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        if self.shape_of(a).len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "softmax",
                detail: format!("want vector, got {:?}", self.shape_of(a)),
            });
        }
        let x = self.data_of(a);
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let value = Tensor::vector(exps.into_iter().map(|e| e / z).collect())?;
        self.push(Op::Softmax(a), value, "softmax")
    }

    /// Softmax restricted to unmasked positions; masked positions get weight
    /// exactly 0.0.
    pub fn masked_softmax(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId> {
        if self.shape_of(a).len() != 1 || self.shape_of(a)[0] != mask.len() {
            return Err(Error::ShapeMismatch {
                op: "masked_softmax",
                detail: format!("logits {:?} vs mask length {}", self.shape_of(a), mask.len()),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::AllMasked { op: "masked_softmax" });
        }
        let x = self.data_of(a);
        let max = x
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x
            .iter()
            .zip(mask)
            .map(|(v, &m)| if m { (v - max).exp() } else { 0.0 })
            .collect();
        let z: f64 = exps.iter().sum();
        let value = Tensor::vector(exps.into_iter().map(|e| e / z).collect())?;
        self.push(Op::MaskedSoftmax(a), value, "masked_softmax")
    }

    /// Identity in the forward pass; multiplies the upstream gradient by
    /// exactly `-eta` in the backward pass.
    pub fn grad_reverse(&mut self, a: NodeId, eta: f64) -> Result<NodeId> {
        if !eta.is_finite() {
            return Err(Error::NonFinite { op: "grad_reverse" });
        }
        let value = self.nodes[a.0].value.clone();
        self.push(Op::GradReverse { input: a, eta }, value, "grad_reverse")
    }

    /// Copy one row out of a parameter matrix (embedding lookup).
    pub fn embed_row(&mut self, table: NodeId, row: usize) -> Result<NodeId> {
        let shape = self.shape_of(table);
        if shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "embed_row",
                detail: format!("table has shape {shape:?}"),
            });
        }
        let (rows, cols) = (shape[0], shape[1]);
        if row >= rows {
            return Err(Error::TokenOutOfRange { id: row as u32, vocab: rows });
        }
        let data = self.data_of(table)[row * cols..(row + 1) * cols].to_vec();
        let value = Tensor::vector(data)?;
        self.push(Op::EmbedRow { table, row }, value, "embed_row")
    }

    /// Reverse-mode sweep from a scalar root. Gradients accumulate into each
    /// node's persistent `grad` buffer, so two calls without `zero_grads`
    /// add together.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        let root_value = &self.nodes[root.0].value;
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot { elems: root_value.elems() });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let g = match adj[i].take() {
                Some(g) => g,
                None => continue,
            };
            // Accumulate this sweep's adjoint into the node's grad buffer.
            for (dst, src) in self.nodes[i].grad.iter_mut().zip(&g) {
                *dst += src;
            }
            let nodes = &self.nodes;
            match &nodes[i].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    axpy(&mut adj, *a, &g, 1.0, nodes);
                    axpy(&mut adj, *b, &g, 1.0, nodes);
                }
                Op::Sub(a, b) => {
                    axpy(&mut adj, *a, &g, 1.0, nodes);
                    axpy(&mut adj, *b, &g, -1.0, nodes);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da: Vec<f64> =
                        g.iter().zip(nodes[b.0].value.data()).map(|(g, y)| g * y).collect();
                    let db: Vec<f64> =
                        g.iter().zip(nodes[a.0].value.data()).map(|(g, x)| g * x).collect();
                    axpy(&mut adj, a, &da, 1.0, nodes);
                    axpy(&mut adj, b, &db, 1.0, nodes);
                }
                Op::Scale(a, c) => {
                    axpy(&mut adj, *a, &g, *c, nodes);
                }
                Op::Tanh(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(nodes[i].value.data())
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect();
                    axpy(&mut adj, *a, &da, 1.0, nodes);
                }
                Op::Sigmoid(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(nodes[i].value.data())
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    axpy(&mut adj, *a, &da, 1.0, nodes);
                }
                Op::Exp(a) => {
                    let da: Vec<f64> =
                        g.iter().zip(nodes[i].value.data()).map(|(g, y)| g * y).collect();
                    axpy(&mut adj, *a, &da, 1.0, nodes);
                }
                Op::Log(a) => {
                    // Zero below the clamp, where the forward value is flat.
                    let da: Vec<f64> = g
                        .iter()
                        .zip(nodes[a.0].value.data())
                        .map(|(g, x)| if *x > LOG_FLOOR { g / x } else { 0.0 })
                        .collect();
                    axpy(&mut adj, *a, &da, 1.0, nodes);
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let sa = nodes[a.0].value.shape();
                    let sb = nodes[b.0].value.shape();
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    let da_src = nodes[a.0].value.data();
                    let db_src = nodes[b.0].value.data();
                    // dA = G B^T, dB = A^T G
                    let mut da = vec![0.0; m * k];
                    let mut db = vec![0.0; k * n];
                    for i2 in 0..m {
                        for j in 0..n {
                            let gij = g[i2 * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                da[i2 * k + p] += gij * db_src[p * n + j];
                                db[p * n + j] += gij * da_src[i2 * k + p];
                            }
                        }
                    }
                    axpy(&mut adj, a, &da, 1.0, nodes);
                    axpy(&mut adj, b, &db, 1.0, nodes);
                }
                Op::MatVec(a, x) => {
                    let (a, x) = (*a, *x);
                    let sa = nodes[a.0].value.shape();
                    let (m, k) = (sa[0], sa[1]);
                    let da_src = nodes[a.0].value.data();
                    let dx_src = nodes[x.0].value.data();
                    let mut da = vec![0.0; m * k];
                    let mut dx = vec![0.0; k];
                    for i2 in 0..m {
                        let gi = g[i2];
                        if gi == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i2 * k + p] += gi * dx_src[p];
                            dx[p] += gi * da_src[i2 * k + p];
                        }
                    }
                    axpy(&mut adj, a, &da, 1.0, nodes);
                    axpy(&mut adj, x, &dx, 1.0, nodes);
                }
                Op::Dot(a, b) => {
                    let (a, b) = (*a, *b);
                    let da: Vec<f64> = nodes[b.0].value.data().iter().map(|y| g[0] * y).collect();
                    let db: Vec<f64> = nodes[a.0].value.data().iter().map(|x| g[0] * x).collect();
                    axpy(&mut adj, a, &da, 1.0, nodes);
                    axpy(&mut adj, b, &db, 1.0, nodes);
                }
                Op::Concat(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let len = nodes[p.0].value.elems();
                        let slice = g[offset..offset + len].to_vec();
                        axpy(&mut adj, p, &slice, 1.0, nodes);
                        offset += len;
                    }
                }
                Op::StackRows(rows) => {
                    let rows = rows.clone();
                    let cols = nodes[rows[0].0].value.elems();
                    for (r, row) in rows.into_iter().enumerate() {
                        let slice = g[r * cols..(r + 1) * cols].to_vec();
                        axpy(&mut adj, row, &slice, 1.0, nodes);
                    }
                }
                Op::Reshape(a) => {
                    axpy(&mut adj, *a, &g, 1.0, nodes);
                }
                Op::Sum(a) => {
                    let a = *a;
                    let da = vec![g[0]; nodes[a.0].value.elems()];
                    axpy(&mut adj, a, &da, 1.0, nodes);
                }
                Op::Mean(a) => {
                    let a = *a;
                    let n = nodes[a.0].value.elems() as f64;
                    let da = vec![g[0] / n; nodes[a.0].value.elems()];
                    axpy(&mut adj, a, &da, 1.0, nodes);
                }
                Op::Softmax(a) | Op::MaskedSoftmax(a) => {
                    // dx_i = y_i * (g_i - sum_j g_j y_j); masked entries have
                    // y_i == 0 and therefore dx_i == 0.
                    let a = *a;
                    let y = nodes[i].value.data();
                    let s: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                    let da: Vec<f64> = g.iter().zip(y).map(|(g, y)| y * (g - s)).collect();
                    axpy(&mut adj, a, &da, 1.0, nodes);
                }
                Op::GradReverse { input, eta } => {
                    // Exactly one multiply per element.
                    let (input, eta) = (*input, *eta);
                    let factor = if self.grl_sign_bug { eta } else { -eta };
                    let da: Vec<f64> = g.iter().map(|g| factor * g).collect();
                    axpy(&mut adj, input, &da, 1.0, nodes);
                }
                Op::EmbedRow { table, row } => {
                    let (table, row) = (*table, *row);
                    let cols = nodes[table.0].value.shape()[1];
                    let slot = adj_slot(&mut adj, table, nodes);
                    for (dst, src) in slot[row * cols..(row + 1) * cols].iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Get (allocating on first touch) the adjoint slot for `id`.
fn adj_slot<'a>(
    adj: &'a mut [Option<Vec<f64>>],
    id: NodeId,
    nodes: &[NodeData],
) -> &'a mut Vec<f64> {
    adj[id.0].get_or_insert_with(|| vec![0.0; nodes[id.0].value.elems()])
}

/// adj[id] += scale * contribution
fn axpy(
    adj: &mut [Option<Vec<f64>>],
    id: NodeId,
    contribution: &[f64],
    scale: f64,
    nodes: &[NodeData],
) {
    let slot = adj_slot(adj, id, nodes);
    for (dst, src) in slot.iter_mut().zip(contribution) {
        *dst += scale * src;
    }
}
