use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::init::uniform_tensor;
use crate::tensor::Tensor;

/// Additive attention with a learned context vector:
/// alpha = masked_softmax(omega . tanh(W h + b)).
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub input_dim: usize,
    pub proj_dim: usize,
    pub w: NodeId,
    pub b: NodeId,
    pub omega: NodeId,
}

impl AttentionParams {
    pub fn param_ids(&self) -> Vec<NodeId> {
        vec![self.w, self.b, self.omega]
    }
}

pub fn attention_template(
    prefix: &str,
    input_dim: usize,
    proj_dim: usize,
    rng: &mut impl Rng,
    half_range: f64,
) -> Vec<(String, Tensor)> {
    vec![
        (format!("{prefix}.w"), uniform_tensor(rng, vec![proj_dim, input_dim], half_range)),
        (format!("{prefix}.b"), uniform_tensor(rng, vec![proj_dim], half_range)),
        (format!("{prefix}.omega"), uniform_tensor(rng, vec![proj_dim], half_range)),
    ]
}

pub fn attention_from_nodes(
    input_dim: usize,
    proj_dim: usize,
    ids: &mut impl Iterator<Item = NodeId>,
) -> AttentionParams {
    let mut next = || ids.next().expect("attention node list too short");
    AttentionParams { input_dim, proj_dim, w: next(), b: next(), omega: next() }
}

/// Pool a sequence of state vectors into one vector by attention weights.
/// Returns (pooled vector, weight vector); masked positions get weight
/// exactly 0.
pub fn attention_pool(
    g: &mut Graph,
    states: &[NodeId],
    p: &AttentionParams,
    mask: &[bool],
) -> Result<(NodeId, NodeId)> {
    if states.is_empty() {
        return Err(Error::EmptySequence { op: "attention_pool" });
    }
    if mask.len() != states.len() {
        return Err(Error::ShapeMismatch {
            op: "attention_pool",
            detail: format!("{} states vs {} mask entries", states.len(), mask.len()),
        });
    }
    let mut scores = Vec::with_capacity(states.len());
    for &h in states {
        let lin = g.matvec(p.w, h)?;
        let aff = g.add(lin, p.b)?;
        let u = g.tanh(aff)?;
        scores.push(g.dot(p.omega, u)?);
    }
    let logits = g.concat(&scores)?;
    let alpha = g.masked_softmax(logits, mask)?;
    let stacked = g.stack_rows(states)?;
    let alpha_row = g.reshape(alpha, vec![1, states.len()])?;
    let pooled_row = g.matmul(alpha_row, stacked)?;
    let dim = g.value(states[0]).elems();
    let pooled = g.reshape(pooled_row, vec![dim])?;
    Ok((pooled, alpha))
}
