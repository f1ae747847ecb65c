use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::init::uniform_tensor;
use crate::tensor::Tensor;

/// Output behavior of a perceptron head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// Softmax over labels (classifier and prober).
    Probabilities,
    /// Single sigmoid score in (0, 1) (domain discriminator).
    Score,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadDims {
    pub input: usize,
    /// Hidden layer widths, applied with tanh between input and output.
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl HeadDims {
    /// Chain of (in, out) dims for each affine layer.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output));
        dims
    }
}

#[derive(Debug, Clone)]
pub struct HeadParams {
    pub dims: HeadDims,
    pub kind: HeadKind,
    /// (weight, bias) per affine layer, outermost last.
    pub layers: Vec<(NodeId, NodeId)>,
}

impl HeadParams {
    pub fn param_ids(&self) -> Vec<NodeId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

pub fn head_template(
    prefix: &str,
    dims: &HeadDims,
    rng: &mut impl Rng,
    half_range: f64,
) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    for (i, (din, dout)) in dims.layer_dims().into_iter().enumerate() {
        out.push((
            format!("{prefix}.l{i}.w"),
            uniform_tensor(rng, vec![dout, din], half_range),
        ));
        out.push((format!("{prefix}.l{i}.b"), uniform_tensor(rng, vec![dout], half_range)));
    }
    out
}

pub fn head_from_nodes(
    dims: HeadDims,
    kind: HeadKind,
    ids: &mut impl Iterator<Item = NodeId>,
) -> HeadParams {
    let n_layers = dims.layer_dims().len();
    let layers = (0..n_layers)
        .map(|_| {
            let w = ids.next().expect("head node list too short");
            let b = ids.next().expect("head node list too short");
            (w, b)
        })
        .collect();
    HeadParams { dims, kind, layers }
}

/// Run the head on a document vector. Probability heads return a vector over
/// labels (entries > 0, sum 1); score heads return a scalar in (0, 1).
pub fn head_forward(g: &mut Graph, d: NodeId, p: &HeadParams) -> Result<NodeId> {
    if g.value(d).shape() != [p.dims.input] {
        return Err(Error::ShapeMismatch {
            op: "head_forward",
            detail: format!("input {:?} vs expected [{}]", g.value(d).shape(), p.dims.input),
        });
    }
    let mut h = d;
    let last = p.layers.len() - 1;
    for (i, &(w, b)) in p.layers.iter().enumerate() {
        let lin = g.matvec(w, h)?;
        let aff = g.add(lin, b)?;
        h = if i < last { g.tanh(aff)? } else { aff };
    }
    match p.kind {
        HeadKind::Probabilities => g.softmax(h),
        HeadKind::Score => {
            let s = g.sigmoid(h)?;
            g.reshape(s, vec![])
        }
    }
}
