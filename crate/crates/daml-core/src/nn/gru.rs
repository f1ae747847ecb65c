use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::init::uniform_tensor;
use crate::tensor::Tensor;

/// Gate parameters for one GRU direction. Each weight matrix acts on the
/// concatenation [x; h], shape (hidden x (input + hidden)).
#[derive(Debug, Clone)]
pub struct GruParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_z: NodeId,
    pub b_z: NodeId,
    pub w_r: NodeId,
    pub b_r: NodeId,
    pub w_c: NodeId,
    pub b_c: NodeId,
}

impl GruParams {
    pub fn param_ids(&self) -> Vec<NodeId> {
        vec![self.w_z, self.b_z, self.w_r, self.b_r, self.w_c, self.b_c]
    }
}

pub fn gru_template(
    prefix: &str,
    input_dim: usize,
    hidden_dim: usize,
    rng: &mut impl Rng,
    half_range: f64,
) -> Vec<(String, Tensor)> {
    let cat = input_dim + hidden_dim;
    let mut out = Vec::with_capacity(6);
    for gate in ["z", "r", "c"] {
        out.push((
            format!("{prefix}.w_{gate}"),
            uniform_tensor(rng, vec![hidden_dim, cat], half_range),
        ));
        out.push((
            format!("{prefix}.b_{gate}"),
            uniform_tensor(rng, vec![hidden_dim], half_range),
        ));
    }
    out
}

pub fn gru_from_nodes(
    input_dim: usize,
    hidden_dim: usize,
    ids: &mut impl Iterator<Item = NodeId>,
) -> GruParams {
    let mut next = || ids.next().expect("gru node list too short");
    let (w_z, b_z) = (next(), next());
    let (w_r, b_r) = (next(), next());
    let (w_c, b_c) = (next(), next());
    GruParams { input_dim, hidden_dim, w_z, b_z, w_r, b_r, w_c, b_c }
}

/// One GRU step: h' = (1-z) ⊙ h + z ⊙ tanh(W_c [x; r⊙h] + b_c).
/// `ones` must be a constant all-ones vector of the hidden dim.
pub fn gru_step(
    g: &mut Graph,
    p: &GruParams,
    x: NodeId,
    h: NodeId,
    ones: NodeId,
) -> Result<NodeId> {
    let xh = g.concat(&[x, h])?;
    let z_lin = g.matvec(p.w_z, xh)?;
    let z_aff = g.add(z_lin, p.b_z)?;
    let z = g.sigmoid(z_aff)?;
    let r_lin = g.matvec(p.w_r, xh)?;
    let r_aff = g.add(r_lin, p.b_r)?;
    let r = g.sigmoid(r_aff)?;
    let rh = g.mul(r, h)?;
    let xrh = g.concat(&[x, rh])?;
    let c_lin = g.matvec(p.w_c, xrh)?;
    let c_aff = g.add(c_lin, p.b_c)?;
    let cand = g.tanh(c_aff)?;
    let keep = g.sub(ones, z)?;
    let kept = g.mul(keep, h)?;
    let new = g.mul(z, cand)?;
    g.add(kept, new)
}

/// Run forward and backward GRUs over the sequence and concatenate the two
/// states at each position (dim 2H). Masked positions carry the previous
/// state of each direction through unchanged.
pub fn bigru_encode(
    g: &mut Graph,
    inputs: &[NodeId],
    fwd: &GruParams,
    bwd: &GruParams,
    mask: &[bool],
) -> Result<Vec<NodeId>> {
    if inputs.is_empty() {
        return Err(Error::EmptySequence { op: "bigru_encode" });
    }
    if mask.len() != inputs.len() {
        return Err(Error::ShapeMismatch {
            op: "bigru_encode",
            detail: format!("{} inputs vs {} mask entries", inputs.len(), mask.len()),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::AllMasked { op: "bigru_encode" });
    }
    let hidden = fwd.hidden_dim;
    let ones = g.constant(Tensor::vector(vec![1.0; hidden])?)?;
    let zeros = g.constant(Tensor::vector(vec![0.0; hidden])?)?;

    let mut fstates = Vec::with_capacity(inputs.len());
    let mut h = zeros;
    for (t, &x) in inputs.iter().enumerate() {
        if mask[t] {
            h = gru_step(g, fwd, x, h, ones)?;
        }
        fstates.push(h);
    }
    let mut bstates = vec![zeros; inputs.len()];
    let mut hb = zeros;
    for (t, &x) in inputs.iter().enumerate().rev() {
        if mask[t] {
            hb = gru_step(g, bwd, x, hb, ones)?;
        }
        bstates[t] = hb;
    }
    inputs
        .iter()
        .enumerate()
        .map(|(t, _)| g.concat(&[fstates[t], bstates[t]]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn bind(
        g: &mut Graph,
        template: &[(String, Tensor)],
    ) -> Vec<NodeId> {
        template.iter().map(|(_, t)| g.param(t.clone()).unwrap()).collect()
    }

    #[test]
    fn zero_weights_produce_zero_states() {
        let mut g = Graph::new();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let template = gru_template("gru", 3, 2, &mut rng, 0.0);
        let ids = bind(&mut g, &template);
        g.seal_params();
        let p = gru_from_nodes(3, 2, &mut ids.into_iter());
        let x1 = g.constant(Tensor::vector(vec![0.5, -1.0, 2.0]).unwrap()).unwrap();
        let x2 = g.constant(Tensor::vector(vec![1.0, 1.0, 1.0]).unwrap()).unwrap();
        let states =
            bigru_encode(&mut g, &[x1, x2], &p.clone(), &p, &[true, true]).unwrap();
        for s in states {
            assert_eq!(g.value(s).data(), &[0.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn length_one_sequence_has_equal_directions() {
        let mut g = Graph::new();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let template = gru_template("gru", 3, 2, &mut rng, 0.1);
        let ids = bind(&mut g, &template);
        g.seal_params();
        let p = gru_from_nodes(3, 2, &mut ids.into_iter());
        let x = g.constant(Tensor::vector(vec![0.3, -0.2, 0.9]).unwrap()).unwrap();
        let states = bigru_encode(&mut g, &[x], &p.clone(), &p, &[true]).unwrap();
        let out = g.value(states[0]).data();
        assert_eq!(&out[..2], &out[2..]);
    }

    #[test]
    fn masked_positions_carry_previous_state() {
        let mut g = Graph::new();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let template = gru_template("gru", 2, 2, &mut rng, 0.1);
        let ids = bind(&mut g, &template);
        g.seal_params();
        let p = gru_from_nodes(2, 2, &mut ids.into_iter());
        let x1 = g.constant(Tensor::vector(vec![0.5, -1.0]).unwrap()).unwrap();
        let x2 = g.constant(Tensor::vector(vec![9.0, 9.0]).unwrap()).unwrap();
        let x3 = g.constant(Tensor::vector(vec![0.1, 0.2]).unwrap()).unwrap();
        let states =
            bigru_encode(&mut g, &[x1, x2, x3], &p.clone(), &p, &[true, false, true])
                .unwrap();
        // Forward half of position 1 equals position 0 (state carried).
        let s0 = g.value(states[0]).data().to_vec();
        let s1 = g.value(states[1]).data().to_vec();
        assert_eq!(&s1[..2], &s0[..2]);
        // Backward half of position 1 equals position 2.
        let s2 = g.value(states[2]).data().to_vec();
        assert_eq!(&s1[2..], &s2[2..]);
    }

    #[test]
    fn empty_and_all_masked_sequences_are_errors() {
        let mut g = Graph::new();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let template = gru_template("gru", 2, 2, &mut rng, 0.1);
        let ids = bind(&mut g, &template);
        g.seal_params();
        let p = gru_from_nodes(2, 2, &mut ids.into_iter());
        assert!(matches!(
            bigru_encode(&mut g, &[], &p.clone(), &p.clone(), &[]),
            Err(Error::EmptySequence { .. })
        ));
        let x = g.constant(Tensor::vector(vec![0.0, 0.0]).unwrap()).unwrap();
        assert!(matches!(
            bigru_encode(&mut g, &[x], &p.clone(), &p, &[false]),
            Err(Error::AllMasked { .. })
        ));
    }
}
