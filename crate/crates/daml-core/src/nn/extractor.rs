use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::attention::{attention_from_nodes, attention_pool, attention_template, AttentionParams};
use crate::nn::gru::{bigru_encode, gru_from_nodes, gru_template, GruParams};
use crate::nn::init::uniform_tensor;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractorDims {
    pub vocab: usize,
    pub embed: usize,
    pub word_hidden: usize,
    pub sent_hidden: usize,
}

impl ExtractorDims {
    /// Dimension of the document vector d: 2 x sentence hidden.
    pub fn output_dim(&self) -> usize {
        2 * self.sent_hidden
    }
}

/// Hierarchical extractor: word BiGRU + word attention per sentence, then
/// sentence BiGRU + sentence attention over the pooled sentence vectors.
#[derive(Debug, Clone)]
pub struct ExtractorParams {
    pub dims: ExtractorDims,
    pub embedding: NodeId,
    pub word_fwd: GruParams,
    pub word_bwd: GruParams,
    pub word_att: AttentionParams,
    pub sent_fwd: GruParams,
    pub sent_bwd: GruParams,
    pub sent_att: AttentionParams,
}

impl ExtractorParams {
    /// Parameter nodes in template order.
    pub fn param_ids(&self) -> Vec<NodeId> {
        let mut ids = vec![self.embedding];
        ids.extend(self.word_fwd.param_ids());
        ids.extend(self.word_bwd.param_ids());
        ids.extend(self.word_att.param_ids());
        ids.extend(self.sent_fwd.param_ids());
        ids.extend(self.sent_bwd.param_ids());
        ids.extend(self.sent_att.param_ids());
        ids
    }
}

pub fn extractor_template(
    prefix: &str,
    dims: ExtractorDims,
    rng: &mut impl Rng,
    half_range: f64,
) -> Vec<(String, Tensor)> {
    let word_out = 2 * dims.word_hidden;
    let sent_out = 2 * dims.sent_hidden;
    let mut out = vec![(
        format!("{prefix}.embedding"),
        uniform_tensor(rng, vec![dims.vocab, dims.embed], half_range),
    )];
    out.extend(gru_template(
        &format!("{prefix}.word_gru_fwd"),
        dims.embed,
        dims.word_hidden,
        rng,
        half_range,
    ));
    out.extend(gru_template(
        &format!("{prefix}.word_gru_bwd"),
        dims.embed,
        dims.word_hidden,
        rng,
        half_range,
    ));
    out.extend(attention_template(
        &format!("{prefix}.word_att"),
        word_out,
        word_out,
        rng,
        half_range,
    ));
    out.extend(gru_template(
        &format!("{prefix}.sent_gru_fwd"),
        word_out,
        dims.sent_hidden,
        rng,
        half_range,
    ));
    out.extend(gru_template(
        &format!("{prefix}.sent_gru_bwd"),
        word_out,
        dims.sent_hidden,
        rng,
        half_range,
    ));
    out.extend(attention_template(
        &format!("{prefix}.sent_att"),
        sent_out,
        sent_out,
        rng,
        half_range,
    ));
    out
}

pub fn extractor_from_nodes(
    dims: ExtractorDims,
    ids: &mut impl Iterator<Item = NodeId>,
) -> ExtractorParams {
    let word_out = 2 * dims.word_hidden;
    let sent_out = 2 * dims.sent_hidden;
    let embedding = ids.next().expect("extractor node list too short");
    let word_fwd = gru_from_nodes(dims.embed, dims.word_hidden, ids);
    let word_bwd = gru_from_nodes(dims.embed, dims.word_hidden, ids);
    let word_att = attention_from_nodes(word_out, word_out, ids);
    let sent_fwd = gru_from_nodes(word_out, dims.sent_hidden, ids);
    let sent_bwd = gru_from_nodes(word_out, dims.sent_hidden, ids);
    let sent_att = attention_from_nodes(sent_out, sent_out, ids);
    ExtractorParams {
        dims,
        embedding,
        word_fwd,
        word_bwd,
        word_att,
        sent_fwd,
        sent_bwd,
        sent_att,
    }
}

/// Extract the document vector from padded token rows with explicit masks.
/// Row k of `token_rows` is one sentence; `word_masks[k]` marks its real
/// tokens and `sent_mask` marks real sentences.
pub fn extract_masked(
    g: &mut Graph,
    token_rows: &[Vec<u32>],
    word_masks: &[Vec<bool>],
    sent_mask: &[bool],
    p: &ExtractorParams,
) -> Result<NodeId> {
    if token_rows.is_empty() {
        return Err(Error::EmptySequence { op: "extract" });
    }
    if word_masks.len() != token_rows.len() || sent_mask.len() != token_rows.len() {
        return Err(Error::ShapeMismatch {
            op: "extract",
            detail: format!(
                "{} sentences vs {} word masks vs {} sentence-mask entries",
                token_rows.len(),
                word_masks.len(),
                sent_mask.len()
            ),
        });
    }
    let mut sent_vecs = Vec::with_capacity(token_rows.len());
    for (row, (tokens, wmask)) in token_rows.iter().zip(word_masks).enumerate() {
        if !sent_mask[row] {
            // Padding sentence: contributes a placeholder excluded by the
            // sentence mask. Use a zero vector of the right dim.
            let zeros = g.constant(Tensor::vector(vec![0.0; 2 * p.dims.word_hidden])?)?;
            sent_vecs.push(zeros);
            continue;
        }
        if tokens.is_empty() {
            return Err(Error::EmptySequence { op: "extract" });
        }
        if wmask.len() != tokens.len() {
            return Err(Error::ShapeMismatch {
                op: "extract",
                detail: format!(
                    "sentence {row}: {} tokens vs {} mask entries",
                    tokens.len(),
                    wmask.len()
                ),
            });
        }
        let embedded = tokens
            .iter()
            .map(|&t| g.embed_row(p.embedding, t as usize))
            .collect::<Result<Vec<NodeId>>>()?;
        let states = bigru_encode(g, &embedded, &p.word_fwd, &p.word_bwd, wmask)?;
        let (pooled, _) = attention_pool(g, &states, &p.word_att, wmask)?;
        sent_vecs.push(pooled);
    }
    let sent_states = bigru_encode(g, &sent_vecs, &p.sent_fwd, &p.sent_bwd, sent_mask)?;
    let (d, _) = attention_pool(g, &sent_states, &p.sent_att, sent_mask)?;
    Ok(d)
}

/// Extract the document vector from real (unpadded) sentences.
pub fn extract(g: &mut Graph, sentences: &[Vec<u32>], p: &ExtractorParams) -> Result<NodeId> {
    let word_masks: Vec<Vec<bool>> = sentences.iter().map(|s| vec![true; s.len()]).collect();
    let sent_mask = vec![true; sentences.len()];
    extract_masked(g, sentences, &word_masks, &sent_mask, p)
}
