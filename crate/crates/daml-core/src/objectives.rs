//! Loss functions and the per-group hybrid objectives.
//!
//! Peer outputs enter a group's objective only as plain `f64` snapshots
//! (`PeerView`), never as graph nodes, so no gradient can flow into a peer:
//! teacher distributions are detached by construction.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, LOG_FLOOR};
use crate::tensor::Tensor;

/// Training-time objective family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Source-only cross-entropy.
    Naive,
    /// Cross-entropy + adversarial domain confusion.
    Dann,
    /// dann + classifier-to-classifier mutual learning.
    Sml,
    /// dann + feature alignment across groups.
    Fa,
    /// dann + classifier-to-prober mutual learning.
    Daml,
    /// Groups trained like dann, combined only at prediction time.
    Ne,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Naive,
        Variant::Dann,
        Variant::Sml,
        Variant::Fa,
        Variant::Ne,
        Variant::Daml,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Naive => "naive",
            Variant::Dann => "dann",
            Variant::Sml => "sml",
            Variant::Fa => "fa",
            Variant::Ne => "ne",
            Variant::Daml => "daml",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config { msg: format!("unknown variant '{s}'") })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the reversal layer is applied between the document vector and the
/// discriminator. `Transparent` exists for gradient checking, where the
/// objective must be the true gradient of its forward value; training always
/// uses `Adversarial`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reversal {
    Adversarial(f64),
    Transparent,
}

impl Reversal {
    pub fn apply(self, g: &mut Graph, d: NodeId) -> Result<NodeId> {
        match self {
            Reversal::Adversarial(eta) => g.grad_reverse(d, eta),
            Reversal::Transparent => Ok(d),
        }
    }
}

/// Which documents the mutual-learning / alignment term covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutualScope {
    Target,
    Source,
    Both,
}

impl MutualScope {
    fn selects(self, is_source: bool) -> bool {
        match self {
            MutualScope::Target => !is_source,
            MutualScope::Source => is_source,
            MutualScope::Both => true,
        }
    }
}

impl MutualScope {
    pub fn as_str(self) -> &'static str {
        match self {
            MutualScope::Target => "target",
            MutualScope::Source => "source",
            MutualScope::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(MutualScope::Target),
            "source" => Ok(MutualScope::Source),
            "both" => Ok(MutualScope::Both),
            _ => Err(Error::Config { msg: format!("unknown prober domain '{s}'") }),
        }
    }
}

impl std::fmt::Display for MutualScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub eta: f64,
    pub lambda_d: f64,
    pub lambda_m: f64,
}

impl LossWeights {
    pub fn new(eta: f64, lambda_d: f64, lambda_m: f64) -> Result<Self> {
        for (name, v) in [("eta", eta), ("lambda_d", lambda_d), ("lambda_m", lambda_m)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config { msg: format!("{name} must be >= 0, got {v}") });
            }
        }
        Ok(LossWeights { eta, lambda_d, lambda_m })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { eta: 0.5, lambda_d: 1.0, lambda_m: 0.1 }
    }
}

/// One group's forward outputs on a batch. Node handles live in the group's
/// own graph; `cls_values` / `feature_values` are detached copies served to
/// peer groups.
#[derive(Debug, Clone)]
pub struct BatchOutputs {
    /// Document vectors d_i.
    pub features: Vec<NodeId>,
    /// Classifier distributions C(d_i).
    pub cls: Vec<NodeId>,
    /// Prober distributions P(d_i), absent for variants without probers.
    pub prober: Option<Vec<NodeId>>,
    /// Discriminator scores D(reversal(d_i)).
    pub disc: Vec<NodeId>,
    /// Domain flag per document: true = source (z = 1).
    pub source: Vec<bool>,
    /// 0-based label index; present exactly for source documents.
    pub labels: Vec<Option<usize>>,
    /// Detached classifier distributions, for peers.
    pub cls_values: Vec<Vec<f64>>,
    /// Detached document vectors, for peers.
    pub feature_values: Vec<Vec<f64>>,
}

impl BatchOutputs {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.len();
        let lens = [
            self.cls.len(),
            self.disc.len(),
            self.source.len(),
            self.labels.len(),
            self.cls_values.len(),
            self.feature_values.len(),
        ];
        if lens.iter().any(|&l| l != n)
            || self.prober.as_ref().is_some_and(|p| p.len() != n)
        {
            return Err(Error::ShapeMismatch {
                op: "BatchOutputs",
                detail: format!("inconsistent batch lists (base length {n})"),
            });
        }
        for (i, (label, &src)) in self.labels.iter().zip(&self.source).enumerate() {
            if label.is_some() != src {
                return Err(Error::ShapeMismatch {
                    op: "BatchOutputs",
                    detail: format!(
                        "document {i}: label presence must match source flag (source={src})"
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Detached snapshot of peer outputs: the uniform mixture of the peers'
/// classifier distributions and feature vectors, taken before any of this
/// step's updates.
#[derive(Debug, Clone)]
pub struct PeerView {
    pub cls: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
}

impl PeerView {
    /// Uniform mixture over one or more peers' detached outputs.
    pub fn mixture(peers: &[&BatchOutputs]) -> Result<Self> {
        if peers.is_empty() {
            return Err(Error::EmptySequence { op: "PeerView::mixture" });
        }
        let n = peers[0].cls_values.len();
        for p in peers {
            if p.cls_values.len() != n || p.feature_values.len() != n {
                return Err(Error::ShapeMismatch {
                    op: "PeerView::mixture",
                    detail: "peer batch lengths differ".to_string(),
                });
            }
        }
        let avg = |rows: Vec<&Vec<f64>>| -> Vec<f64> {
            let mut out = vec![0.0; rows[0].len()];
            for row in &rows {
                for (o, v) in out.iter_mut().zip(row.iter()) {
                    *o += v;
                }
            }
            let k = rows.len() as f64;
            out.iter_mut().for_each(|o| *o /= k);
            out
        };
        let cls = (0..n)
            .map(|i| avg(peers.iter().map(|p| &p.cls_values[i]).collect()))
            .collect();
        let features = (0..n)
            .map(|i| avg(peers.iter().map(|p| &p.feature_values[i]).collect()))
            .collect();
        Ok(PeerView { cls, features })
    }
}

/// Mean negative log-likelihood of the true labels.
pub fn cls_loss(g: &mut Graph, probs: &[NodeId], labels: &[Option<usize>]) -> Result<NodeId> {
    if probs.is_empty() {
        return Err(Error::EmptySequence { op: "cls_loss" });
    }
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "cls_loss",
            detail: format!("{} probs vs {} labels", probs.len(), labels.len()),
        });
    }
    let mut per_doc = Vec::with_capacity(probs.len());
    for (i, (&p, label)) in probs.iter().zip(labels).enumerate() {
        let label = label.ok_or(Error::UnlabeledDocument { doc_id: i })?;
        let dim = g.value(p).elems();
        if label >= dim {
            return Err(Error::LabelOutOfRange { label: label as i64, max: dim as u8 });
        }
        let mut onehot = vec![0.0; dim];
        onehot[label] = 1.0;
        let y = g.constant(Tensor::vector(onehot)?)?;
        let logp = g.log(p)?;
        let picked = g.dot(y, logp)?;
        per_doc.push(g.scale(picked, -1.0)?);
    }
    let stacked = g.concat(&per_doc)?;
    g.mean(stacked)
}

/// Mean binary cross-entropy of discriminator scores against domain flags.
/// Each score must already be routed through the reversal layer by the
/// forward pass. The loss branches on the flag so no 0 * log(0) appears.
pub fn dom_loss(g: &mut Graph, scores: &[NodeId], source: &[bool]) -> Result<NodeId> {
    if scores.is_empty() {
        return Err(Error::EmptySequence { op: "dom_loss" });
    }
    if scores.len() != source.len() {
        return Err(Error::ShapeMismatch {
            op: "dom_loss",
            detail: format!("{} scores vs {} flags", scores.len(), source.len()),
        });
    }
    let one = g.constant(Tensor::scalar(1.0))?;
    let mut per_doc = Vec::with_capacity(scores.len());
    for (&s, &is_source) in scores.iter().zip(source) {
        let inside = if is_source { s } else { g.sub(one, s)? };
        let l = g.log(inside)?;
        per_doc.push(g.scale(l, -1.0)?);
    }
    let stacked = g.concat(&per_doc)?;
    g.mean(stacked)
}

/// Mean KL(teacher || student) over documents; teacher rows are plain values
/// so no gradient can reach them.
pub fn kl_loss(g: &mut Graph, teacher: &[Vec<f64>], student: &[NodeId]) -> Result<NodeId> {
    if teacher.is_empty() {
        return Err(Error::EmptySequence { op: "kl_loss" });
    }
    if teacher.len() != student.len() {
        return Err(Error::ShapeMismatch {
            op: "kl_loss",
            detail: format!("{} teacher rows vs {} student rows", teacher.len(), student.len()),
        });
    }
    let mut per_doc = Vec::with_capacity(teacher.len());
    for (t, &s) in teacher.iter().zip(student) {
        if g.value(s).shape() != [t.len()] {
            return Err(Error::ShapeMismatch {
                op: "kl_loss",
                detail: format!(
                    "teacher row of {} vs student shape {:?}",
                    t.len(),
                    g.value(s).shape()
                ),
            });
        }
        let t_entropy: f64 = t.iter().map(|&p| p * p.max(LOG_FLOOR).ln()).sum();
        let h = g.constant(Tensor::scalar(t_entropy))?;
        let t_node = g.constant(Tensor::vector(t.clone())?)?;
        let log_s = g.log(s)?;
        let ce = g.dot(t_node, log_s)?;
        per_doc.push(g.sub(h, ce)?);
    }
    let stacked = g.concat(&per_doc)?;
    g.mean(stacked)
}

/// Mean squared Euclidean distance between own features and detached peer
/// features.
pub fn fa_loss(g: &mut Graph, own: &[NodeId], peer: &[Vec<f64>]) -> Result<NodeId> {
    if own.is_empty() {
        return Err(Error::EmptySequence { op: "fa_loss" });
    }
    if own.len() != peer.len() {
        return Err(Error::ShapeMismatch {
            op: "fa_loss",
            detail: format!("{} own vs {} peer vectors", own.len(), peer.len()),
        });
    }
    let mut per_doc = Vec::with_capacity(own.len());
    for (&d, p) in own.iter().zip(peer) {
        if g.value(d).shape() != [p.len()] {
            return Err(Error::ShapeMismatch {
                op: "fa_loss",
                detail: format!("own {:?} vs peer dim {}", g.value(d).shape(), p.len()),
            });
        }
        let p_node = g.constant(Tensor::vector(p.clone())?)?;
        let diff = g.sub(d, p_node)?;
        let sq = g.mul(diff, diff)?;
        per_doc.push(g.sum(sq)?);
    }
    let stacked = g.concat(&per_doc)?;
    g.mean(stacked)
}

/// Scalar components of one group's objective, for logging and NaN
/// diagnostics. Raw (unweighted) values; `None` means the term was skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub total: f64,
    pub cls: Option<f64>,
    pub dom: Option<f64>,
    pub mutual: Option<f64>,
}

/// The objective root node plus its logged components.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub root: NodeId,
    pub parts: ObjectiveParts,
}

/// Build one group's objective for the batch. Terms with zero weight are
/// skipped entirely (no graph nodes), and the mutual term only covers
/// documents selected by `scope`; a batch with no selected documents skips
/// the term.
pub fn group_objective(
    g: &mut Graph,
    variant: Variant,
    own: &BatchOutputs,
    peer: Option<&PeerView>,
    w: &LossWeights,
    scope: MutualScope,
) -> Result<Objective> {
    own.validate()?;
    let mut terms: Vec<NodeId> = Vec::new();
    let mut parts =
        ObjectiveParts { total: 0.0, cls: None, dom: None, mutual: None };

    // Supervised term over source documents.
    let src_idx: Vec<usize> = (0..own.len()).filter(|&i| own.source[i]).collect();
    if !src_idx.is_empty() {
        let probs: Vec<NodeId> = src_idx.iter().map(|&i| own.cls[i]).collect();
        let labels: Vec<Option<usize>> = src_idx.iter().map(|&i| own.labels[i]).collect();
        let cls = cls_loss(g, &probs, &labels)?;
        parts.cls = Some(g.value(cls).scalar_value());
        terms.push(cls);
    } else if variant == Variant::Naive {
        return Err(Error::EmptySequence { op: "cls_loss" });
    }

    // Adversarial term over all documents.
    if variant != Variant::Naive && w.lambda_d > 0.0 {
        let dom = dom_loss(g, &own.disc, &own.source)?;
        parts.dom = Some(g.value(dom).scalar_value());
        terms.push(g.scale(dom, w.lambda_d)?);
    }

    // Mutual / alignment term over scope-selected documents.
    if !matches!(variant, Variant::Naive | Variant::Dann | Variant::Ne) && w.lambda_m > 0.0 {
        let peer = peer.ok_or(Error::Config {
            msg: "variant requires a peer group".to_string(),
        })?;
        if peer.cls.len() != own.len() || peer.features.len() != own.len() {
            return Err(Error::ShapeMismatch {
                op: "group_objective",
                detail: format!("peer view of {} vs batch of {}", peer.cls.len(), own.len()),
            });
        }
        let idx: Vec<usize> =
            (0..own.len()).filter(|&i| scope.selects(own.source[i])).collect();
        if !idx.is_empty() {
            let mutual = match variant {
                Variant::Sml => {
                    let teacher: Vec<Vec<f64>> =
                        idx.iter().map(|&i| peer.cls[i].clone()).collect();
                    let student: Vec<NodeId> = idx.iter().map(|&i| own.cls[i]).collect();
                    kl_loss(g, &teacher, &student)?
                }
                Variant::Daml => {
                    let prober = own.prober.as_ref().ok_or(Error::MissingProber)?;
                    let teacher: Vec<Vec<f64>> =
                        idx.iter().map(|&i| peer.cls[i].clone()).collect();
                    let student: Vec<NodeId> = idx.iter().map(|&i| prober[i]).collect();
                    kl_loss(g, &teacher, &student)?
                }
                Variant::Fa => {
                    let own_feats: Vec<NodeId> =
                        idx.iter().map(|&i| own.features[i]).collect();
                    let peer_feats: Vec<Vec<f64>> =
                        idx.iter().map(|&i| peer.features[i].clone()).collect();
                    fa_loss(g, &own_feats, &peer_feats)?
                }
                Variant::Naive | Variant::Dann | Variant::Ne => unreachable!(),
            };
            parts.mutual = Some(g.value(mutual).scalar_value());
            terms.push(g.scale(mutual, w.lambda_m)?);
        }
    }

    let mut total = match terms.first() {
        Some(&t) => t,
        None => {
            return Err(Error::EmptySequence { op: "group_objective" });
        }
    };
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    parts.total = g.value(total).scalar_value();
    Ok(Objective { root: total, parts })
}
