//! Whole-model assembly: hierarchical feature extractor plus the classifier,
//! discriminator, and optional prober heads, and the batch forward pass that
//! produces the inputs to the group objective.
//!
//! The template draws the prober's initial values last, after the extractor
//! and the other heads, so variants with and without probers start from
//! identical extractor/classifier/discriminator weights under the same seed.

use rand::Rng;

use crate::corpus::Batch;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::{
    extract_masked, extractor_from_nodes, extractor_template, head_forward, head_from_nodes,
    head_template, ExtractorDims, ExtractorParams, HeadDims, HeadKind, HeadParams,
};
use crate::objectives::{BatchOutputs, Reversal};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub extractor: ExtractorDims,
    pub num_labels: usize,
    /// Width of the single hidden layer shared by all three heads.
    pub head_hidden: usize,
}

impl ModelDims {
    pub fn feature_dim(&self) -> usize {
        self.extractor.output_dim()
    }

    pub fn label_head(&self) -> HeadDims {
        HeadDims {
            input: self.feature_dim(),
            hidden: vec![self.head_hidden],
            output: self.num_labels,
        }
    }

    pub fn domain_head(&self) -> HeadDims {
        HeadDims { input: self.feature_dim(), hidden: vec![self.head_hidden], output: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_labels < 2 {
            return Err(Error::Config {
                msg: format!("need at least 2 labels, got {}", self.num_labels),
            });
        }
        if self.head_hidden == 0 {
            return Err(Error::Config { msg: "head hidden width must be positive".to_string() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub extractor: ExtractorParams,
    pub classifier: HeadParams,
    pub discriminator: HeadParams,
    pub prober: Option<HeadParams>,
}

impl ModelParams {
    /// All parameter nodes in template order.
    pub fn param_ids(&self) -> Vec<NodeId> {
        let mut ids = self.extractor.param_ids();
        ids.extend(self.classifier.param_ids());
        ids.extend(self.discriminator.param_ids());
        if let Some(p) = &self.prober {
            ids.extend(p.param_ids());
        }
        ids
    }

    /// Parameter nodes grouped into optimizer bundles, in template order.
    pub fn bundles(&self) -> Vec<(&'static str, Vec<NodeId>)> {
        let mut out = vec![
            ("extractor", self.extractor.param_ids()),
            ("classifier", self.classifier.param_ids()),
            ("discriminator", self.discriminator.param_ids()),
        ];
        if let Some(p) = &self.prober {
            out.push(("prober", p.param_ids()));
        }
        out
    }
}

/// Initial values for every model parameter, prober last.
pub fn model_template(
    prefix: &str,
    dims: &ModelDims,
    with_prober: bool,
    rng: &mut impl Rng,
    half_range: f64,
) -> Vec<(String, Tensor)> {
    let mut out = extractor_template(&format!("{prefix}.fe"), dims.extractor, rng, half_range);
    out.extend(head_template(&format!("{prefix}.cls"), &dims.label_head(), rng, half_range));
    out.extend(head_template(&format!("{prefix}.disc"), &dims.domain_head(), rng, half_range));
    if with_prober {
        out.extend(head_template(
            &format!("{prefix}.prober"),
            &dims.label_head(),
            rng,
            half_range,
        ));
    }
    out
}

/// Bind node ids drawn in template order back into structured parameters.
pub fn model_from_nodes(
    dims: ModelDims,
    with_prober: bool,
    ids: &mut impl Iterator<Item = NodeId>,
) -> ModelParams {
    let extractor = extractor_from_nodes(dims.extractor, ids);
    let classifier = head_from_nodes(dims.label_head(), HeadKind::Probabilities, ids);
    let discriminator = head_from_nodes(dims.domain_head(), HeadKind::Score, ids);
    let prober =
        with_prober.then(|| head_from_nodes(dims.label_head(), HeadKind::Probabilities, ids));
    ModelParams { dims, extractor, classifier, discriminator, prober }
}

/// Register a freshly drawn template in a graph and bind it.
pub fn build_model(
    g: &mut Graph,
    prefix: &str,
    dims: &ModelDims,
    with_prober: bool,
    rng: &mut impl Rng,
    half_range: f64,
) -> Result<ModelParams> {
    dims.validate()?;
    let template = model_template(prefix, dims, with_prober, rng, half_range);
    let mut ids = Vec::with_capacity(template.len());
    for (_, tensor) in &template {
        ids.push(g.param(tensor.clone())?);
    }
    Ok(model_from_nodes(*dims, with_prober, &mut ids.into_iter()))
}

/// Forward one batch through extractor and heads. Target-domain labels are
/// dropped here so no downstream loss can see them during training.
pub fn forward_batch(
    g: &mut Graph,
    batch: &Batch,
    params: &ModelParams,
    reversal: Reversal,
) -> Result<BatchOutputs> {
    if batch.is_empty() {
        return Err(Error::EmptySequence { op: "forward_batch" });
    }
    let n = batch.len();
    let mut features = Vec::with_capacity(n);
    let mut cls = Vec::with_capacity(n);
    let mut prober = params.prober.as_ref().map(|_| Vec::with_capacity(n));
    let mut disc = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut cls_values = Vec::with_capacity(n);
    let mut feature_values = Vec::with_capacity(n);
    for i in 0..n {
        let d = extract_masked(
            g,
            &batch.tokens[i],
            &batch.word_mask[i],
            &batch.sent_mask[i],
            &params.extractor,
        )?;
        let c = head_forward(g, d, &params.classifier)?;
        if let (Some(list), Some(p)) = (prober.as_mut(), params.prober.as_ref()) {
            list.push(head_forward(g, d, p)?);
        }
        let reversed = reversal.apply(g, d)?;
        disc.push(head_forward(g, reversed, &params.discriminator)?);
        labels.push(if batch.source[i] {
            batch.labels[i].map(|l| l as usize - 1)
        } else {
            None
        });
        cls_values.push(g.value(c).data().to_vec());
        feature_values.push(g.value(d).data().to_vec());
        features.push(d);
        cls.push(c);
    }
    let out = BatchOutputs {
        features,
        cls,
        prober,
        disc,
        source: batch.source.clone(),
        labels,
        cls_values,
        feature_values,
    };
    out.validate()?;
    Ok(out)
}
