//! The multi-group training loop: per-group graphs and optimizers, the
//! simultaneous-snapshot alternating step, early stopping on source-dev
//! accuracy, model selection, and ensemble prediction.
//!
//! Peer exchange happens strictly through `PeerView` snapshots taken after
//! all groups have run their forward pass and before any group updates, so
//! the step is order-independent across groups.

pub mod checkpoint;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::adam::{Adam, AdamConfig};
use crate::corpus::{make_batches, Batch, Document, DomainMix};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::{evaluate, Metrics};
use crate::model::{build_model, ModelDims, ModelParams};
use crate::nn::{extract, head_forward, ExtractorDims, INIT_RANGE};
use crate::objectives::{
    group_objective, BatchOutputs, LossWeights, MutualScope, ObjectiveParts, PeerView, Reversal,
    Variant,
};
use crate::tensor::Tensor;

pub use checkpoint::Checkpoint;

/// ChaCha stream ids carve independent randomness out of one seed.
const STREAM_INIT_BASE: u64 = 0x100;
const STREAM_BATCHING: u64 = 0x200;
const STREAM_SHARED_EMBEDDING: u64 = 0x300;

/// Initialization stream for one group.
pub fn init_rng(seed: u64, group: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_INIT_BASE + group as u64);
    rng
}

/// Batch-order stream, shared by all groups.
pub fn batching_rng(seed: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_BATCHING);
    rng
}

fn shared_embedding_rng(seed: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SHARED_EMBEDDING);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub num_groups: usize,
    pub eta: f64,
    pub lambda_d: f64,
    pub lambda_m: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub dims: ModelDims,
    pub seed: u64,
    pub prober_domain: MutualScope,
    /// Draw one embedding table and install it in every group at init.
    /// Groups still evolve their copies independently afterwards.
    pub shared_embedding_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Daml,
            num_groups: 2,
            // Per-bundle Adam is invariant to gradient scale, so once the
            // source task saturates the extractor's update direction is set
            // by the ratio of eta * lambda_d to lambda_m, not their sizes.
            // These defaults keep the reversed domain signal dominant.
            eta: 0.5,
            lambda_d: 1.0,
            lambda_m: 0.1,
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 10,
            eval_every: 50,
            patience: 10,
            dims: ModelDims {
                extractor: ExtractorDims { vocab: 2, embed: 16, word_hidden: 16, sent_hidden: 16 },
                num_labels: 5,
                head_hidden: 32,
            },
            seed: 1,
            prober_domain: MutualScope::Target,
            shared_embedding_init: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let single = matches!(self.variant, Variant::Naive | Variant::Dann);
        if single && self.num_groups != 1 {
            return Err(Error::Config {
                msg: format!("variant {} trains exactly 1 group", self.variant),
            });
        }
        if !single && self.num_groups < 2 {
            return Err(Error::Config {
                msg: format!("variant {} needs at least 2 groups", self.variant),
            });
        }
        LossWeights::new(self.eta, self.lambda_d, self.lambda_m)?;
        for (name, v, min) in [
            ("learning_rate", self.learning_rate, f64::MIN_POSITIVE),
            ("batch_size", self.batch_size as f64, 2.0),
            ("max_epochs", self.max_epochs as f64, 1.0),
            ("eval_every", self.eval_every as f64, 1.0),
            ("patience", self.patience as f64, 1.0),
        ] {
            if v < min {
                return Err(Error::Config { msg: format!("{name} must be >= {min}") });
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { eta: self.eta, lambda_d: self.lambda_d, lambda_m: self.lambda_m }
    }

    /// Target documents enter batches only when some loss term can see them;
    /// a dann/ne run with lambda_d == 0 therefore degenerates to the naive
    /// schedule exactly.
    pub fn mix(&self) -> DomainMix {
        match self.variant {
            Variant::Naive => DomainMix::SingleStream,
            Variant::Dann | Variant::Ne if self.lambda_d == 0.0 => DomainMix::SingleStream,
            _ => DomainMix::HalfHalf,
        }
    }

    pub fn with_prober(&self) -> bool {
        self.variant == Variant::Daml
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.learning_rate, ..AdamConfig::default() }
    }
}

/// One model group: its own graph, parameters, and per-bundle optimizers.
pub struct Group {
    pub id: usize,
    pub graph: Graph,
    pub params: ModelParams,
    /// Parameter names aligned with `params.param_ids()` order.
    pub param_names: Vec<String>,
    optimizers: Vec<(&'static str, Adam)>,
}

impl Group {
    /// Initialize from the group's init stream. The prober (when present) is
    /// drawn last, so the shared parts match across variants under one seed.
    pub fn new(id: usize, cfg: &TrainConfig, rng: &mut ChaCha12Rng) -> Result<Group> {
        let mut graph = Graph::new();
        let prefix = format!("g{id}");
        let params =
            build_model(&mut graph, &prefix, &cfg.dims, cfg.with_prober(), rng, INIT_RANGE)?;
        if cfg.shared_embedding_init {
            let mut shared = shared_embedding_rng(cfg.seed);
            let table = crate::nn::uniform_tensor(
                &mut shared,
                vec![cfg.dims.extractor.vocab, cfg.dims.extractor.embed],
                INIT_RANGE,
            );
            graph.set_value(params.extractor.embedding, table.data())?;
        }
        graph.seal_params();
        let optimizers = params
            .bundles()
            .into_iter()
            .map(|(name, ids)| (name, Adam::new(cfg.adam(), &ids, &graph)))
            .collect();
        Ok(Group { id, graph, params, param_names: model_param_names(&prefix, cfg), optimizers })
    }

    /// Forward one batch from a clean graph, leaving nodes in place for a
    /// following backward pass.
    pub fn forward(&mut self, batch: &Batch, reversal: Reversal) -> Result<BatchOutputs> {
        self.graph.reset_to_params();
        self.graph.zero_grads();
        crate::model::forward_batch(&mut self.graph, batch, &self.params, reversal)
    }

    fn apply_updates(&mut self) -> Result<()> {
        for (_, adam) in &mut self.optimizers {
            adam.step(&mut self.graph)?;
        }
        Ok(())
    }

    /// Classifier distribution for one document (graph reset afterwards).
    pub fn classifier_distribution(&mut self, doc: &Document) -> Result<Vec<f64>> {
        self.graph.reset_to_params();
        let d = extract(&mut self.graph, &doc.sentences, &self.params.extractor)?;
        let c = head_forward(&mut self.graph, d, &self.params.classifier)?;
        let dist = self.graph.value(c).data().to_vec();
        self.graph.reset_to_params();
        Ok(dist)
    }

    /// Document vector for one document (graph reset afterwards).
    pub fn feature_vector(&mut self, doc: &Document) -> Result<Vec<f64>> {
        self.graph.reset_to_params();
        let d = extract(&mut self.graph, &doc.sentences, &self.params.extractor)?;
        let v = self.graph.value(d).data().to_vec();
        self.graph.reset_to_params();
        Ok(v)
    }

    /// Predicted rating: argmax of the classifier distribution, 1-based.
    pub fn predict(&mut self, doc: &Document) -> Result<u8> {
        Ok(argmax(&self.classifier_distribution(doc)?) as u8 + 1)
    }

    /// Accuracy/RMSE of this group's classifier over labeled documents.
    pub fn evaluate_classifier(&mut self, docs: &[Document]) -> Result<Metrics> {
        let k = self.params.dims.num_labels as u8;
        evaluate(|d| self.predict(d), docs, k)
    }

    /// Current values of all parameters, named, in template order.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        self.param_names
            .iter()
            .zip(self.params.param_ids())
            .map(|(name, id)| (name.clone(), self.graph.value(id).clone()))
            .collect()
    }
}

fn model_param_names(prefix: &str, cfg: &TrainConfig) -> Vec<String> {
    // Dry-run the template for its name list; values are discarded.
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    crate::model::model_template(prefix, &cfg.dims, cfg.with_prober(), &mut rng, 0.0)
        .into_iter()
        .map(|(name, _)| name)
        .collect()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Sum the groups' classifier distributions and renormalize; the argmax of
/// the result is the ensemble prediction (1-based).
pub fn ne_predict(groups: &mut [Group], doc: &Document) -> Result<(u8, Vec<f64>)> {
    if groups.len() < 2 {
        return Err(Error::Config {
            msg: format!("ensemble prediction needs at least 2 groups, got {}", groups.len()),
        });
    }
    let mut dists = Vec::with_capacity(groups.len());
    for g in groups.iter_mut() {
        dists.push(g.classifier_distribution(doc)?);
    }
    let dist = normalize_sum(&dists)?;
    Ok((argmax(&dist) as u8 + 1, dist))
}

/// Elementwise sum of distributions, renormalized to sum 1.
pub fn normalize_sum(dists: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = dists.first().ok_or(Error::EmptySequence { op: "normalize_sum" })?;
    let mut sum = vec![0.0; first.len()];
    for dist in dists {
        if dist.len() != sum.len() {
            return Err(Error::ShapeMismatch {
                op: "normalize_sum",
                detail: "distributions disagree on label count".to_string(),
            });
        }
        for (a, d) in sum.iter_mut().zip(dist.iter()) {
            *a += d;
        }
    }
    let total: f64 = sum.iter().sum();
    sum.iter_mut().for_each(|p| *p /= total);
    Ok(sum)
}

/// Best source-dev classifier's group id; exact ties go to the lower id.
pub fn select_model(groups: &mut [Group], source_dev: &[Document]) -> Result<usize> {
    if groups.is_empty() {
        return Err(Error::Config { msg: "no groups to select from".to_string() });
    }
    let mut best: Option<(usize, f64)> = None;
    for (idx, g) in groups.iter_mut().enumerate() {
        let acc = g.evaluate_classifier(source_dev)?.accuracy;
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((idx, acc));
        }
    }
    Ok(best.expect("nonempty groups").0)
}

/// One simultaneous-snapshot update over a batch: every group runs its
/// forward pass, peer views are frozen from those outputs, then each group
/// builds its objective, backpropagates, and applies Adam to its own bundles.
///
/// Any non-finite value surfacing anywhere in the step aborts with the step
/// number and the component losses gathered so far.
pub fn train_step(
    groups: &mut [Group],
    batch: &Batch,
    cfg: &TrainConfig,
    step: usize,
) -> Result<Vec<ObjectiveParts>> {
    train_step_inner(groups, batch, cfg).map_err(|e| match e {
        Error::NonFinite { op } => Error::NanLoss {
            step: step as u64,
            dump: format!("first non-finite value produced by {op}"),
        },
        other => other,
    })
}

fn train_step_inner(
    groups: &mut [Group],
    batch: &Batch,
    cfg: &TrainConfig,
) -> Result<Vec<ObjectiveParts>> {
    let weights = cfg.weights();
    let reversal = Reversal::Adversarial(cfg.eta);
    let mut outputs = Vec::with_capacity(groups.len());
    for g in groups.iter_mut() {
        outputs.push(g.forward(batch, reversal)?);
    }
    let needs_peers = !matches!(cfg.variant, Variant::Naive | Variant::Dann | Variant::Ne);
    let mut records = Vec::with_capacity(groups.len());
    let mut roots = Vec::with_capacity(groups.len());
    for (idx, g) in groups.iter_mut().enumerate() {
        let peer = if needs_peers {
            let peers: Vec<&BatchOutputs> = outputs
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != idx)
                .map(|(_, o)| o)
                .collect();
            Some(PeerView::mixture(&peers)?)
        } else {
            None
        };
        let obj = group_objective(
            &mut g.graph,
            cfg.variant,
            &outputs[idx],
            peer.as_ref(),
            &weights,
            cfg.prober_domain,
        )?;
        records.push(obj.parts);
        roots.push(obj.root);
    }
    // All objectives are built against pre-update snapshots; only now do the
    // groups move.
    for (g, root) in groups.iter_mut().zip(roots) {
        g.graph.backward(root)?;
        g.apply_updates()?;
    }
    Ok(records)
}

/// Labeled source splits plus the unlabeled target stream. `target_dev` is
/// only read for logging curves; training decisions never see it.
#[derive(Debug, Clone)]
pub struct TrainCorpora {
    pub source_train: Vec<Document>,
    pub source_dev: Vec<Document>,
    pub target_train: Vec<Document>,
    pub target_dev: Vec<Document>,
}

/// Mean loss components over the steps since the previous evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanParts {
    pub total: f64,
    pub cls: Option<f64>,
    pub dom: Option<f64>,
    pub mutual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupEval {
    pub group: usize,
    pub source_dev: Metrics,
    pub target_dev: Option<Metrics>,
    pub mean_loss: MeanParts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub epoch: usize,
    pub groups: Vec<GroupEval>,
    pub best_group: usize,
    pub best_accuracy: f64,
    pub checkpointed: bool,
}

pub struct FitResult {
    pub checkpoint: Checkpoint,
    pub log: Vec<EvalRecord>,
    pub steps: usize,
    pub stopped_early: bool,
}

fn mean_parts(window: &[ObjectiveParts]) -> MeanParts {
    let mean_of = |f: fn(&ObjectiveParts) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = window.iter().filter_map(f).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    MeanParts {
        total: window.iter().map(|p| p.total).sum::<f64>() / window.len().max(1) as f64,
        cls: mean_of(|p| p.cls),
        dom: mean_of(|p| p.dom),
        mutual: mean_of(|p| p.mutual),
    }
}

fn check_labeled(docs: &[Document], what: &'static str) -> Result<()> {
    if docs.is_empty() {
        return Err(Error::EmptySplit { split: what });
    }
    match docs.iter().find(|d| d.label.is_none()) {
        Some(d) => Err(Error::UnlabeledDocument { doc_id: d.id }),
        None => Ok(()),
    }
}

/// Train until source-dev accuracy stops improving (or `max_epochs` ends),
/// checkpointing on every strict improvement of the best group's accuracy.
/// Returns the best checkpoint plus the full evaluation log.
pub fn fit(cfg: &TrainConfig, corpora: &TrainCorpora, vocab_tokens: &[String]) -> Result<FitResult> {
    cfg.validate()?;
    check_labeled(&corpora.source_train, "source train")?;
    check_labeled(&corpora.source_dev, "source dev")?;
    if cfg.variant != Variant::Naive && corpora.target_train.is_empty() {
        return Err(Error::EmptySplit { split: "target train" });
    }
    let mut groups = (0..cfg.num_groups)
        .map(|g| Group::new(g, cfg, &mut init_rng(cfg.seed, g)))
        .collect::<Result<Vec<_>>>()?;
    let mut batch_rng = batching_rng(cfg.seed);
    let train_docs: Vec<Document> = match cfg.mix() {
        DomainMix::SingleStream => corpora.source_train.clone(),
        DomainMix::HalfHalf => corpora
            .source_train
            .iter()
            .chain(corpora.target_train.iter())
            .cloned()
            .collect(),
    };

    let mut log: Vec<EvalRecord> = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut best_acc = f64::NEG_INFINITY;
    let mut evals_since_improvement = 0usize;
    let mut windows: Vec<Vec<ObjectiveParts>> = vec![Vec::new(); cfg.num_groups];
    let mut step = 0usize;
    let mut stopped_early = false;

    'epochs: for epoch in 0..cfg.max_epochs {
        let batches = make_batches(&train_docs, cfg.batch_size, &mut batch_rng, cfg.mix())?;
        for batch in &batches {
            step += 1;
            let parts = train_step(&mut groups, batch, cfg, step)?;
            for (w, p) in windows.iter_mut().zip(parts.iter()) {
                w.push(*p);
            }
            if step.is_multiple_of(cfg.eval_every) {
                let record = run_evaluation(
                    cfg,
                    corpora,
                    &mut groups,
                    &mut windows,
                    step,
                    epoch,
                    &mut best,
                    &mut best_acc,
                    vocab_tokens,
                )?;
                let improved = record.checkpointed;
                log.push(record);
                if improved {
                    evals_since_improvement = 0;
                } else {
                    evals_since_improvement += 1;
                    if evals_since_improvement >= cfg.patience {
                        stopped_early = true;
                        break 'epochs;
                    }
                }
            }
        }
    }

    if best.is_none() {
        // Too few steps to hit the cadence: evaluate once at the end.
        let record = run_evaluation(
            cfg,
            corpora,
            &mut groups,
            &mut windows,
            step,
            cfg.max_epochs.saturating_sub(1),
            &mut best,
            &mut best_acc,
            vocab_tokens,
        )?;
        log.push(record);
    }
    Ok(FitResult {
        checkpoint: best.expect("at least one evaluation ran"),
        log,
        steps: step,
        stopped_early,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_evaluation(
    cfg: &TrainConfig,
    corpora: &TrainCorpora,
    groups: &mut [Group],
    windows: &mut [Vec<ObjectiveParts>],
    step: usize,
    epoch: usize,
    best: &mut Option<Checkpoint>,
    best_acc: &mut f64,
    vocab_tokens: &[String],
) -> Result<EvalRecord> {
    let mut evals = Vec::with_capacity(groups.len());
    for (idx, g) in groups.iter_mut().enumerate() {
        let source_dev = g.evaluate_classifier(&corpora.source_dev)?;
        let target_dev = if corpora.target_dev.is_empty() {
            None
        } else {
            Some(g.evaluate_classifier(&corpora.target_dev)?)
        };
        evals.push(GroupEval {
            group: g.id,
            source_dev,
            target_dev,
            mean_loss: mean_parts(&windows[idx]),
        });
        windows[idx].clear();
    }
    let mut best_group = 0usize;
    for (i, e) in evals.iter().enumerate() {
        if e.source_dev.accuracy > evals[best_group].source_dev.accuracy {
            best_group = i;
        }
    }
    let acc = evals[best_group].source_dev.accuracy;
    let improved = acc > *best_acc;
    if improved {
        *best_acc = acc;
        *best = Some(Checkpoint::capture(cfg, groups, step, best_group, &evals, vocab_tokens)?);
    }
    Ok(EvalRecord { step, epoch, groups: evals, best_group, best_accuracy: acc, checkpointed: improved })
}

#[cfg(test)]
mod tests;
