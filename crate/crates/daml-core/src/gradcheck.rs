//! Finite-difference validation of reverse-mode gradients.
//!
//! The reversal layer is deliberately not the gradient of any scalar, so
//! builders containing it are checked with `finite_diff_check_scaled`, which
//! asserts analytic == factor * numeric (factor = -eta for a pure reversal
//! path). Composite objectives are checked with the reversal transparent and
//! the reversal's own contract asserted separately.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Relative error floor; differences below this scale are compared absolutely.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct OpReport {
    pub name: String,
    pub tolerance: f64,
    pub checked: usize,
    pub max_rel_err: f64,
    /// "param_name[index]" of the worst entry, with its analytic and scaled
    /// numeric gradients.
    pub worst: Option<(String, f64, f64)>,
}

impl OpReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn summary(&self) -> String {
        match &self.worst {
            Some((loc, a, n)) => format!(
                "{}: {} entries, max rel err {:.3e} at {loc} (analytic {a:.6e}, numeric {n:.6e}) -> {}",
                self.name,
                self.checked,
                self.max_rel_err,
                if self.passed() { "ok" } else { "FAIL" }
            ),
            None => format!("{}: {} entries, max rel err 0 -> ok", self.name, self.checked),
        }
    }
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Check analytic gradients against central finite differences.
pub fn finite_diff_check<F>(
    name: &str,
    params: &[(String, Tensor)],
    tolerance: f64,
    build: F,
) -> Result<OpReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    finite_diff_check_scaled(name, params, tolerance, 1.0, build)
}

/// Check that analytic gradients equal `factor` times the central
/// finite-difference gradients of the forward value.
pub fn finite_diff_check_scaled<F>(
    name: &str,
    params: &[(String, Tensor)],
    tolerance: f64,
    factor: f64,
    build: F,
) -> Result<OpReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let eval = |values: &[Tensor]| -> Result<(f64, Graph, Vec<NodeId>, NodeId)> {
        let mut g = Graph::new();
        let ids = values
            .iter()
            .map(|t| g.param(t.clone()))
            .collect::<Result<Vec<NodeId>>>()?;
        g.seal_params();
        let root = build(&mut g, &ids)?;
        let value = g.value(root);
        if !value.is_scalar() {
            return Err(Error::NonScalarRoot { elems: value.elems() });
        }
        Ok((value.scalar_value(), g, ids, root))
    };

    let base: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let (v1, mut g1, ids, root) = eval(&base)?;
    let (v2, _, _, _) = eval(&base)?;
    if v1.to_bits() != v2.to_bits() {
        return Err(Error::NonDeterministicBuilder);
    }
    g1.backward(root)?;
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| g1.grad(id).to_vec()).collect();

    let mut report = OpReport {
        name: name.to_string(),
        tolerance,
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for (pi, (pname, _)) in params.iter().enumerate() {
        for (j, &a) in analytic[pi].iter().enumerate() {
            let mut plus = base.clone();
            plus[pi].data_mut()[j] += FD_STEP;
            let mut minus = base.clone();
            minus[pi].data_mut()[j] -= FD_STEP;
            let (fp, _, _, _) = eval(&plus)?;
            let (fm, _, _, _) = eval(&minus)?;
            let numeric = factor * (fp - fm) / (2.0 * FD_STEP);
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = rel;
                report.worst = Some((format!("{pname}[{j}]"), a, numeric));
            }
        }
    }
    Ok(report)
}

fn rand_vec(rng: &mut ChaCha12Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Finite-difference checks for every differentiable op, on random inputs
/// in [-2, 2] (positive inputs where the op demands them).
pub fn run_op_suite(seed: u64, tolerance: f64) -> Result<Vec<OpReport>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut reports = Vec::new();

    let v =
        |rng: &mut ChaCha12Rng, n: usize| Tensor::vector(rand_vec(rng, n, -2.0, 2.0)).unwrap();
    let vpos =
        |rng: &mut ChaCha12Rng, n: usize| Tensor::vector(rand_vec(rng, n, 0.1, 2.0)).unwrap();
    let m = |rng: &mut ChaCha12Rng, r: usize, c: usize| {
        Tensor::matrix(r, c, rand_vec(rng, r * c, -2.0, 2.0)).unwrap()
    };

    // Reduce a vector node to a scalar against a fixed weight vector so the
    // upstream gradient is non-uniform.
    let w5 = Tensor::vector(vec![0.7, -1.3, 0.4, 2.0, -0.6]).unwrap();

    {
        let params = vec![("a".into(), v(&mut rng, 5)), ("b".into(), v(&mut rng, 5))];
        let w = w5.clone();
        reports.push(finite_diff_check("add", &params, tolerance, move |g, p| {
            let s = g.add(p[0], p[1])?;
            let w = g.constant(w.clone())?;
            g.dot(s, w)
        })?);
    }
    {
        let params = vec![("a".into(), v(&mut rng, 5)), ("b".into(), v(&mut rng, 5))];
        let w = w5.clone();
        reports.push(finite_diff_check("sub", &params, tolerance, move |g, p| {
            let s = g.sub(p[0], p[1])?;
            let w = g.constant(w.clone())?;
            g.dot(s, w)
        })?);
    }
    {
        let params = vec![("a".into(), v(&mut rng, 5)), ("b".into(), v(&mut rng, 5))];
        let w = w5.clone();
        reports.push(finite_diff_check("mul", &params, tolerance, move |g, p| {
            let s = g.mul(p[0], p[1])?;
            let w = g.constant(w.clone())?;
            g.dot(s, w)
        })?);
    }
    {
        let params = vec![("a".into(), v(&mut rng, 5))];
        let w = w5.clone();
        reports.push(finite_diff_check("scale", &params, tolerance, move |g, p| {
            let s = g.scale(p[0], -1.7)?;
            let w = g.constant(w.clone())?;
            g.dot(s, w)
        })?);
    }
    for (name, which) in [("tanh", 0u8), ("sigmoid", 1), ("exp", 2), ("log", 3)] {
        let params = vec![(
            "a".to_string(),
            if which == 3 { vpos(&mut rng, 5) } else { v(&mut rng, 5) },
        )];
        let w = w5.clone();
        reports.push(finite_diff_check(name, &params, tolerance, move |g, p| {
            let y = match which {
                0 => g.tanh(p[0])?,
                1 => g.sigmoid(p[0])?,
                2 => g.exp(p[0])?,
                _ => g.log(p[0])?,
            };
            let w = g.constant(w.clone())?;
            g.dot(y, w)
        })?);
    }
    {
        let params = vec![("A".into(), m(&mut rng, 3, 4)), ("B".into(), m(&mut rng, 4, 2))];
        let wm = m(&mut rng, 3, 2);
        reports.push(finite_diff_check("matmul", &params, tolerance, move |g, p| {
            let y = g.matmul(p[0], p[1])?;
            let w = g.constant(wm.clone())?;
            let prod = g.mul(y, w)?;
            g.sum(prod)
        })?);
    }
    {
        let params = vec![("A".into(), m(&mut rng, 4, 3)), ("x".into(), v(&mut rng, 3))];
        let w = Tensor::vector(vec![1.1, -0.2, 0.5, 0.9]).unwrap();
        reports.push(finite_diff_check("matvec", &params, tolerance, move |g, p| {
            let y = g.matvec(p[0], p[1])?;
            let w = g.constant(w.clone())?;
            g.dot(y, w)
        })?);
    }
    {
        let params = vec![("a".into(), v(&mut rng, 4)), ("b".into(), v(&mut rng, 4))];
        reports.push(finite_diff_check("dot", &params, tolerance, |g, p| g.dot(p[0], p[1]))?);
    }
    {
        let params = vec![
            ("a".into(), v(&mut rng, 2)),
            ("s".into(), Tensor::scalar(0.37)),
            ("b".into(), v(&mut rng, 2)),
        ];
        let w = Tensor::vector(vec![0.3, -0.8, 1.5, 0.2, -0.4]).unwrap();
        reports.push(finite_diff_check("concat", &params, tolerance, move |g, p| {
            let c = g.concat(&[p[0], p[1], p[2]])?;
            let w = g.constant(w.clone())?;
            g.dot(c, w)
        })?);
    }
    {
        let params = vec![("r0".into(), v(&mut rng, 3)), ("r1".into(), v(&mut rng, 3))];
        let wm = m(&mut rng, 2, 3);
        reports.push(finite_diff_check("stack_rows", &params, tolerance, move |g, p| {
            let s = g.stack_rows(&[p[0], p[1]])?;
            let w = g.constant(wm.clone())?;
            let prod = g.mul(s, w)?;
            g.sum(prod)
        })?);
    }
    {
        let params = vec![("a".into(), v(&mut rng, 6))];
        let wm = m(&mut rng, 2, 3);
        reports.push(finite_diff_check("reshape", &params, tolerance, move |g, p| {
            let r = g.reshape(p[0], vec![2, 3])?;
            let w = g.constant(wm.clone())?;
            let prod = g.mul(r, w)?;
            g.sum(prod)
        })?);
    }
    {
        let params = vec![("a".into(), v(&mut rng, 5))];
        reports.push(finite_diff_check("sum", &params, tolerance, |g, p| g.sum(p[0]))?);
    }
    {
        let params = vec![("a".into(), v(&mut rng, 5))];
        reports.push(finite_diff_check("mean", &params, tolerance, |g, p| g.mean(p[0]))?);
    }
    {
        // root = KL(p || softmax(z)) for a fixed distribution p.
        let params = vec![("z".into(), v(&mut rng, 5))];
        let raw = rand_vec(&mut rng, 5, 0.2, 2.0);
        let total: f64 = raw.iter().sum();
        let p_dist: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let entropy: f64 = p_dist.iter().map(|p| p * p.ln()).sum();
        reports.push(finite_diff_check("softmax", &params, tolerance, move |g, p| {
            let sm = g.softmax(p[0])?;
            let lsm = g.log(sm)?;
            let pd = g.constant(Tensor::vector(p_dist.clone()).unwrap())?;
            let ce = g.dot(pd, lsm)?;
            let h = g.constant(Tensor::scalar(entropy))?;
            g.sub(h, ce)
        })?);
    }
    {
        let params = vec![("z".into(), v(&mut rng, 5))];
        let w = w5.clone();
        let mask = vec![true, false, true, true, false];
        reports.push(finite_diff_check("masked_softmax", &params, tolerance, move |g, p| {
            let sm = g.masked_softmax(p[0], &mask)?;
            let w = g.constant(w.clone())?;
            g.dot(sm, w)
        })?);
    }
    {
        let params = vec![("table".into(), m(&mut rng, 3, 4))];
        let w = Tensor::vector(vec![0.4, -1.0, 0.8, 0.1]).unwrap();
        reports.push(finite_diff_check("embed_row", &params, tolerance, move |g, p| {
            let r0 = g.embed_row(p[0], 0)?;
            let r2 = g.embed_row(p[0], 2)?;
            let s = g.add(r0, r2)?;
            let w = g.constant(w.clone())?;
            g.dot(s, w)
        })?);
    }
    {
        // Reversal path: analytic gradient must equal -eta times the
        // finite-difference gradient of the (identity) forward value.
        let eta = 0.005;
        let params = vec![("x".into(), v(&mut rng, 5))];
        let w = w5.clone();
        reports.push(finite_diff_check_scaled(
            "grad_reverse",
            &params,
            tolerance,
            -eta,
            move |g, p| {
                let r = g.grad_reverse(p[0], eta)?;
                let w = g.constant(w.clone())?;
                g.dot(r, w)
            },
        )?);
    }
    {
        // Constant root: all gradients and errors are exactly zero.
        let params = vec![("unused".into(), v(&mut rng, 3))];
        reports.push(finite_diff_check("constant", &params, tolerance, |g, _| {
            g.constant(Tensor::scalar(1.25))
        })?);
    }
    Ok(reports)
}

/// Finite-difference check of the full hybrid objective (supervised +
/// adversarial + prober mutual term) through the whole model: embeddings,
/// both BiGRU levels, both attention levels, and all three heads. The
/// reversal layer runs transparent here; its scaling contract is asserted by
/// the `grad_reverse` entry of the op suite.
pub fn full_objective_check(seed: u64, tolerance: f64) -> Result<OpReport> {
    use crate::corpus::{Batch, Document};
    use crate::model::{model_from_nodes, model_template, ModelDims};
    use crate::nn::ExtractorDims;
    use crate::objectives::{
        group_objective, LossWeights, MutualScope, PeerView, Reversal, Variant,
    };

    let dims = ModelDims {
        extractor: ExtractorDims { vocab: 10, embed: 3, word_hidden: 3, sent_hidden: 3 },
        num_labels: 3,
        head_hidden: 3,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let params = model_template("m", &dims, true, &mut rng, 0.4);
    let docs = vec![
        Document {
            id: 0,
            sentences: vec![vec![2, 3, 4], vec![5, 6]],
            label: Some(2),
            source: true,
        },
        Document { id: 1, sentences: vec![vec![7, 8, 9]], label: None, source: false },
    ];
    let peer = PeerView {
        cls: vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3]],
        features: vec![
            vec![0.2, -0.1, 0.4, 0.05, -0.2, 0.3],
            vec![-0.3, 0.2, 0.0, 0.15, 0.1, -0.05],
        ],
    };
    let weights = LossWeights::new(0.005, 0.7, 0.9)?;
    finite_diff_check("daml_objective", &params, tolerance, move |g, ids| {
        let model = model_from_nodes(dims, true, &mut ids.iter().copied());
        let batch = Batch::from_docs(docs.clone());
        let out = crate::model::forward_batch(g, &batch, &model, Reversal::Transparent)?;
        let obj = group_objective(g, Variant::Daml, &out, Some(&peer), &weights, MutualScope::Both)?;
        Ok(obj.root)
    })
}
