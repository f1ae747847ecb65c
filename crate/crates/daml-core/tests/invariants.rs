//! Randomized invariants over the ops and plumbing the trainer relies on.
//! These complement the finite-difference suite: that checks gradients
//! against a numeric oracle at fixed points, these check algebraic facts
//! at generated ones.

use daml_core::corpus::{align_labels, Batch, Document, PAD_ID};
use daml_core::graph::Graph;
use daml_core::objectives::{cls_loss, kl_loss};
use daml_core::tensor::Tensor;
use proptest::prelude::*;

fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01..10.0f64, len).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.iter().map(|w| w / total).collect()
    })
}

fn simplex_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=8).prop_flat_map(|n| (simplex(n), simplex(n)))
}

fn raw_docs() -> impl Strategy<Value = Vec<(Vec<Vec<u32>>, Option<u8>, bool)>> {
    proptest::collection::vec(
        (
            proptest::collection::vec(proptest::collection::vec(2u32..=11, 1..=4), 1..=3),
            proptest::option::of(1u8..=5),
            any::<bool>(),
        ),
        1..=4,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_outputs_form_a_distribution(xs in proptest::collection::vec(-30.0..30.0f64, 1..=12)) {
        let mut g = Graph::new();
        g.seal_params();
        let x = g.constant(Tensor::vector(xs.clone()).unwrap()).unwrap();
        let s = g.softmax(x).unwrap();
        let out = g.value(s).data().to_vec();
        let total: f64 = out.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9, "mass {total}");
        for &p in &out {
            prop_assert!(p > 0.0 && p <= 1.0);
        }
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                if xs[i] > xs[j] {
                    prop_assert!(out[i] >= out[j], "order flipped at {i},{j}");
                }
            }
        }
    }

    #[test]
    fn softmax_total_mass_has_zero_gradient(xs in proptest::collection::vec(-30.0..30.0f64, 1..=12)) {
        // sum(softmax(x)) is constant, so the whole chain must cancel.
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(xs).unwrap()).unwrap();
        g.seal_params();
        let s = g.softmax(x).unwrap();
        let root = g.sum(s).unwrap();
        g.backward(root).unwrap();
        for &d in g.grad(x) {
            prop_assert!(d.abs() <= 1e-9, "leaked gradient {d}");
        }
    }

    #[test]
    fn divergence_is_nonnegative_and_vanishes_on_itself((p, q) in simplex_pair()) {
        let mut g = Graph::new();
        g.seal_params();
        let qs = g.constant(Tensor::vector(q).unwrap()).unwrap();
        let d_pq = kl_loss(&mut g, std::slice::from_ref(&p), &[qs]).unwrap();
        prop_assert!(g.value(d_pq).scalar_value() >= -1e-12);
        let ps = g.constant(Tensor::vector(p.clone()).unwrap()).unwrap();
        let d_pp = kl_loss(&mut g, &[p], &[ps]).unwrap();
        prop_assert!(g.value(d_pp).scalar_value().abs() <= 1e-10);
    }

    #[test]
    fn cross_entropy_picks_the_labeled_entry(
        (p, label) in (2usize..=8).prop_flat_map(|n| (simplex(n), 0..n)),
    ) {
        let mut g = Graph::new();
        g.seal_params();
        let probs = g.constant(Tensor::vector(p.clone()).unwrap()).unwrap();
        let loss = cls_loss(&mut g, &[probs], &[Some(label)]).unwrap();
        let expect = -p[label].ln();
        prop_assert!((g.value(loss).scalar_value() - expect).abs() <= 1e-12);
    }

    #[test]
    fn matvec_matches_the_hand_computed_product(
        (rows, cols, m, v) in (1usize..=5, 1usize..=6).prop_flat_map(|(r, c)| {
            (
                Just(r),
                Just(c),
                proptest::collection::vec(-3.0..3.0f64, r * c),
                proptest::collection::vec(-3.0..3.0f64, c),
            )
        }),
    ) {
        let mut g = Graph::new();
        g.seal_params();
        let a = g.constant(Tensor::matrix(rows, cols, m.clone()).unwrap()).unwrap();
        let x = g.constant(Tensor::vector(v.clone()).unwrap()).unwrap();
        let y = g.matvec(a, x).unwrap();
        let out = g.value(y).data();
        prop_assert_eq!(out.len(), rows);
        for (r, &got) in out.iter().enumerate() {
            let want: f64 = (0..cols).map(|c| m[r * cols + c] * v[c]).sum();
            prop_assert!((got - want).abs() <= 1e-9, "row {r}: {got} vs {want}");
        }
    }

    #[test]
    fn batch_padding_masks_mirror_document_shapes(raw in raw_docs()) {
        let docs: Vec<Document> = raw
            .iter()
            .enumerate()
            .map(|(id, (sentences, label, source))| Document {
                id,
                sentences: sentences.clone(),
                label: *label,
                source: *source,
            })
            .collect();
        let batch = Batch::from_docs(docs.clone());
        let max_s = docs.iter().map(|d| d.sentences.len()).max().unwrap();
        let max_w = docs.iter().flat_map(|d| d.sentences.iter().map(Vec::len)).max().unwrap();
        prop_assert_eq!(batch.len(), docs.len());
        for (d, doc) in docs.iter().enumerate() {
            prop_assert_eq!(batch.sent_mask[d].len(), max_s);
            for s in 0..max_s {
                prop_assert_eq!(batch.sent_mask[d][s], s < doc.sentences.len());
                prop_assert_eq!(batch.word_mask[d][s].len(), max_w);
                for w in 0..max_w {
                    let real = doc.sentences.get(s).and_then(|sent| sent.get(w));
                    prop_assert_eq!(batch.word_mask[d][s][w], real.is_some());
                    match real {
                        Some(&t) => prop_assert_eq!(batch.tokens[d][s][w], t),
                        None => prop_assert_eq!(batch.tokens[d][s][w], PAD_ID),
                    }
                }
            }
            prop_assert_eq!(batch.labels[d], doc.label);
            prop_assert_eq!(batch.source[d], doc.source);
        }
    }

    #[test]
    fn ten_way_labels_fold_monotonically_onto_five(l in 1u8..=10) {
        let a = align_labels(l).unwrap();
        prop_assert!((1..=5).contains(&a));
        prop_assert_eq!(a, l.div_ceil(2));
        if l > 1 {
            prop_assert!(align_labels(l - 1).unwrap() <= a);
        }
    }

    #[test]
    fn labels_outside_one_to_ten_are_rejected(l in proptest::sample::select(vec![0u8, 11, 12, 100, 255])) {
        prop_assert!(align_labels(l).is_err());
    }
}
