//! Independent check that the synthetic corpora actually contain a domain
//! shift: a plain bag-of-words softmax regression (hand-rolled f64 loops, no
//! graph machinery) trained on source reviews must classify source test well
//! and target test markedly worse, and closing the private-word gap must
//! close the accuracy gap.

use std::collections::HashMap;

use daml_core::corpus::synth::{gen_synthetic, GenDoc, SynthSpec};

struct BowModel {
    vocab: HashMap<String, usize>,
    w: Vec<Vec<f64>>, // class x vocab
    b: Vec<f64>,
}

/// Sparse normalized token counts: (vocab index, count / doc length).
fn featurize(doc: &GenDoc, vocab: &HashMap<String, usize>) -> Vec<(usize, f64)> {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    let mut total = 0.0;
    for s in &doc.sentences {
        for w in s {
            total += 1.0;
            if let Some(&i) = vocab.get(w) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
    }
    let mut x: Vec<(usize, f64)> = counts.into_iter().map(|(i, c)| (i, c / total)).collect();
    x.sort_unstable_by_key(|&(i, _)| i);
    x
}

fn logits_of(model_w: &[Vec<f64>], model_b: &[f64], x: &[(usize, f64)]) -> Vec<f64> {
    model_b
        .iter()
        .enumerate()
        .map(|(c, &b)| b + x.iter().map(|&(i, v)| model_w[c][i] * v).sum::<f64>())
        .collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

fn train_bow(train: &[GenDoc], classes: usize, iters: usize, lr: f64) -> BowModel {
    let mut vocab = HashMap::new();
    for doc in train {
        for s in &doc.sentences {
            for w in s {
                let next = vocab.len();
                vocab.entry(w.clone()).or_insert(next);
            }
        }
    }
    let v = vocab.len();
    let feats: Vec<Vec<(usize, f64)>> = train.iter().map(|d| featurize(d, &vocab)).collect();
    let labels: Vec<usize> = train.iter().map(|d| d.label as usize - 1).collect();
    let mut w = vec![vec![0.0; v]; classes];
    let mut b = vec![0.0; classes];
    let n = train.len() as f64;
    for _ in 0..iters {
        let mut gw = vec![vec![0.0; v]; classes];
        let mut gb = vec![0.0; classes];
        for (x, &y) in feats.iter().zip(labels.iter()) {
            let p = softmax(&logits_of(&w, &b, x));
            for c in 0..classes {
                let delta = p[c] - if c == y { 1.0 } else { 0.0 };
                gb[c] += delta / n;
                for &(i, v) in x {
                    gw[c][i] += delta * v / n;
                }
            }
        }
        for c in 0..classes {
            b[c] -= lr * gb[c];
            for (wi, gi) in w[c].iter_mut().zip(gw[c].iter()) {
                *wi -= lr * gi;
            }
        }
    }
    BowModel { vocab, w, b }
}

fn accuracy(model: &BowModel, docs: &[GenDoc]) -> f64 {
    let mut hits = 0usize;
    for doc in docs {
        let x = featurize(doc, &model.vocab);
        let logits = logits_of(&model.w, &model.b, &x);
        let pred = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if pred == doc.label as usize - 1 {
            hits += 1;
        }
    }
    hits as f64 / docs.len() as f64
}

#[test]
fn private_words_create_a_transfer_gap_for_a_bow_classifier() {
    let spec = SynthSpec::default();
    let c = gen_synthetic(&spec).unwrap();
    let model = train_bow(&c.source.train, spec.num_labels as usize, 4000, 80.0);
    let src_acc = accuracy(&model, &c.source.test);
    let tgt_acc = accuracy(&model, &c.target.test);
    assert!(src_acc >= 0.9, "source test accuracy {src_acc:.3} below 0.9");
    assert!(
        tgt_acc <= src_acc - 0.1,
        "target accuracy {tgt_acc:.3} not materially below source {src_acc:.3}"
    );
}

#[test]
fn removing_private_words_removes_the_gap() {
    let spec = SynthSpec {
        p_priv: 0.0,
        train_docs: 600,
        dev_docs: 100,
        test_docs: 200,
        seed: 13,
        ..Default::default()
    };
    let c = gen_synthetic(&spec).unwrap();
    let model = train_bow(&c.source.train, spec.num_labels as usize, 4000, 80.0);
    let src_acc = accuracy(&model, &c.source.test);
    let tgt_acc = accuracy(&model, &c.target.test);
    assert!(src_acc >= 0.9, "source test accuracy {src_acc:.3} below 0.9");
    assert!(
        (src_acc - tgt_acc).abs() <= 0.05,
        "shared-lexicon domains should transfer: src {src_acc:.3} tgt {tgt_acc:.3}"
    );
}
