use super::*;
use crate::corpus::make_batches;
use crate::tensor::Tensor;

fn doc(id: usize, label: Option<u8>, source: bool, sentences: &[&[u32]]) -> Document {
    Document { id, sentences: sentences.iter().map(|s| s.to_vec()).collect(), label, source }
}

fn tiny_config(variant: Variant, num_groups: usize) -> TrainConfig {
    TrainConfig {
        variant,
        num_groups,
        eta: 0.005,
        lambda_d: 0.5,
        lambda_m: 0.5,
        learning_rate: 0.01,
        batch_size: 4,
        max_epochs: 3,
        eval_every: 2,
        patience: 3,
        dims: ModelDims {
            extractor: ExtractorDims { vocab: 12, embed: 3, word_hidden: 2, sent_hidden: 2 },
            num_labels: 3,
            head_hidden: 3,
        },
        seed: 7,
        prober_domain: MutualScope::Target,
        shared_embedding_init: false,
    }
}

/// Three token clusters per domain so a 3-label classifier has signal.
fn tiny_corpora() -> TrainCorpora {
    let src_pool: [[u32; 2]; 3] = [[2, 3], [5, 6], [8, 9]];
    let tgt_pool: [[u32; 2]; 3] = [[3, 4], [6, 7], [9, 10]];
    let source_train = (0..12)
        .map(|i| {
            let t = src_pool[i % 3];
            doc(i, Some((i % 3) as u8 + 1), true, &[&t, &[t[1], t[0], t[0]]])
        })
        .collect();
    let source_dev = (0..6)
        .map(|i| {
            let t = src_pool[i % 3];
            doc(100 + i, Some((i % 3) as u8 + 1), true, &[&[t[0], t[1], t[1]]])
        })
        .collect();
    let target_train = (0..6)
        .map(|i| {
            let t = tgt_pool[i % 3];
            doc(200 + i, None, false, &[&t])
        })
        .collect();
    let target_dev = (0..6)
        .map(|i| {
            let t = tgt_pool[i % 3];
            doc(300 + i, Some((i % 3) as u8 + 1), false, &[&[t[1], t[0]]])
        })
        .collect();
    TrainCorpora { source_train, source_dev, target_train, target_dev }
}

fn make_groups(cfg: &TrainConfig) -> Vec<Group> {
    (0..cfg.num_groups)
        .map(|gi| Group::new(gi, cfg, &mut init_rng(cfg.seed, gi)).unwrap())
        .collect()
}

fn tiny_vocab() -> Vec<String> {
    (0..12).map(|i| format!("t{i}")).collect()
}

fn mixed_batches(cfg: &TrainConfig, corpora: &TrainCorpora) -> Vec<Batch> {
    let all: Vec<Document> =
        corpora.source_train.iter().chain(&corpora.target_train).cloned().collect();
    let mut rng = batching_rng(cfg.seed);
    make_batches(&all, cfg.batch_size, &mut rng, DomainMix::HalfHalf).unwrap()
}

#[test]
fn config_validation_rules() {
    assert!(tiny_config(Variant::Daml, 2).validate().is_ok());
    assert!(tiny_config(Variant::Daml, 1).validate().is_err());
    assert!(tiny_config(Variant::Naive, 1).validate().is_ok());
    assert!(tiny_config(Variant::Naive, 2).validate().is_err());
    assert!(tiny_config(Variant::Dann, 2).validate().is_err());
    assert!(tiny_config(Variant::Ne, 3).validate().is_ok());

    let mut bad = tiny_config(Variant::Daml, 2);
    bad.eta = -1.0;
    assert!(bad.validate().is_err());
    let mut bad = tiny_config(Variant::Daml, 2);
    bad.batch_size = 1;
    assert!(bad.validate().is_err());
    let mut bad = tiny_config(Variant::Daml, 2);
    bad.dims.num_labels = 1;
    assert!(bad.validate().is_err());
}

#[test]
fn batch_mix_follows_variant_and_weights() {
    assert_eq!(tiny_config(Variant::Naive, 1).mix(), DomainMix::SingleStream);
    assert_eq!(tiny_config(Variant::Daml, 2).mix(), DomainMix::HalfHalf);
    assert_eq!(tiny_config(Variant::Sml, 2).mix(), DomainMix::HalfHalf);
    let mut dann = tiny_config(Variant::Dann, 1);
    assert_eq!(dann.mix(), DomainMix::HalfHalf);
    dann.lambda_d = 0.0;
    assert_eq!(dann.mix(), DomainMix::SingleStream);
    let mut ne = tiny_config(Variant::Ne, 2);
    ne.lambda_d = 0.0;
    assert_eq!(ne.mix(), DomainMix::SingleStream);
}

#[test]
fn shared_embedding_init_installs_one_table_in_every_group() {
    let mut cfg = tiny_config(Variant::Daml, 2);
    cfg.shared_embedding_init = true;
    let groups = make_groups(&cfg);
    let e0 = groups[0].graph.value(groups[0].params.extractor.embedding);
    let e1 = groups[1].graph.value(groups[1].params.extractor.embedding);
    assert_eq!(e0.data(), e1.data());
    let w0 = groups[0].graph.value(groups[0].params.extractor.word_fwd.w_z);
    let w1 = groups[1].graph.value(groups[1].params.extractor.word_fwd.w_z);
    assert_ne!(w0.data(), w1.data());

    let plain = make_groups(&tiny_config(Variant::Daml, 2));
    let p0 = plain[0].graph.value(plain[0].params.extractor.embedding);
    let p1 = plain[1].graph.value(plain[1].params.extractor.embedding);
    assert_ne!(p0.data(), p1.data());
}

#[test]
fn train_step_components_match_host_computation() {
    let cfg = tiny_config(Variant::Daml, 2);
    let batch = Batch::from_docs(vec![
        doc(0, Some(2), true, &[&[2, 3], &[4]]),
        doc(1, None, false, &[&[6, 7]]),
    ]);

    // One probe pass to capture the values each objective will see.
    let mut probe = make_groups(&cfg);
    let mut outs = Vec::new();
    for g in probe.iter_mut() {
        outs.push(g.forward(&batch, Reversal::Adversarial(cfg.eta)).unwrap());
    }
    let disc_vals: Vec<Vec<f64>> = probe
        .iter()
        .zip(&outs)
        .map(|(g, o)| o.disc.iter().map(|&s| g.graph.value(s).scalar_value()).collect())
        .collect();
    let prober_vals: Vec<Vec<Vec<f64>>> = probe
        .iter()
        .zip(&outs)
        .map(|(g, o)| {
            o.prober
                .as_ref()
                .unwrap()
                .iter()
                .map(|&p| g.graph.value(p).data().to_vec())
                .collect()
        })
        .collect();

    let mut expected = Vec::new();
    for me in 0..2 {
        let peer = 1 - me;
        // Source doc 0 with label 2 (index 1); target doc 1 has no cls term.
        let cls = -outs[me].cls_values[0][1].ln();
        let dom = (-disc_vals[me][0].ln() - (1.0 - disc_vals[me][1]).ln()) / 2.0;
        // Mutual term: KL(peer classifier || own prober) on the target doc.
        let t = &outs[peer].cls_values[1];
        let s = &prober_vals[me][1];
        let kl: f64 =
            t.iter().zip(s).map(|(&ti, &si)| ti * ti.max(1e-12).ln() - ti * si.ln()).sum();
        expected.push((cls, dom, kl));
    }

    let mut groups = make_groups(&cfg);
    let parts = train_step(&mut groups, &batch, &cfg, 1).unwrap();
    for (p, (cls, dom, kl)) in parts.iter().zip(expected) {
        assert!((p.cls.unwrap() - cls).abs() < 1e-12);
        assert!((p.dom.unwrap() - dom).abs() < 1e-12);
        assert!((p.mutual.unwrap() - kl).abs() < 1e-12);
        let total = cls + cfg.lambda_d * dom + cfg.lambda_m * kl;
        assert!((p.total - total).abs() < 1e-12);
    }
}

#[test]
fn daml_with_zero_mutual_weight_tracks_dann_bit_for_bit() {
    let mut daml_cfg = tiny_config(Variant::Daml, 2);
    daml_cfg.lambda_m = 0.0;
    let dann_cfg = TrainConfig { variant: Variant::Dann, num_groups: 1, ..daml_cfg.clone() };

    let corpora = tiny_corpora();
    let batches = mixed_batches(&daml_cfg, &corpora);
    let mut daml_groups = make_groups(&daml_cfg);
    let mut dann_groups = make_groups(&dann_cfg);
    for (i, b) in batches.iter().enumerate() {
        let dp = train_step(&mut daml_groups, b, &daml_cfg, i + 1).unwrap();
        let np = train_step(&mut dann_groups, b, &dann_cfg, i + 1).unwrap();
        assert_eq!(dp[0].cls.unwrap().to_bits(), np[0].cls.unwrap().to_bits());
        assert_eq!(dp[0].dom.unwrap().to_bits(), np[0].dom.unwrap().to_bits());
        assert!(dp[0].mutual.is_none() && np[0].mutual.is_none());
        assert_eq!(dp[0].total.to_bits(), np[0].total.to_bits());
    }
    // Group 0's shared tensors stayed on the dann trajectory; only the four
    // prober tensors are extra.
    let d0 = daml_groups[0].named_parameters();
    let n0 = dann_groups[0].named_parameters();
    assert_eq!(d0.len(), n0.len() + 4);
    for ((da, dt), (na, nt)) in d0.iter().zip(n0.iter()) {
        assert_eq!(da, na);
        assert_eq!(dt.data(), nt.data());
    }
}

#[test]
fn dann_with_zero_domain_weight_reduces_to_naive() {
    let corpora = tiny_corpora();
    let naive = tiny_config(Variant::Naive, 1);
    let mut dann = tiny_config(Variant::Dann, 1);
    dann.lambda_d = 0.0;
    let a = fit(&naive, &corpora, &tiny_vocab()).unwrap();
    let b = fit(&dann, &corpora, &tiny_vocab()).unwrap();
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint.step, b.checkpoint.step);
    assert_eq!(a.checkpoint.groups, b.checkpoint.groups);
}

#[test]
fn fit_runs_are_deterministic_and_checkpoint_on_improvement() {
    let corpora = tiny_corpora();
    let cfg = tiny_config(Variant::Daml, 2);
    let a = fit(&cfg, &corpora, &tiny_vocab()).unwrap();
    let b = fit(&cfg, &corpora, &tiny_vocab()).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());

    assert!(!a.log.is_empty());
    let mut last_best = f64::NEG_INFINITY;
    let mut last_ckpt_step = None;
    for rec in &a.log {
        assert_eq!(rec.groups.len(), 2);
        assert!(rec.step.is_multiple_of(cfg.eval_every));
        if rec.checkpointed {
            assert!(rec.best_accuracy > last_best);
            last_best = rec.best_accuracy;
            last_ckpt_step = Some(rec.step);
        }
        for ge in &rec.groups {
            assert!(ge.target_dev.is_some());
            assert!(ge.mean_loss.total.is_finite());
        }
    }
    assert_eq!(Some(a.checkpoint.step), last_ckpt_step);
    assert_eq!(a.checkpoint.vocab_tokens, tiny_vocab());
    assert_eq!(a.checkpoint.group_dev.len(), 2);
}

#[test]
fn patience_stops_after_consecutive_non_improvements() {
    let corpora = tiny_corpora();
    let mut cfg = tiny_config(Variant::Daml, 2);
    cfg.eval_every = 1;
    cfg.patience = 2;
    cfg.max_epochs = 20;
    let r = fit(&cfg, &corpora, &tiny_vocab()).unwrap();
    assert!(r.stopped_early);
    // Source-dev accuracy over 6 docs can only improve 6 times, so with
    // patience 2 the run must stop long before the epoch budget.
    assert!(r.steps < 20 * 6);
    let tail = &r.log[r.log.len() - cfg.patience..];
    assert!(tail.iter().all(|rec| !rec.checkpointed));
    let last_improved = r.log.iter().rev().find(|rec| rec.checkpointed).unwrap();
    assert_eq!(last_improved.step, r.checkpoint.step);
}

#[test]
fn final_evaluation_runs_when_cadence_never_fires() {
    let corpora = tiny_corpora();
    let mut cfg = tiny_config(Variant::Daml, 2);
    cfg.eval_every = 1000;
    cfg.max_epochs = 1;
    let r = fit(&cfg, &corpora, &tiny_vocab()).unwrap();
    assert_eq!(r.log.len(), 1);
    assert!(r.log[0].checkpointed);
    assert_eq!(r.checkpoint.step, r.steps);
    assert!(!r.stopped_early);
}

#[test]
fn fit_rejects_bad_corpora() {
    let cfg = tiny_config(Variant::Daml, 2);
    let good = tiny_corpora();
    let mut unlabeled = good.clone();
    unlabeled.source_train[0].label = None;
    assert!(matches!(
        fit(&cfg, &unlabeled, &tiny_vocab()),
        Err(Error::UnlabeledDocument { .. })
    ));
    let mut no_dev = good.clone();
    no_dev.source_dev.clear();
    assert!(matches!(fit(&cfg, &no_dev, &tiny_vocab()), Err(Error::EmptySplit { .. })));
    let mut no_target = good.clone();
    no_target.target_train.clear();
    assert!(matches!(
        fit(&cfg, &no_target, &tiny_vocab()),
        Err(Error::EmptySplit { split: "target train" })
    ));
    // The naive variant never looks at the target stream.
    let mut no_target2 = good.clone();
    no_target2.target_train.clear();
    assert!(fit(&tiny_config(Variant::Naive, 1), &no_target2, &tiny_vocab()).is_ok());
}

#[test]
fn select_model_prefers_accuracy_then_lower_id() {
    let cfg = tiny_config(Variant::Daml, 2);
    let dev = tiny_corpora().source_dev;

    // Same init stream in both groups: exact tie, lower id wins.
    let mut tied = vec![
        Group::new(0, &cfg, &mut init_rng(cfg.seed, 0)).unwrap(),
        Group::new(1, &cfg, &mut init_rng(cfg.seed, 0)).unwrap(),
    ];
    assert_eq!(select_model(&mut tied, &dev).unwrap(), 0);

    // Label the dev docs with group 1's own predictions: group 1 is perfect.
    let mut groups = make_groups(&cfg);
    let labeled: Vec<Document> = dev
        .iter()
        .map(|d| {
            let mut relabeled = d.clone();
            relabeled.label = Some(groups[1].predict(d).unwrap());
            relabeled
        })
        .collect();
    let acc0 = groups[0].evaluate_classifier(&labeled).unwrap().accuracy;
    assert!(acc0 < 1.0, "fixture needs the two groups to disagree somewhere");
    assert_eq!(select_model(&mut groups, &labeled).unwrap(), 1);

    assert!(select_model(&mut [], &dev).is_err());
}

#[test]
fn normalize_sum_matches_hand_arithmetic() {
    let got = normalize_sum(&[vec![0.6, 0.4], vec![0.2, 0.8]]).unwrap();
    assert!((got[0] - 0.4).abs() < 1e-15);
    assert!((got[1] - 0.6).abs() < 1e-15);
    let three =
        normalize_sum(&[vec![0.5, 0.5], vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
    assert!((three[0] - 0.5).abs() < 1e-15);
    assert!((three[1] - 0.5).abs() < 1e-15);
    assert!(normalize_sum(&[vec![0.6, 0.4], vec![0.2, 0.8, 0.0]]).is_err());
    assert!(normalize_sum(&[]).is_err());
}

#[test]
fn ensemble_of_identical_groups_matches_single_group() {
    let cfg = tiny_config(Variant::Ne, 2);
    let mut groups = vec![
        Group::new(0, &cfg, &mut init_rng(cfg.seed, 0)).unwrap(),
        Group::new(1, &cfg, &mut init_rng(cfg.seed, 0)).unwrap(),
    ];
    let corpora = tiny_corpora();
    for d in &corpora.target_dev {
        let single = groups[0].predict(d).unwrap();
        let dist0 = groups[0].classifier_distribution(d).unwrap();
        let (label, dist) = ne_predict(&mut groups, d).unwrap();
        assert_eq!(label, single);
        for (a, b) in dist.iter().zip(&dist0) {
            assert!((a - b).abs() < 1e-15);
        }
    }
    let mut one = vec![Group::new(0, &cfg, &mut init_rng(cfg.seed, 0)).unwrap()];
    assert!(ne_predict(&mut one, &corpora.target_dev[0]).is_err());
}

#[test]
fn target_only_batch_leaves_classifier_untouched_under_mutual_probing() {
    let cfg = tiny_config(Variant::Daml, 2);
    let batch = Batch::from_docs(vec![
        doc(0, None, false, &[&[2, 3]]),
        doc(1, None, false, &[&[7, 8], &[9]]),
    ]);
    let mut groups = make_groups(&cfg);
    let before: Vec<Vec<(String, Tensor)>> =
        groups.iter().map(Group::named_parameters).collect();
    let parts = train_step(&mut groups, &batch, &cfg, 1).unwrap();
    for p in &parts {
        assert!(p.cls.is_none(), "no source docs, no supervised term");
        assert!(p.dom.is_some() && p.mutual.is_some());
    }
    for (g, pre) in groups.iter().zip(&before) {
        let post = g.named_parameters();
        let moved = |part: &str| {
            pre.iter()
                .zip(&post)
                .filter(|((n, _), _)| n.contains(part))
                .any(|((_, a), (_, b))| a.data() != b.data())
        };
        for ((name, a), (_, b)) in pre.iter().zip(&post) {
            if name.contains(".cls.") {
                let same = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits());
                assert!(same, "classifier tensor {name} moved on a target-only batch");
            }
        }
        assert!(moved(".prober."), "prober is the mutual-term student");
        assert!(moved(".fe."), "extractor feeds both losses");
        assert!(moved(".disc."), "discriminator sees every document");
    }

    // Without probers the classifier itself is the student and must move.
    let sml_cfg = TrainConfig { variant: Variant::Sml, ..cfg.clone() };
    let mut sml_groups = make_groups(&sml_cfg);
    let pre = sml_groups[0].named_parameters();
    train_step(&mut sml_groups, &batch, &sml_cfg, 1).unwrap();
    let post = sml_groups[0].named_parameters();
    let cls_moved = pre
        .iter()
        .zip(&post)
        .filter(|((n, _), _)| n.contains(".cls."))
        .any(|((_, a), (_, b))| a.data() != b.data());
    assert!(cls_moved);
}

#[test]
fn swapping_init_streams_swaps_group_trajectories() {
    let cfg = tiny_config(Variant::Daml, 2);
    let corpora = tiny_corpora();
    let batches = mixed_batches(&cfg, &corpora);

    let mut ab = vec![
        Group::new(0, &cfg, &mut init_rng(cfg.seed, 0)).unwrap(),
        Group::new(1, &cfg, &mut init_rng(cfg.seed, 1)).unwrap(),
    ];
    let mut ba = vec![
        Group::new(0, &cfg, &mut init_rng(cfg.seed, 1)).unwrap(),
        Group::new(1, &cfg, &mut init_rng(cfg.seed, 0)).unwrap(),
    ];
    for (i, b) in batches.iter().enumerate() {
        let p = train_step(&mut ab, b, &cfg, i + 1).unwrap();
        let q = train_step(&mut ba, b, &cfg, i + 1).unwrap();
        assert_eq!(p[0].total.to_bits(), q[1].total.to_bits());
        assert_eq!(p[1].total.to_bits(), q[0].total.to_bits());
    }
    for ((_, a), (_, b)) in ab[0].named_parameters().iter().zip(ba[1].named_parameters()) {
        assert_eq!(a.data(), b.data());
    }
}

#[test]
fn restored_groups_reproduce_live_forward_bits() {
    let cfg = tiny_config(Variant::Daml, 2);
    let corpora = tiny_corpora();
    let batches = mixed_batches(&cfg, &corpora);
    let mut groups = make_groups(&cfg);
    for (i, b) in batches.iter().take(3).enumerate() {
        train_step(&mut groups, b, &cfg, i + 1).unwrap();
    }
    let evals: Vec<GroupEval> = groups
        .iter_mut()
        .map(|g| {
            let m = g.evaluate_classifier(&corpora.source_dev).unwrap();
            GroupEval {
                group: g.id,
                source_dev: m,
                target_dev: None,
                mean_loss: MeanParts { total: 0.0, cls: None, dom: None, mutual: None },
            }
        })
        .collect();
    let ckpt = Checkpoint::capture(&cfg, &groups, 3, 0, &evals, &tiny_vocab()).unwrap();
    let mut restored = ckpt.restore_groups().unwrap();
    assert_eq!(restored.len(), groups.len());
    for d in corpora.source_dev.iter().chain(&corpora.target_dev) {
        for (g, r) in groups.iter_mut().zip(restored.iter_mut()) {
            let a = g.classifier_distribution(d).unwrap();
            let b = r.classifier_distribution(d).unwrap();
            let a_bits: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let b_bits: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a_bits, b_bits);
        }
    }
}

#[test]
fn checkpoint_bytes_round_trip_and_save_is_atomic() {
    let corpora = tiny_corpora();
    let mut cfg = tiny_config(Variant::Daml, 2);
    cfg.max_epochs = 1;
    let r = fit(&cfg, &corpora, &tiny_vocab()).unwrap();
    let bytes = r.checkpoint.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, r.checkpoint);
    assert_eq!(back.to_bytes(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    r.checkpoint.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), r.checkpoint);
    assert!(!path.with_extension("tmp").exists());
}

#[test]
fn checkpoint_rejects_corruption() {
    let cfg = tiny_config(Variant::Daml, 2);
    let mut groups = make_groups(&cfg);
    let corpora = tiny_corpora();
    let evals: Vec<GroupEval> = groups
        .iter_mut()
        .map(|g| {
            let m = g.evaluate_classifier(&corpora.source_dev).unwrap();
            GroupEval {
                group: g.id,
                source_dev: m,
                target_dev: None,
                mean_loss: MeanParts { total: 0.0, cls: None, dom: None, mutual: None },
            }
        })
        .collect();
    let ckpt = Checkpoint::capture(&cfg, &groups, 1, 0, &evals, &tiny_vocab()).unwrap();
    let bytes = ckpt.to_bytes();

    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad_magic).is_err());
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(Checkpoint::from_bytes(&trailing).is_err());

    let mut wrong_hash = ckpt.clone();
    wrong_hash.config_hash = "0".repeat(64);
    assert!(Checkpoint::from_bytes(&wrong_hash.to_bytes()).is_err());

    let mut tampered = ckpt.clone();
    tampered.groups[0][0].1 = Tensor::vector(vec![1.0]).unwrap();
    assert!(tampered.restore_groups().is_err());
}

#[test]
fn eval_window_means_are_per_component() {
    let w = vec![
        ObjectiveParts { total: 1.0, cls: Some(0.5), dom: Some(0.25), mutual: None },
        ObjectiveParts { total: 3.0, cls: Some(1.5), dom: None, mutual: None },
    ];
    let m = mean_parts(&w);
    assert_eq!(m.total, 2.0);
    assert_eq!(m.cls, Some(1.0));
    assert_eq!(m.dom, Some(0.25));
    assert_eq!(m.mutual, None);
}

#[test]
fn runaway_learning_rate_aborts_with_step_number() {
    let mut cfg = tiny_config(Variant::Daml, 2);
    cfg.learning_rate = f64::MAX;
    let batch = Batch::from_docs(vec![
        doc(0, Some(1), true, &[&[2, 3]]),
        doc(1, None, false, &[&[5, 6]]),
    ]);
    let mut groups = make_groups(&cfg);
    let mut failed_at = 0;
    let mut last = None;
    for step in 1..=4 {
        match train_step(&mut groups, &batch, &cfg, step) {
            Ok(_) => continue,
            Err(e) => {
                failed_at = step;
                last = Some(e);
                break;
            }
        }
    }
    assert!(failed_at >= 2, "the first step from finite parameters must succeed");
    match last {
        Some(Error::NanLoss { step, .. }) => assert_eq!(step as usize, failed_at),
        other => panic!("expected a non-finite training abort, got {other:?}"),
    }
}
