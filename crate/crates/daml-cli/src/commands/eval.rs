use std::path::Path;

use daml_core::config::train_config_to_kv;
use daml_core::corpus::{parse_corpus, Vocab};
use daml_core::metrics::{evaluate, render_report_csv, render_report_table, write_features, FeatureRow, ReportRow};
use daml_core::trainer::{ne_predict, Checkpoint};
use daml_core::Error;

use crate::manifest::{write_atomic, Manifest};
use crate::{require_file, resolve_out, CliError};

pub fn eval(
    checkpoint: &Path,
    corpus: &Path,
    ensemble: bool,
    export_features: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    require_file(checkpoint)?;
    require_file(corpus)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let cfg = &ckpt.config;
    if ckpt.best_group >= ckpt.groups.len() {
        return Err(Error::Checkpoint {
            msg: format!("best group {} out of range for {} groups", ckpt.best_group, ckpt.groups.len()),
        }
        .into());
    }
    let vocab = Vocab::from_tokens(ckpt.vocab_tokens.clone())?;
    let stem = corpus.file_stem().unwrap_or_default().to_string_lossy().to_string();
    let source = stem.starts_with("source");
    let num_labels = cfg.dims.num_labels as u8;
    let docs = parse_corpus(corpus, &vocab, source, num_labels)?;

    let mut groups = ckpt.restore_groups()?;
    let metrics = if ensemble {
        evaluate(|d| ne_predict(&mut groups, d).map(|(pred, _)| pred), &docs, num_labels)?
    } else {
        let best = ckpt.best_group;
        evaluate(|d| groups[best].predict(d), &docs, num_labels)?
    };
    let row = ReportRow {
        task: "eval".to_string(),
        variant: cfg.variant.as_str().to_string(),
        seed: cfg.seed,
        split: stem.clone(),
        accuracy: metrics.accuracy,
        rmse: metrics.rmse,
    };
    print!("{}", render_report_table(std::slice::from_ref(&row)));

    if let Some(path) = export_features {
        let mut rows = Vec::with_capacity(groups.len() * docs.len());
        for (gid, group) in groups.iter_mut().enumerate() {
            for doc in &docs {
                rows.push(FeatureRow {
                    group_id: gid,
                    doc_id: doc.id,
                    source: doc.source,
                    label: doc.label,
                    features: group.feature_vector(doc)?,
                });
            }
        }
        write_features(path, &rows)?;
        println!("features: {} ({} rows)", path.display(), rows.len());
    }

    if let Some(out) = out {
        let out = resolve_out(out);
        std::fs::create_dir_all(&out)?;
        let report_path = out.join("report.csv");
        write_atomic(&report_path, render_report_csv(std::slice::from_ref(&row)).as_bytes())?;
        let mut manifest = Manifest::new("eval");
        manifest.push("config_hash", &ckpt.config_hash);
        manifest.push_config(&train_config_to_kv(cfg));
        manifest.push_input("checkpoint", checkpoint)?;
        manifest.push_input("corpus", corpus)?;
        manifest.push("ensemble", ensemble);
        manifest.push("output.report", report_path.display());
        manifest.push("metric.accuracy", metrics.accuracy);
        manifest.push("metric.rmse", metrics.rmse);
        manifest.push("metric.documents", metrics.count);
        manifest.write(&out.join("manifest.txt"))?;
    }
    Ok(())
}
