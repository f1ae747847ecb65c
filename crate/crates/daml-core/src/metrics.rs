//! Accuracy/RMSE evaluation, report rendering, and feature-vector export.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::Document;
use crate::error::{Error, Result};

/// Exact-match accuracy plus RMSE over integer ratings, with per-label
/// confusion counts (`confusion[truth-1][pred-1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub rmse: f64,
    pub count: usize,
    pub confusion: Vec<Vec<usize>>,
}

/// Score a predictor over labeled documents. Predictions and labels must be
/// ratings in 1..=num_labels.
pub fn evaluate(
    mut predict: impl FnMut(&Document) -> Result<u8>,
    docs: &[Document],
    num_labels: u8,
) -> Result<Metrics> {
    if docs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let k = num_labels as usize;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut hits = 0usize;
    let mut sq_sum = 0.0;
    for doc in docs {
        let truth = doc.label.ok_or(Error::UnlabeledDocument { doc_id: doc.id })?;
        if !(1..=num_labels).contains(&truth) {
            return Err(Error::LabelOutOfRange { label: truth as i64, max: num_labels });
        }
        let pred = predict(doc)?;
        if !(1..=num_labels).contains(&pred) {
            return Err(Error::LabelOutOfRange { label: pred as i64, max: num_labels });
        }
        if pred == truth {
            hits += 1;
        }
        let diff = pred as f64 - truth as f64;
        sq_sum += diff * diff;
        confusion[truth as usize - 1][pred as usize - 1] += 1;
    }
    let count = docs.len();
    Ok(Metrics {
        accuracy: hits as f64 / count as f64,
        rmse: (sq_sum / count as f64).sqrt(),
        count,
        confusion,
    })
}

/// One row of the machine-readable comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub task: String,
    pub variant: String,
    pub seed: u64,
    pub split: String,
    pub accuracy: f64,
    pub rmse: f64,
}

pub const REPORT_HEADER: &str = "task,variant,seed,split,acc,rmse";

pub fn render_report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.task, r.variant, r.seed, r.split, r.accuracy, r.rmse
        );
    }
    out
}

pub fn render_report_table(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<12} {:<8} {:>6} {:<12} {:>8} {:>8}\n",
        "task", "variant", "seed", "split", "acc", "rmse"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:<8} {:>6} {:<12} {:>8.4} {:>8.4}",
            r.task, r.variant, r.seed, r.split, r.accuracy, r.rmse
        );
    }
    out
}

/// One exported feature vector: the document vector of `doc_id` under
/// `group_id`'s extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub group_id: usize,
    pub doc_id: usize,
    pub source: bool,
    pub label: Option<u8>,
    pub features: Vec<f64>,
}

/// Tab-separated rows: group-id, doc-id, domain flag, label (`-` when
/// absent), then the feature components. Floats print in Rust's shortest
/// round-trip form, so identical vectors always render identically.
pub fn render_features(rows: &[FeatureRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = write!(out, "{}\t{}\t{}", r.group_id, r.doc_id, u8::from(r.source));
        match r.label {
            Some(l) => {
                let _ = write!(out, "\t{l}");
            }
            None => out.push_str("\t-"),
        }
        for f in &r.features {
            let _ = write!(out, "\t{f}");
        }
        out.push('\n');
    }
    out
}

pub fn write_features(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    std::fs::write(path, render_features(rows))?;
    Ok(())
}
