//! CSV renderings of training logs, dev-accuracy curves, and comparison
//! tables. All floats print in Rust's shortest round-trip form, so equal
//! runs render byte-identical files.

use std::collections::HashMap;
use std::fmt::Write as _;

use daml_core::metrics::ReportRow;
use daml_core::objectives::MutualScope;
use daml_core::trainer::EvalRecord;

pub const TRAIN_LOG_HEADER: &str = "step,epoch,group,source_dev_acc,source_dev_rmse,\
target_dev_acc,target_dev_rmse,mean_total,mean_cls,mean_dom,mean_mutual,best_group,checkpointed";

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "-".to_string(),
    }
}

/// One row per (evaluation, group). Absent values print as `-`: target-dev
/// metrics when that split is empty, loss components the variant lacks.
pub fn render_train_log(log: &[EvalRecord]) -> String {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for rec in log {
        for ge in &rec.groups {
            let (t_acc, t_rmse) = match &ge.target_dev {
                Some(m) => (opt(Some(m.accuracy)), opt(Some(m.rmse))),
                None => (opt(None), opt(None)),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                rec.step,
                rec.epoch,
                ge.group,
                ge.source_dev.accuracy,
                ge.source_dev.rmse,
                t_acc,
                t_rmse,
                ge.mean_loss.total,
                opt(ge.mean_loss.cls),
                opt(ge.mean_loss.dom),
                opt(ge.mean_loss.mutual),
                rec.best_group,
                rec.checkpointed,
            );
        }
    }
    out
}

pub const CURVES_HEADER: &str = "task,variant,seed,step,group,target_dev_acc";

/// Target-dev accuracy per evaluation step and group, for plotting how
/// each variant's transfer quality evolves.
pub fn curve_rows(task: &str, variant: &str, seed: u64, log: &[EvalRecord]) -> Vec<String> {
    let mut rows = Vec::new();
    for rec in log {
        for ge in &rec.groups {
            if let Some(m) = &ge.target_dev {
                rows.push(format!("{task},{variant},{seed},{},{},{}", rec.step, ge.group, m.accuracy));
            }
        }
    }
    rows
}

/// Per-(task, variant, split) means over seeds, in first-seen order, with
/// `mean` in the seed column.
pub fn mean_rows(rows: &[ReportRow]) -> Vec<String> {
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut buckets: HashMap<(String, String, String), Vec<(f64, f64)>> = HashMap::new();
    for r in rows {
        let key = (r.task.clone(), r.variant.clone(), r.split.clone());
        buckets.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Vec::new()
        });
        buckets.get_mut(&key).unwrap().push((r.accuracy, r.rmse));
    }
    order
        .into_iter()
        .map(|key| {
            let vals = &buckets[&key];
            let n = vals.len() as f64;
            let acc = vals.iter().map(|v| v.0).sum::<f64>() / n;
            let rmse = vals.iter().map(|v| v.1).sum::<f64>() / n;
            format!("{},{},mean,{},{acc},{rmse}", key.0, key.1, key.2)
        })
        .collect()
}

/// Pivot of target-test accuracy by prober scope: one column per scope,
/// one row per seed, plus a final mean row.
pub fn render_ablation<F>(seeds: &[u64], scopes: &[MutualScope], acc: F) -> String
where
    F: Fn(u64, MutualScope) -> f64,
{
    let mut out = String::from("seed");
    for sc in scopes {
        out.push(',');
        out.push_str(sc.as_str());
    }
    out.push('\n');
    for &seed in seeds {
        let _ = write!(out, "{seed}");
        for &sc in scopes {
            let _ = write!(out, ",{}", acc(seed, sc));
        }
        out.push('\n');
    }
    out.push_str("mean");
    for &sc in scopes {
        let m = seeds.iter().map(|&s| acc(s, sc)).sum::<f64>() / seeds.len().max(1) as f64;
        let _ = write!(out, ",{m}");
    }
    out.push('\n');
    out
}
