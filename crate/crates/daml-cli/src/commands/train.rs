use std::path::Path;

use daml_core::config::{config_hash, train_config_from_kv, train_config_to_kv};
use daml_core::objectives::Variant;
use daml_core::trainer::fit;

use crate::commands::{load_dataset, set_variant};
use crate::logs::render_train_log;
use crate::manifest::{write_atomic, Manifest};
use crate::{read_input, resolve_out, CliError};

pub fn train(
    config: &Path,
    data: &Path,
    out: &Path,
    seed: Option<u64>,
    variant: Option<&str>,
) -> Result<(), CliError> {
    let raw = read_input(config)?;
    let mut cfg = train_config_from_kv(&raw)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(v) = variant {
        set_variant(&mut cfg, Variant::parse(v)?);
    }
    let num_labels = cfg.dims.num_labels as u8;
    let ds = load_dataset(data, num_labels, false)?;
    // The embedding table must cover the corpus, so the vocabulary size is
    // always taken from the data, not the config file.
    cfg.dims.extractor.vocab = ds.vocab.len();
    cfg.validate()?;

    let out = resolve_out(out);
    std::fs::create_dir_all(&out)?;
    let mut manifest = Manifest::new("train");
    manifest.push("config_hash", config_hash(&cfg));
    manifest.push_config(&train_config_to_kv(&cfg));
    manifest.push_input("config", config)?;
    for (name, digest) in &ds.digests {
        manifest.push(&format!("input.{name}"), digest);
    }

    let result = fit(&cfg, &ds.corpora, ds.vocab.tokens())?;
    let ckpt_path = out.join("model.ckpt");
    result.checkpoint.save(&ckpt_path)?;
    let log_path = out.join("train_log.csv");
    write_atomic(&log_path, render_train_log(&result.log).as_bytes())?;

    let best = result.checkpoint.best_group;
    let (best_acc, best_rmse) = result.checkpoint.group_dev[best];
    manifest.push("output.checkpoint", ckpt_path.display());
    manifest.push("output.train_log", log_path.display());
    manifest.push("metric.steps", result.steps);
    manifest.push("metric.stopped_early", result.stopped_early);
    manifest.push("metric.best_group", best);
    manifest.push("metric.best_source_dev_acc", best_acc);
    manifest.push("metric.best_source_dev_rmse", best_rmse);
    manifest.write(&out.join("manifest.txt"))?;

    println!(
        "trained {} steps{}; best group {best} source-dev acc {best_acc:.4}",
        result.steps,
        if result.stopped_early { " (stopped early)" } else { "" },
    );
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}
