//! Flat key=value config files, canonical serialization, and config hashing.
//!
//! Unknown and duplicate keys are hard errors naming the key, so a typo can
//! never silently fall back to a default. The canonical rendering emits every
//! key in a fixed order with shortest round-trip float formatting; the config
//! hash is the SHA-256 of that rendering, so equal resolved configs hash
//! equally regardless of how sparse the input file was.

use sha2::{Digest, Sha256};

use crate::corpus::synth::SynthSpec;
use crate::error::{Error, Result};
use crate::objectives::{MutualScope, Variant};
use crate::trainer::TrainConfig;

/// Parse `key=value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(Error::Parse {
            line: idx + 1,
            msg: format!("expected key=value, got '{line}'"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse { line: idx + 1, msg: "empty key".to_string() });
        }
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config { msg: format!("duplicate key '{key}'") });
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn bad_value(key: &str, value: &str) -> Error {
    Error::Config { msg: format!("bad value for {key}: '{value}'") }
}

fn get_usize(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| bad_value(key, value))
}

fn get_u64(key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|_| bad_value(key, value))
}

fn get_u8(key: &str, value: &str) -> Result<u8> {
    value.parse().map_err(|_| bad_value(key, value))
}

fn get_f64(key: &str, value: &str) -> Result<f64> {
    value.parse::<f64>().map_err(|_| bad_value(key, value)).and_then(|v| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad_value(key, value))
        }
    })
}

fn get_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad_value(key, value)),
    }
}

/// Apply key=value overrides on top of a base config.
pub fn apply_train_kv(mut cfg: TrainConfig, pairs: &[(String, String)]) -> Result<TrainConfig> {
    for (key, value) in pairs {
        match key.as_str() {
            "variant" => cfg.variant = Variant::parse(value)?,
            "num_groups" => cfg.num_groups = get_usize(key, value)?,
            "eta" => cfg.eta = get_f64(key, value)?,
            "lambda_d" => cfg.lambda_d = get_f64(key, value)?,
            "lambda_m" => cfg.lambda_m = get_f64(key, value)?,
            "learning_rate" => cfg.learning_rate = get_f64(key, value)?,
            "batch_size" => cfg.batch_size = get_usize(key, value)?,
            "max_epochs" => cfg.max_epochs = get_usize(key, value)?,
            "eval_every" => cfg.eval_every = get_usize(key, value)?,
            "patience" => cfg.patience = get_usize(key, value)?,
            "seed" => cfg.seed = get_u64(key, value)?,
            "prober_domain" => cfg.prober_domain = MutualScope::parse(value)?,
            "shared_embedding_init" => cfg.shared_embedding_init = get_bool(key, value)?,
            "vocab_size" => cfg.dims.extractor.vocab = get_usize(key, value)?,
            "embed_dim" => cfg.dims.extractor.embed = get_usize(key, value)?,
            "word_hidden" => cfg.dims.extractor.word_hidden = get_usize(key, value)?,
            "sent_hidden" => cfg.dims.extractor.sent_hidden = get_usize(key, value)?,
            "head_hidden" => cfg.dims.head_hidden = get_usize(key, value)?,
            "num_labels" => cfg.dims.num_labels = get_usize(key, value)?,
            _ => return Err(Error::Config { msg: format!("unknown config key '{key}'") }),
        }
    }
    Ok(cfg)
}

/// Canonical rendering: every key, fixed order.
pub fn train_config_to_kv(cfg: &TrainConfig) -> String {
    format!(
        "variant={}\nnum_groups={}\neta={}\nlambda_d={}\nlambda_m={}\nlearning_rate={}\n\
         batch_size={}\nmax_epochs={}\neval_every={}\npatience={}\nseed={}\nprober_domain={}\n\
         shared_embedding_init={}\nvocab_size={}\nembed_dim={}\nword_hidden={}\nsent_hidden={}\n\
         head_hidden={}\nnum_labels={}\n",
        cfg.variant,
        cfg.num_groups,
        cfg.eta,
        cfg.lambda_d,
        cfg.lambda_m,
        cfg.learning_rate,
        cfg.batch_size,
        cfg.max_epochs,
        cfg.eval_every,
        cfg.patience,
        cfg.seed,
        cfg.prober_domain,
        cfg.shared_embedding_init,
        cfg.dims.extractor.vocab,
        cfg.dims.extractor.embed,
        cfg.dims.extractor.word_hidden,
        cfg.dims.extractor.sent_hidden,
        cfg.dims.head_hidden,
        cfg.dims.num_labels,
    )
}

pub fn train_config_from_kv(text: &str) -> Result<TrainConfig> {
    apply_train_kv(TrainConfig::default(), &parse_kv(text)?)
}

/// SHA-256 of the canonical rendering, hex-encoded.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(train_config_to_kv(cfg).as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Apply key=value overrides on top of a base synthetic-corpus spec.
pub fn apply_synth_kv(mut spec: SynthSpec, pairs: &[(String, String)]) -> Result<SynthSpec> {
    for (key, value) in pairs {
        match key.as_str() {
            "num_labels" => spec.num_labels = get_u8(key, value)?,
            "pivot_per_polarity" => spec.pivot_per_polarity = get_usize(key, value)?,
            "private_per_polarity" => spec.private_per_polarity = get_usize(key, value)?,
            "neutral_words" => spec.neutral_words = get_usize(key, value)?,
            "train_docs" => spec.train_docs = get_usize(key, value)?,
            "dev_docs" => spec.dev_docs = get_usize(key, value)?,
            "test_docs" => spec.test_docs = get_usize(key, value)?,
            "min_sentences" => spec.sentences.0 = get_usize(key, value)?,
            "max_sentences" => spec.sentences.1 = get_usize(key, value)?,
            "min_words" => spec.words.0 = get_usize(key, value)?,
            "max_words" => spec.words.1 = get_usize(key, value)?,
            "p_priv" => spec.p_priv = get_f64(key, value)?,
            "noise" => spec.noise = get_f64(key, value)?,
            "seed" => spec.seed = get_u64(key, value)?,
            _ => return Err(Error::Config { msg: format!("unknown spec key '{key}'") }),
        }
    }
    Ok(spec)
}

pub fn synth_spec_to_kv(spec: &SynthSpec) -> String {
    format!(
        "num_labels={}\npivot_per_polarity={}\nprivate_per_polarity={}\nneutral_words={}\n\
         train_docs={}\ndev_docs={}\ntest_docs={}\nmin_sentences={}\nmax_sentences={}\n\
         min_words={}\nmax_words={}\np_priv={}\nnoise={}\nseed={}\n",
        spec.num_labels,
        spec.pivot_per_polarity,
        spec.private_per_polarity,
        spec.neutral_words,
        spec.train_docs,
        spec.dev_docs,
        spec.test_docs,
        spec.sentences.0,
        spec.sentences.1,
        spec.words.0,
        spec.words.1,
        spec.p_priv,
        spec.noise,
        spec.seed,
    )
}

pub fn synth_spec_from_kv(text: &str) -> Result<SynthSpec> {
    apply_synth_kv(SynthSpec::default(), &parse_kv(text)?)
}
