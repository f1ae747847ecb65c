use std::path::Path;

use daml_core::config::{apply_synth_kv, parse_kv, sha256_hex, synth_spec_to_kv};
use daml_core::corpus::synth::{gen_synthetic, write_corpora, SynthSpec};

use crate::manifest::{file_digest, Manifest};
use crate::{read_input, resolve_out, CliError};

pub fn gen_data(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let raw = read_input(config)?;
    let mut spec = apply_synth_kv(SynthSpec::default(), &parse_kv(&raw)?)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let out = resolve_out(out);

    let mut manifest = Manifest::new("gen-data");
    let canonical = synth_spec_to_kv(&spec);
    manifest.push("config_hash", sha256_hex(canonical.as_bytes()));
    manifest.push_config(&canonical);
    manifest.push_input("config", config)?;

    let corpora = gen_synthetic(&spec)?;
    let files = write_corpora(&out, &corpora)?;
    let counts = [
        corpora.source.train.len(),
        corpora.source.dev.len(),
        corpora.source.test.len(),
        corpora.target.train.len(),
        corpora.target.dev.len(),
        corpora.target.test.len(),
    ];
    for (i, file) in files.iter().enumerate() {
        let name = file.file_name().unwrap_or_default().to_string_lossy().to_string();
        manifest.push(&format!("output.{name}"), file_digest(file)?);
        match counts.get(i) {
            Some(n) => println!("{name}: {n} documents"),
            None => println!("{name}: lexicon manifest"),
        }
    }
    manifest.write(&out.join("manifest.txt"))?;
    println!("corpus written to {}", out.display());
    Ok(())
}
