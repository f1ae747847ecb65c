//! Run manifests: flat key=value records of the resolved configuration,
//! input digests, outputs, and final metrics of one command invocation.
//! Rerunning the command with the manifest's config against inputs with
//! matching digests reproduces the outputs.

use std::fmt::Display;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use daml_core::config::sha256_hex;

use crate::CliError;

pub struct Manifest {
    entries: Vec<(String, String)>,
    started: Instant,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            entries: vec![("command".to_string(), command.to_string())],
            started: Instant::now(),
        }
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Record a canonical key=value config rendering under `config.` keys.
    pub fn push_config(&mut self, canonical_kv: &str) {
        for line in canonical_kv.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.push(&format!("config.{k}"), v);
            }
        }
    }

    /// Record the digest of an input file under `input.<name>`.
    pub fn push_input(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        let digest = file_digest(path)?;
        self.push(&format!("input.{name}"), digest);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Append the elapsed wall clock and write the manifest atomically.
    pub fn write(mut self, path: &Path) -> Result<(), CliError> {
        let secs = self.started.elapsed().as_secs_f64();
        self.push("wall_clock_secs", format!("{secs:.3}"));
        write_atomic(path, self.render().as_bytes())
    }
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Write through a sibling temp file plus rename so readers never observe
/// a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
