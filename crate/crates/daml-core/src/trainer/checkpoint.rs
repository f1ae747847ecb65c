//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//! magic `DAMLCKPT`, format version u32, step u64, best group u32, group
//! count u32, per-group source-dev (accuracy f64, rmse f64), config hash
//! string, canonical config text, vocabulary token list, then per group a
//! list of named tensors (name, rank u32, dims u32 each, f64 data
//! row-major). Strings are u32 length + UTF-8 bytes. The same checkpoint
//! always serializes to the same bytes.

use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{Group, GroupEval, TrainConfig};
use crate::adam::Adam;
use crate::config::{config_hash, train_config_from_kv, train_config_to_kv};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{model_from_nodes, model_template};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"DAMLCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub config_hash: String,
    pub step: usize,
    pub best_group: usize,
    /// Source-dev (accuracy, rmse) per group at save time.
    pub group_dev: Vec<(f64, f64)>,
    pub vocab_tokens: Vec<String>,
    /// Named parameter tensors per group, template order.
    pub groups: Vec<Vec<(String, Tensor)>>,
}

impl Checkpoint {
    pub fn capture(
        cfg: &TrainConfig,
        groups: &[Group],
        step: usize,
        best_group: usize,
        evals: &[GroupEval],
        vocab_tokens: &[String],
    ) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Checkpoint { msg: "no groups to capture".to_string() });
        }
        Ok(Checkpoint {
            config: cfg.clone(),
            config_hash: config_hash(cfg),
            step,
            best_group,
            group_dev: evals.iter().map(|e| (e.source_dev.accuracy, e.source_dev.rmse)).collect(),
            vocab_tokens: vocab_tokens.to_vec(),
            groups: groups.iter().map(Group::named_parameters).collect(),
        })
    }

    /// Rebuild runnable groups from the stored tensors. Optimizer state is
    /// not part of a checkpoint, so restored groups carry fresh Adam slots.
    pub fn restore_groups(&self) -> Result<Vec<Group>> {
        let cfg = &self.config;
        let mut out = Vec::with_capacity(self.groups.len());
        for (gid, stored) in self.groups.iter().enumerate() {
            let prefix = format!("g{gid}");
            let mut shape_rng = ChaCha12Rng::seed_from_u64(0);
            let expected =
                model_template(&prefix, &cfg.dims, cfg.with_prober(), &mut shape_rng, 0.0);
            if stored.len() != expected.len() {
                return Err(Error::Checkpoint {
                    msg: format!(
                        "group {gid}: expected {} tensors, found {}",
                        expected.len(),
                        stored.len()
                    ),
                });
            }
            let mut graph = Graph::new();
            let mut ids = Vec::with_capacity(stored.len());
            let mut names = Vec::with_capacity(stored.len());
            for ((name, tensor), (want_name, want_shape)) in stored.iter().zip(&expected) {
                if name != want_name || tensor.shape() != want_shape.shape() {
                    return Err(Error::Checkpoint {
                        msg: format!(
                            "group {gid}: tensor '{name}' {:?} does not match '{want_name}' {:?}",
                            tensor.shape(),
                            want_shape.shape()
                        ),
                    });
                }
                ids.push(graph.param(tensor.clone())?);
                names.push(name.clone());
            }
            let params = model_from_nodes(cfg.dims, cfg.with_prober(), &mut ids.into_iter());
            graph.seal_params();
            let optimizers = params
                .bundles()
                .into_iter()
                .map(|(name, bundle)| (name, Adam::new(cfg.adam(), &bundle, &graph)))
                .collect();
            out.push(Group { id: gid, graph, params, param_names: names, optimizers });
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, VERSION);
        put_u64(&mut buf, self.step as u64);
        put_u32(&mut buf, self.best_group as u32);
        put_u32(&mut buf, self.group_dev.len() as u32);
        for &(acc, rmse) in &self.group_dev {
            put_f64(&mut buf, acc);
            put_f64(&mut buf, rmse);
        }
        put_str(&mut buf, &self.config_hash);
        put_str(&mut buf, &train_config_to_kv(&self.config));
        put_u32(&mut buf, self.vocab_tokens.len() as u32);
        for token in &self.vocab_tokens {
            put_str(&mut buf, token);
        }
        put_u32(&mut buf, self.groups.len() as u32);
        for group in &self.groups {
            put_u32(&mut buf, group.len() as u32);
            for (name, tensor) in group {
                put_str(&mut buf, name);
                put_u32(&mut buf, tensor.shape().len() as u32);
                for &d in tensor.shape() {
                    put_u32(&mut buf, d as u32);
                }
                for &v in tensor.data() {
                    put_f64(&mut buf, v);
                }
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint { msg: "bad magic".to_string() });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint {
                msg: format!("unsupported checkpoint version {version}"),
            });
        }
        let step = r.u64()? as usize;
        let best_group = r.u32()? as usize;
        let n_groups = r.u32()? as usize;
        let mut group_dev = Vec::with_capacity(n_groups);
        for _ in 0..n_groups {
            group_dev.push((r.f64()?, r.f64()?));
        }
        let stored_hash = r.string()?;
        let config_text = r.string()?;
        let config = train_config_from_kv(&config_text)?;
        let expect = config_hash(&config);
        if expect != stored_hash {
            return Err(Error::Checkpoint {
                msg: format!("config hash mismatch: stored {stored_hash}, derived {expect}"),
            });
        }
        let n_tokens = r.u32()? as usize;
        let mut vocab_tokens = Vec::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            vocab_tokens.push(r.string()?);
        }
        let n_param_groups = r.u32()? as usize;
        if n_param_groups != n_groups {
            return Err(Error::Checkpoint {
                msg: format!("{n_groups} metric rows but {n_param_groups} parameter groups"),
            });
        }
        let mut groups = Vec::with_capacity(n_param_groups);
        for _ in 0..n_param_groups {
            let n_tensors = r.u32()? as usize;
            let mut tensors = Vec::with_capacity(n_tensors);
            for _ in 0..n_tensors {
                let name = r.string()?;
                let rank = r.u32()? as usize;
                let mut shape = Vec::with_capacity(rank);
                for _ in 0..rank {
                    shape.push(r.u32()? as usize);
                }
                let elems: usize = shape.iter().product();
                let mut data = Vec::with_capacity(elems);
                for _ in 0..elems {
                    data.push(r.f64()?);
                }
                tensors.push((name, Tensor::new(shape, data)?));
            }
            groups.push(tensors);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint {
                msg: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Checkpoint {
            config,
            config_hash: stored_hash,
            step,
            best_group,
            group_dev,
            vocab_tokens,
            groups,
        })
    }

    /// Write atomically: temp file in the target directory, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint { msg: "truncated checkpoint".to_string() });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("length checked")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("length checked")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("length checked")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Checkpoint { msg: "non-UTF-8 string".to_string() })
    }
}
