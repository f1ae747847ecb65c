//! Document ingestion, vocabulary, label alignment, and batching.
//!
//! Corpus file format: UTF-8, one document per line,
//! `label<TAB>sentence<TAB>sentence...`; unlabeled documents use label `-`.
//! Text is lowercased, sentences additionally split on `.` `!` `?`, tokens on
//! whitespace.

pub mod synth;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token vocabulary with reserved ids 0 (padding) and 1 (unknown).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    /// Build from token counts; tokens below `min_count` are dropped.
    /// Ids are assigned in lexicographic token order so construction is
    /// deterministic regardless of map iteration order.
    pub fn from_counts(counts: &HashMap<String, usize>, min_count: usize) -> Self {
        let mut kept: Vec<&String> =
            counts.iter().filter(|(_, &c)| c >= min_count).map(|(t, _)| t).collect();
        kept.sort();
        let mut id_to_token = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        id_to_token.extend(kept.into_iter().cloned());
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { token_to_id, id_to_token }
    }

    /// Rebuild from a stored id-ordered token list (checkpoint restore).
    pub fn from_tokens(id_to_token: Vec<String>) -> Result<Self> {
        if id_to_token.len() < 2
            || id_to_token[0] != PAD_TOKEN
            || id_to_token[1] != UNK_TOKEN
        {
            return Err(Error::Checkpoint {
                msg: "vocabulary list must start with the reserved pad/unk tokens".to_string(),
            });
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocab { token_to_id, id_to_token })
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries always present
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// One encoded document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: usize,
    pub sentences: Vec<Vec<u32>>,
    /// 1-based rating in 1..=K.
    pub label: Option<u8>,
    /// true = source domain (z = 1).
    pub source: bool,
}

impl Document {
    /// 0-based class index for one-hot targets.
    pub fn class_index(&self) -> Option<usize> {
        self.label.map(|l| l as usize - 1)
    }
}

/// Tokenized but not yet id-encoded document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub label: Option<u8>,
    pub sentences: Vec<Vec<String>>,
}

fn tokenize_field(field: &str) -> Vec<Vec<String>> {
    field
        .to_lowercase()
        .split(['.', '!', '?'])
        .map(|piece| piece.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|tokens: &Vec<String>| !tokens.is_empty())
        .collect()
}

fn parse_label(field: &str, num_labels: u8, line: usize) -> Result<Option<u8>> {
    if field == "-" {
        return Ok(None);
    }
    let value: i64 = field.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("label must be an integer 1..={num_labels} or '-', got '{field}'"),
    })?;
    if value < 1 || value > num_labels as i64 {
        return Err(Error::LabelOutOfRange { label: value, max: num_labels });
    }
    Ok(Some(value as u8))
}

/// Parse the line format into tokenized documents, validating labels against
/// 1..=num_labels. Blank lines are skipped.
pub fn parse_raw<R: BufRead>(reader: R, num_labels: u8) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = line.split('\t');
        let label_field = fields.next().expect("split yields at least one field");
        let label = parse_label(label_field, num_labels, lineno)?;
        let sentences: Vec<Vec<String>> = fields.flat_map(tokenize_field).collect();
        if sentences.is_empty() {
            return Err(Error::Parse { line: lineno, msg: "document has no tokens".to_string() });
        }
        docs.push(RawDocument { label, sentences });
    }
    Ok(docs)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Count tokens across files and build a vocabulary.
pub fn build_vocab(paths: &[&Path], num_labels: u8, min_count: usize) -> Result<Vocab> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for path in paths {
        for doc in parse_raw(open(path)?, num_labels)? {
            for sentence in doc.sentences {
                for token in sentence {
                    *counts.entry(token).or_insert(0) += 1;
                }
            }
        }
    }
    Ok(Vocab::from_counts(&counts, min_count))
}

pub fn encode(raw: &[RawDocument], vocab: &Vocab, source: bool) -> Vec<Document> {
    raw.iter()
        .enumerate()
        .map(|(id, doc)| Document {
            id,
            sentences: doc
                .sentences
                .iter()
                .map(|s| s.iter().map(|t| vocab.id(t)).collect())
                .collect(),
            label: doc.label,
            source,
        })
        .collect()
}

/// Parse a corpus file against a fixed vocabulary.
pub fn parse_corpus(
    path: &Path,
    vocab: &Vocab,
    source: bool,
    num_labels: u8,
) -> Result<Vec<Document>> {
    let raw = parse_raw(open(path)?, num_labels)?;
    Ok(encode(&raw, vocab, source))
}

/// Map a 10-point rating onto the 5-point scale by halving and rounding up.
pub fn align_labels(label: u8) -> Result<u8> {
    if !(1..=10).contains(&label) {
        return Err(Error::LabelOutOfRange { label: label as i64, max: 10 });
    }
    Ok(label.div_ceil(2))
}

/// Mini-batch composition policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainMix {
    /// Each batch holds batch_size/2 source + batch_size/2 target documents;
    /// the shorter stream recycles with a reshuffle.
    HalfHalf,
    /// Plain shuffled batches over whatever documents are given.
    SingleStream,
}

/// Padded mini-batch. Masks mark exactly the real tokens and sentences;
/// padding ids are 0.
#[derive(Debug, Clone)]
pub struct Batch {
    pub docs: Vec<Document>,
    pub tokens: Vec<Vec<Vec<u32>>>,
    pub word_mask: Vec<Vec<Vec<bool>>>,
    pub sent_mask: Vec<Vec<bool>>,
    pub labels: Vec<Option<u8>>,
    pub source: Vec<bool>,
}

impl Batch {
    pub fn from_docs(docs: Vec<Document>) -> Self {
        let max_sents = docs.iter().map(|d| d.sentences.len()).max().unwrap_or(0);
        let max_words =
            docs.iter().flat_map(|d| d.sentences.iter().map(Vec::len)).max().unwrap_or(0);
        let mut tokens = Vec::with_capacity(docs.len());
        let mut word_mask = Vec::with_capacity(docs.len());
        let mut sent_mask = Vec::with_capacity(docs.len());
        for doc in &docs {
            let mut doc_tokens = Vec::with_capacity(max_sents);
            let mut doc_wmask = Vec::with_capacity(max_sents);
            let mut doc_smask = Vec::with_capacity(max_sents);
            for s in 0..max_sents {
                let real = doc.sentences.get(s);
                let len = real.map_or(0, |s| s.len());
                let mut row = vec![PAD_ID; max_words];
                if let Some(sent) = real {
                    row[..len].copy_from_slice(sent);
                }
                let mut mask = vec![false; max_words];
                mask[..len].iter_mut().for_each(|m| *m = true);
                doc_tokens.push(row);
                doc_wmask.push(mask);
                doc_smask.push(real.is_some());
            }
            tokens.push(doc_tokens);
            word_mask.push(doc_wmask);
            sent_mask.push(doc_smask);
        }
        let labels = docs.iter().map(|d| d.label).collect();
        let source = docs.iter().map(|d| d.source).collect();
        Batch { docs, tokens, word_mask, sent_mask, labels, source }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Cyclic shuffled stream over one domain's documents.
struct Stream<'a> {
    docs: Vec<&'a Document>,
    pos: usize,
}

impl<'a> Stream<'a> {
    fn new(docs: Vec<&'a Document>, rng: &mut ChaCha12Rng) -> Self {
        let mut s = Stream { docs, pos: 0 };
        s.docs.shuffle(rng);
        s
    }

    fn take(&mut self, n: usize, rng: &mut ChaCha12Rng) -> Vec<Document> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            if self.pos == self.docs.len() {
                self.docs.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.docs[self.pos].clone());
            self.pos += 1;
        }
        out
    }
}

/// Assemble one epoch of batches. Under `HalfHalf`, the epoch covers the
/// longer domain stream once; the shorter stream recycles with a reshuffle.
pub fn make_batches(
    docs: &[Document],
    batch_size: usize,
    rng: &mut ChaCha12Rng,
    mix: DomainMix,
) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(Error::Config {
            msg: format!("batch size must be >= 2, got {batch_size}"),
        });
    }
    match mix {
        DomainMix::HalfHalf => {
            if !batch_size.is_multiple_of(2) {
                return Err(Error::Config {
                    msg: format!("half-half batching needs an even batch size, got {batch_size}"),
                });
            }
            let source: Vec<&Document> = docs.iter().filter(|d| d.source).collect();
            let target: Vec<&Document> = docs.iter().filter(|d| !d.source).collect();
            if source.is_empty() {
                return Err(Error::EmptySplit { split: "source" });
            }
            if target.is_empty() {
                return Err(Error::EmptySplit { split: "target" });
            }
            let half = batch_size / 2;
            let longer = source.len().max(target.len());
            let num_batches = longer.div_ceil(half);
            let mut src_stream = Stream::new(source, rng);
            let mut tgt_stream = Stream::new(target, rng);
            let mut batches = Vec::with_capacity(num_batches);
            for _ in 0..num_batches {
                let mut members = src_stream.take(half, rng);
                members.extend(tgt_stream.take(half, rng));
                batches.push(Batch::from_docs(members));
            }
            Ok(batches)
        }
        DomainMix::SingleStream => {
            if docs.is_empty() {
                return Err(Error::EmptySplit { split: "train" });
            }
            let mut all: Vec<&Document> = docs.iter().collect();
            all.shuffle(rng);
            Ok(all
                .chunks(batch_size)
                .map(|chunk| Batch::from_docs(chunk.iter().map(|d| (*d).clone()).collect()))
                .collect())
        }
    }
}
