//! Synthetic review generator with a controllable domain shift.
//!
//! Both domains share a pivot sentiment lexicon; each domain also has a
//! private sentiment lexicon the other domain never uses. `p_priv` sets the
//! probability that a sentiment token is drawn from the private lexicon, so
//! higher values mean a larger shift. Documents are generated rating-first:
//! the rating fixes polarity (below the midpoint negative, at it neutral,
//! above positive) and the share of sentiment tokens per sentence grows with
//! distance from the midpoint, which keeps adjacent ratings separable by
//! token counts alone.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_labels: u8,
    /// Pivot lexicon entries per polarity (shared by both domains).
    pub pivot_per_polarity: usize,
    /// Private lexicon entries per polarity per domain.
    pub private_per_polarity: usize,
    pub neutral_words: usize,
    /// Documents per domain per split.
    pub train_docs: usize,
    pub dev_docs: usize,
    pub test_docs: usize,
    /// Inclusive sentence-count range per document.
    pub sentences: (usize, usize),
    /// Inclusive token-count range per sentence.
    pub words: (usize, usize),
    /// Probability a sentiment token comes from the domain-private lexicon.
    pub p_priv: f64,
    /// Probability a sentiment token flips polarity.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_labels: 5,
            pivot_per_polarity: 12,
            private_per_polarity: 12,
            neutral_words: 80,
            train_docs: 2000,
            dev_docs: 250,
            test_docs: 250,
            sentences: (2, 5),
            words: (4, 9),
            p_priv: 0.8,
            noise: 0.05,
            seed: 7,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.num_labels < 3 || self.num_labels.is_multiple_of(2) {
            return Err(Error::Config {
                msg: format!("synthetic ratings need an odd K >= 3, got {}", self.num_labels),
            });
        }
        if self.pivot_per_polarity == 0 || self.private_per_polarity == 0 || self.neutral_words == 0
        {
            return Err(Error::Config { msg: "lexicon sizes must be positive".to_string() });
        }
        if self.train_docs == 0 || self.dev_docs == 0 || self.test_docs == 0 {
            return Err(Error::Config { msg: "split sizes must be positive".to_string() });
        }
        if self.sentences.0 == 0 || self.sentences.0 > self.sentences.1 {
            return Err(Error::Config { msg: "bad sentence-count range".to_string() });
        }
        if self.words.0 == 0 || self.words.0 > self.words.1 {
            return Err(Error::Config { msg: "bad sentence-length range".to_string() });
        }
        if !(0.0..=1.0).contains(&self.p_priv) || !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config {
                msg: "p_priv and noise must lie in [0, 1]".to_string(),
            });
        }
        Ok(())
    }
}

/// Word lists used by the generator. Prefixes keep the categories disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicons {
    pub pivot_pos: Vec<String>,
    pub pivot_neg: Vec<String>,
    pub source_pos: Vec<String>,
    pub source_neg: Vec<String>,
    pub target_pos: Vec<String>,
    pub target_neg: Vec<String>,
    pub neutral: Vec<String>,
}

impl Lexicons {
    fn build(spec: &SynthSpec) -> Self {
        let series = |prefix: &str, n: usize| -> Vec<String> {
            (0..n).map(|i| format!("{prefix}{i}")).collect()
        };
        Lexicons {
            pivot_pos: series("pivgood", spec.pivot_per_polarity),
            pivot_neg: series("pivbad", spec.pivot_per_polarity),
            source_pos: series("srcgood", spec.private_per_polarity),
            source_neg: series("srcbad", spec.private_per_polarity),
            target_pos: series("tgtgood", spec.private_per_polarity),
            target_neg: series("tgtbad", spec.private_per_polarity),
            neutral: series("filler", spec.neutral_words),
        }
    }

    pub fn categories(&self) -> [(&'static str, &[String]); 7] {
        [
            ("pivot_pos", &self.pivot_pos),
            ("pivot_neg", &self.pivot_neg),
            ("source_pos", &self.source_pos),
            ("source_neg", &self.source_neg),
            ("target_pos", &self.target_pos),
            ("target_neg", &self.target_neg),
            ("neutral", &self.neutral),
        ]
    }
}

/// One generated document; ratings are always present here, the writer
/// decides which splits keep them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenDoc {
    pub label: u8,
    pub sentences: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSet {
    pub train: Vec<GenDoc>,
    pub dev: Vec<GenDoc>,
    pub test: Vec<GenDoc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpora {
    pub spec: SynthSpec,
    pub lexicons: Lexicons,
    pub source: SplitSet,
    pub target: SplitSet,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum DomainKind {
    Source,
    Target,
}

fn gen_doc(
    spec: &SynthSpec,
    lex: &Lexicons,
    domain: DomainKind,
    rng: &mut ChaCha12Rng,
) -> GenDoc {
    let mid = spec.num_labels.div_ceil(2);
    let rating = rng.gen_range(1..=spec.num_labels);
    let intensity = (rating as i64 - mid as i64).unsigned_abs() as usize;
    let max_intensity = (mid - 1) as usize;
    let positive = rating > mid;
    let num_sentences = rng.gen_range(spec.sentences.0..=spec.sentences.1);
    let mut sentences = Vec::with_capacity(num_sentences);
    for _ in 0..num_sentences {
        let len = rng.gen_range(spec.words.0..=spec.words.1);
        // Sentiment tokens take up to half the sentence at full intensity.
        let num_sentiment =
            (((len * intensity) as f64 / (2 * max_intensity) as f64).round() as usize).min(len);
        let mut tokens = Vec::with_capacity(len);
        for _ in 0..num_sentiment {
            let mut pol_positive = positive;
            if rng.gen_bool(spec.noise) {
                pol_positive = !pol_positive;
            }
            let private = rng.gen_bool(spec.p_priv);
            let pool: &[String] = match (private, domain, pol_positive) {
                (true, DomainKind::Source, true) => &lex.source_pos,
                (true, DomainKind::Source, false) => &lex.source_neg,
                (true, DomainKind::Target, true) => &lex.target_pos,
                (true, DomainKind::Target, false) => &lex.target_neg,
                (false, _, true) => &lex.pivot_pos,
                (false, _, false) => &lex.pivot_neg,
            };
            tokens.push(pool[rng.gen_range(0..pool.len())].clone());
        }
        for _ in num_sentiment..len {
            tokens.push(lex.neutral[rng.gen_range(0..lex.neutral.len())].clone());
        }
        tokens.shuffle(rng);
        sentences.push(tokens);
    }
    GenDoc { label: rating, sentences }
}

/// Generate both domains. The same spec always produces the same corpora.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<SynthCorpora> {
    spec.validate()?;
    let lexicons = Lexicons::build(spec);
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut gen_split = |domain: DomainKind| -> SplitSet {
        let mut take = |n: usize| -> Vec<GenDoc> {
            (0..n).map(|_| gen_doc(spec, &lexicons, domain, &mut rng)).collect()
        };
        SplitSet {
            train: take(spec.train_docs),
            dev: take(spec.dev_docs),
            test: take(spec.test_docs),
        }
    };
    let source = gen_split(DomainKind::Source);
    let target = gen_split(DomainKind::Target);
    Ok(SynthCorpora { spec: spec.clone(), lexicons, source, target })
}

/// Render documents in the corpus line format. Unlabeled output writes `-`.
pub fn render_corpus(docs: &[GenDoc], labeled: bool) -> String {
    let mut out = String::new();
    for doc in docs {
        if labeled {
            out.push_str(&doc.label.to_string());
        } else {
            out.push('-');
        }
        for sentence in &doc.sentences {
            out.push('\t');
            out.push_str(&sentence.join(" "));
        }
        out.push('\n');
    }
    out
}

fn render_lexicons(lex: &Lexicons) -> String {
    let mut out = String::new();
    for (name, words) in lex.categories() {
        for w in words {
            out.push_str(name);
            out.push('\t');
            out.push_str(w);
            out.push('\n');
        }
    }
    out
}

/// File names written by `write_corpora`, in write order.
pub const CORPUS_FILES: [&str; 7] = [
    "source_train.txt",
    "source_dev.txt",
    "source_test.txt",
    "target_train.txt",
    "target_dev.txt",
    "target_test.txt",
    "lexicons.txt",
];

/// Write all six splits plus the lexicon manifest into `dir`. The target
/// train split is written unlabeled; everything else keeps its rating.
pub fn write_corpora(dir: &Path, corpora: &SynthCorpora) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let contents = [
        render_corpus(&corpora.source.train, true),
        render_corpus(&corpora.source.dev, true),
        render_corpus(&corpora.source.test, true),
        render_corpus(&corpora.target.train, false),
        render_corpus(&corpora.target.dev, true),
        render_corpus(&corpora.target.test, true),
        render_lexicons(&corpora.lexicons),
    ];
    let mut paths = Vec::with_capacity(CORPUS_FILES.len());
    for (name, content) in CORPUS_FILES.iter().zip(contents.iter()) {
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        w.write_all(content.as_bytes())?;
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_raw;
    use std::collections::HashSet;
    use std::io::Cursor;

    fn small_spec() -> SynthSpec {
        SynthSpec { train_docs: 200, dev_docs: 40, test_docs: 40, seed: 11, ..Default::default() }
    }

    #[test]
    fn regeneration_is_identical() {
        let spec = small_spec();
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            render_corpus(&a.source.train, true),
            render_corpus(&b.source.train, true)
        );
    }

    #[test]
    fn lexicon_categories_are_pairwise_disjoint() {
        let lex = Lexicons::build(&SynthSpec::default());
        let cats = lex.categories();
        for i in 0..cats.len() {
            for j in (i + 1)..cats.len() {
                let a: HashSet<&String> = cats[i].1.iter().collect();
                assert!(
                    cats[j].1.iter().all(|w| !a.contains(w)),
                    "{} and {} overlap",
                    cats[i].0,
                    cats[j].0
                );
            }
        }
    }

    #[test]
    fn source_documents_never_use_target_private_words() {
        let c = gen_synthetic(&small_spec()).unwrap();
        let target_private: HashSet<&String> =
            c.lexicons.target_pos.iter().chain(c.lexicons.target_neg.iter()).collect();
        for split in [&c.source.train, &c.source.dev, &c.source.test] {
            for doc in split {
                for s in &doc.sentences {
                    assert!(s.iter().all(|w| !target_private.contains(w)));
                }
            }
        }
    }

    #[test]
    fn document_shape_respects_spec_ranges() {
        let spec = small_spec();
        let c = gen_synthetic(&spec).unwrap();
        for doc in c.source.train.iter().chain(c.target.train.iter()) {
            assert!((1..=spec.num_labels).contains(&doc.label));
            assert!((spec.sentences.0..=spec.sentences.1).contains(&doc.sentences.len()));
            for s in &doc.sentences {
                assert!((spec.words.0..=spec.words.1).contains(&s.len()));
            }
        }
    }

    #[test]
    fn midpoint_ratings_carry_no_sentiment_words() {
        let c = gen_synthetic(&small_spec()).unwrap();
        for doc in c.source.train.iter().filter(|d| d.label == 3) {
            for s in &doc.sentences {
                assert!(s.iter().all(|w| w.starts_with("filler")), "rating-3 doc had {s:?}");
            }
        }
    }

    #[test]
    fn sentiment_density_grows_with_distance_from_midpoint() {
        let c = gen_synthetic(&SynthSpec { seed: 3, ..small_spec() }).unwrap();
        let density = |label: u8| -> f64 {
            let mut sentiment = 0usize;
            let mut total = 0usize;
            for doc in c.source.train.iter().filter(|d| d.label == label) {
                for s in &doc.sentences {
                    total += s.len();
                    sentiment += s.iter().filter(|w| !w.starts_with("filler")).count();
                }
            }
            assert!(total > 0, "no documents with rating {label}");
            sentiment as f64 / total as f64
        };
        assert!(density(5) > density(4) + 0.1);
        assert!(density(1) > density(2) + 0.1);
        assert!(density(3) == 0.0);
    }

    #[test]
    fn rendered_corpus_round_trips_through_the_parser() {
        let c = gen_synthetic(&small_spec()).unwrap();
        let text = render_corpus(&c.source.dev, true);
        let parsed = parse_raw(Cursor::new(text.as_str()), 5).unwrap();
        assert_eq!(parsed.len(), c.source.dev.len());
        for (raw, gen) in parsed.iter().zip(c.source.dev.iter()) {
            assert_eq!(raw.label, Some(gen.label));
            assert_eq!(raw.sentences, gen.sentences);
        }
        let unlabeled = render_corpus(&c.target.train[..5], false);
        let parsed = parse_raw(Cursor::new(unlabeled.as_str()), 5).unwrap();
        assert!(parsed.iter().all(|d| d.label.is_none()));
    }

    #[test]
    fn written_files_are_byte_identical_across_runs() {
        let spec = SynthSpec { train_docs: 50, dev_docs: 10, test_docs: 10, ..Default::default() };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let pa = write_corpora(dir_a.path(), &gen_synthetic(&spec).unwrap()).unwrap();
        let pb = write_corpora(dir_b.path(), &gen_synthetic(&spec).unwrap()).unwrap();
        assert_eq!(pa.len(), CORPUS_FILES.len());
        for (a, b) in pa.iter().zip(pb.iter()) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = SynthSpec { num_labels: 4, ..Default::default() };
        assert!(gen_synthetic(&bad).is_err());
        let bad = SynthSpec { p_priv: 1.5, ..Default::default() };
        assert!(gen_synthetic(&bad).is_err());
        let bad = SynthSpec { sentences: (3, 2), ..Default::default() };
        assert!(gen_synthetic(&bad).is_err());
        let bad = SynthSpec { train_docs: 0, ..Default::default() };
        assert!(gen_synthetic(&bad).is_err());
    }
}
