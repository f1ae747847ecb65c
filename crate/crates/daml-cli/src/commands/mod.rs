//! One submodule per subcommand, plus the corpus-directory loader they
//! share. Commands never mutate their inputs; everything they produce
//! goes under the resolved `--out` directory.

use std::path::{Path, PathBuf};

use daml_core::corpus::{build_vocab, parse_corpus, Document, Vocab};
use daml_core::objectives::Variant;
use daml_core::trainer::{TrainConfig, TrainCorpora};

use crate::manifest::file_digest;
use crate::{require_file, CliError};

mod compare;
mod eval;
mod gen_data;
mod gradcheck;
mod train;

pub use compare::{compare, CompareArgs};
pub use eval::eval;
pub use gen_data::gen_data;
pub use gradcheck::gradcheck;
pub use train::train;

/// The four training splits plus, for comparison runs, the target test
/// split, all indexed against one vocabulary built from the two train
/// files.
pub(crate) struct DataSet {
    pub vocab: Vocab,
    pub corpora: TrainCorpora,
    pub target_test: Option<Vec<Document>>,
    /// (file name, sha256) for every file read, in load order.
    pub digests: Vec<(&'static str, String)>,
}

pub(crate) fn load_dataset(
    data: &Path,
    num_labels: u8,
    with_target_test: bool,
) -> Result<DataSet, CliError> {
    let path = |name: &str| -> PathBuf { data.join(name) };
    let mut names = vec!["source_train.txt", "source_dev.txt", "target_train.txt", "target_dev.txt"];
    if with_target_test {
        names.push("target_test.txt");
    }
    for name in &names {
        require_file(&path(name))?;
    }
    let source_train = path("source_train.txt");
    let target_train = path("target_train.txt");
    let vocab = build_vocab(&[&source_train, &target_train], num_labels, 1)?;
    let corpora = TrainCorpora {
        source_train: parse_corpus(&source_train, &vocab, true, num_labels)?,
        source_dev: parse_corpus(&path("source_dev.txt"), &vocab, true, num_labels)?,
        target_train: parse_corpus(&target_train, &vocab, false, num_labels)?,
        target_dev: parse_corpus(&path("target_dev.txt"), &vocab, false, num_labels)?,
    };
    let target_test = if with_target_test {
        Some(parse_corpus(&path("target_test.txt"), &vocab, false, num_labels)?)
    } else {
        None
    };
    let digests = names
        .iter()
        .map(|name| Ok((*name, file_digest(&path(name))?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(DataSet { vocab, corpora, target_test, digests })
}

/// Single-model variants train exactly one group; group variants need at
/// least two. One config can therefore drive a whole variant sweep.
pub(crate) fn groups_for(variant: Variant, configured: usize) -> usize {
    match variant {
        Variant::Naive | Variant::Dann => 1,
        _ => configured.max(2),
    }
}

/// Apply a variant choice to a config, adjusting the group count to the
/// variant's requirement.
pub(crate) fn set_variant(cfg: &mut TrainConfig, variant: Variant) {
    cfg.variant = variant;
    cfg.num_groups = groups_for(variant, cfg.num_groups);
}
