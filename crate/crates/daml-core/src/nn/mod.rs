//! Neural building blocks: embeddings, BiGRU, attention pooling, the
//! hierarchical feature extractor, and the classifier/discriminator/prober
//! heads.
//!
//! Parameter structs hold `NodeId` handles into one graph. Construction is
//! split in two so the same canonical ordering serves initialization,
//! checkpoint restore, and gradient checking: `*_template` produces named
//! initial tensors, `*_from_nodes` binds a parameter struct over node ids
//! created from those tensors in order.

pub mod attention;
pub mod extractor;
pub mod gru;
pub mod head;
pub mod init;

pub use attention::{attention_pool, attention_from_nodes, attention_template, AttentionParams};
pub use extractor::{
    extract, extract_masked, extractor_from_nodes, extractor_template, ExtractorDims,
    ExtractorParams,
};
pub use gru::{bigru_encode, gru_from_nodes, gru_step, gru_template, GruParams};
pub use head::{head_forward, head_from_nodes, head_template, HeadDims, HeadKind, HeadParams};
pub use init::{apply_pretrained_embeddings, uniform_tensor, INIT_RANGE};
