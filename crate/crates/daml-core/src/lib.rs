//! Adversarial mutual learning for cross-domain sentiment classification.
//!
//! Two (or more) model groups, each a hierarchical attention extractor with a
//! sentiment classifier, domain discriminator, and target-domain prober,
//! train side by side. Domain confusion flows through a gradient reversal
//! layer; mutual learning distills each group's classifier into its peers'
//! probers so the classifiers' own gradients stay purely supervised.

pub mod adam;
pub mod config;
pub mod corpus;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
