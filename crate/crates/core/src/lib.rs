//! Exemplar-based semantic question matching.
//!
//! Questions and their precomputed sentence embeddings go in; topics are
//! defined by a handful of exemplar questions, and every candidate is scored
//! against a topic by its cosine similarity to the exemplars. The crate also
//! calibrates the match threshold from the pairwise-similarity distribution,
//! reports how anisotropic an embedding source is, and evaluates rankings
//! against relevance labels.

pub mod corpus;
pub mod diagnostics;
pub mod embeddings;
pub mod error;
pub mod evaluator;
pub mod fsutil;
pub mod matcher;
pub mod registry;
pub mod simcore;
pub mod synthetic;

pub use error::{Error, Result};
