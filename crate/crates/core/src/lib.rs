//! Learned term-based sparse retrieval.
//!
//! Text is mapped to a sparse, interpretable vector over the vocabulary by
//! multiplying a dense importance distribution with a binary gate. The
//! resulting vectors are served from an inverted index and evaluated with
//! MRR/Recall against BM25 and term-frequency baselines.

pub mod error;
pub mod eval;
pub mod index;
pub mod model;
pub mod numerics;
pub mod training;
pub mod text;

pub use error::{Error, Result};
