//! Inverted index over sparse vectors, exact top-k search, and BM25.

mod bm25;
mod inverted;
mod io;

pub use bm25::{bm25_index, bm25_search, idf, Bm25Params};
pub use inverted::{brute_force_search, build_index, IndexBuilder, InvertedIndex, ScoredHit};
pub use io::{decode_index, encode_index, load_index, save_index, INDEX_MAGIC, INDEX_VERSION};
