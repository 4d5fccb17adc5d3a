//! Document ranking by the best-scoring passage window (PassageRetrievalMax).

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::{IndexBuilder, ScoredHit};
use crate::model::{query_tf, Mode, ModelParams, QueryStrategy, SparseVector};
use crate::text::{tokenize, TokenSeq, Vocabulary, CLS_ID};

pub const DEFAULT_WINDOW: usize = 64;
pub const DEFAULT_STRIDE: usize = 32;

/// Anything that maps token sequences to sparse vectors on both sides.
pub trait SparseEncoder: Sync {
    fn encode_passage(&self, seq: &TokenSeq) -> Result<SparseVector>;
    fn encode_query(&self, seq: &TokenSeq) -> Result<SparseVector>;
}

/// Raw term frequencies on both sides.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfEncoder;

impl SparseEncoder for TfEncoder {
    fn encode_passage(&self, seq: &TokenSeq) -> Result<SparseVector> {
        Ok(query_tf(seq))
    }

    fn encode_query(&self, seq: &TokenSeq) -> Result<SparseVector> {
        Ok(query_tf(seq))
    }
}

/// A trained model used under a fixed mode and query strategy.
#[derive(Debug, Clone, Copy)]
pub struct ModelEncoder<'a> {
    pub params: &'a ModelParams,
    pub mode: Mode,
    pub strategy: QueryStrategy,
}

impl<'a> ModelEncoder<'a> {
    /// Uses the mode and strategy stored in the model config.
    pub fn new(params: &'a ModelParams) -> Self {
        ModelEncoder {
            params,
            mode: params.config.mode,
            strategy: params.config.strategy,
        }
    }

    fn fit(&self, seq: &TokenSeq) -> TokenSeq {
        let max = self.params.config.max_len;
        if seq.len() <= max {
            seq.clone()
        } else {
            TokenSeq::from_ids(seq.ids()[..max].to_vec()).expect("prefix keeps [CLS]")
        }
    }
}

impl SparseEncoder for ModelEncoder<'_> {
    fn encode_passage(&self, seq: &TokenSeq) -> Result<SparseVector> {
        self.params.represent_passage(&self.fit(seq), self.mode, None)
    }

    fn encode_query(&self, seq: &TokenSeq) -> Result<SparseVector> {
        self.params.represent_query(&self.fit(seq), self.strategy)
    }
}

/// Splits a document into overlapping windows. `window` counts tokens
/// including the leading `[CLS]`; consecutive windows start `stride` words
/// apart and the last one reaches the end of the document.
pub fn split_windows(doc: &TokenSeq, window: usize, stride: usize) -> Result<Vec<TokenSeq>> {
    if !(window >= 2 && stride >= 1 && window - 1 >= stride) {
        return Err(Error::InvalidArgument(format!(
            "need window > stride >= 1 (window counts [CLS]), got window {window}, stride {stride}"
        )));
    }
    let words = &doc.ids()[1..];
    let span = window - 1;
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + span).min(words.len());
        let mut ids = Vec::with_capacity(end - start + 1);
        ids.push(CLS_ID);
        ids.extend_from_slice(&words[start..end]);
        out.push(TokenSeq::from_ids(ids)?);
        if end == words.len() {
            break;
        }
        start += stride;
    }
    Ok(out)
}

/// Ranks documents by the maximum dot-product score of their windows.
/// Documents whose windows share no term with the query are not returned.
pub fn passage_retrieval_max<S: AsRef<str> + Sync>(
    docs: &[(S, S)],
    query: &str,
    vocab: &Vocabulary,
    window: usize,
    stride: usize,
    encoder: &dyn SparseEncoder,
    k: usize,
) -> Result<Vec<ScoredHit>> {
    let doc_windows: Vec<Vec<SparseVector>> = docs
        .par_iter()
        .map(|(_, text)| {
            split_windows(&tokenize(text.as_ref(), vocab, usize::MAX), window, stride)?
                .iter()
                .map(|w| encoder.encode_passage(w))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut builder = IndexBuilder::new(vocab.len());
    let mut owner: Vec<u32> = Vec::new();
    for (d, windows) in doc_windows.iter().enumerate() {
        for (w, vec) in windows.iter().enumerate() {
            builder.add(&format!("{d}#{w}"), vec)?;
            owner.push(d as u32);
        }
    }
    let index = builder.finish();
    let q = encoder.encode_query(&tokenize(query, vocab, usize::MAX))?;

    let mut best: HashMap<u32, f64> = HashMap::new();
    for (win, score) in index.search_internal(&q, index.doc_count()) {
        let d = owner[win as usize];
        let e = best.entry(d).or_insert(score);
        if score > *e {
            *e = score;
        }
    }
    let mut ranked: Vec<(u32, f64)> = best.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked
        .into_iter()
        .map(|(d, score)| ScoredHit {
            id: docs[d as usize].0.as_ref().to_string(),
            score,
        })
        .collect())
}
