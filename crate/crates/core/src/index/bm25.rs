//! Okapi BM25 over raw term frequencies stored in an [`InvertedIndex`].

use serde::{Deserialize, Serialize};

use super::inverted::{top_k, IndexBuilder, InvertedIndex, ScoredHit};
use crate::error::{Error, Result};
use crate::text::{term_counts, tokenize, TokenSeq, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Indexes raw term frequencies and document lengths (word tokens,
/// unknown words included).
pub fn bm25_index<S: AsRef<str>>(corpus: &[(S, S)], vocab: &Vocabulary) -> Result<InvertedIndex> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut b = IndexBuilder::new(vocab.len());
    for (id, text) in corpus {
        let seq = tokenize(text.as_ref(), vocab, usize::MAX);
        b.add_counts(id.as_ref(), &term_counts(&seq), seq.word_count() as u32)?;
    }
    Ok(b.finish())
}

/// BM25 top-k for the distinct terms of `query`.
pub fn bm25_search(idx: &InvertedIndex, query: &TokenSeq, k: usize, params: Bm25Params) -> Result<Vec<ScoredHit>> {
    if !(params.k1 > 0.0) || !(0.0..=1.0).contains(&params.b) {
        return Err(Error::InvalidArgument(format!("invalid BM25 parameters {params:?}")));
    }
    let lengths = idx
        .doc_lengths()
        .ok_or_else(|| Error::InvalidArgument("index has no document lengths; build it with bm25_index".into()))?;
    let n = idx.doc_count();
    if n == 0 {
        return Ok(Vec::new());
    }
    let avgdl = lengths.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
    let avgdl = if avgdl > 0.0 { avgdl } else { 1.0 };

    let mut acc = vec![0.0f64; n];
    let mut seen = vec![false; n];
    let mut touched = Vec::new();
    for (t, _) in term_counts(query) {
        let postings = idx.postings(t);
        if postings.is_empty() {
            continue;
        }
        let w = idf(n, postings.len());
        for &(doc, tf) in postings {
            let d = doc as usize;
            let tf = tf as f64;
            let norm = params.k1 * (1.0 - params.b + params.b * lengths[d] as f64 / avgdl);
            acc[d] += w * tf * (params.k1 + 1.0) / (tf + norm);
            if !seen[d] {
                seen[d] = true;
                touched.push(doc);
            }
        }
    }
    Ok(top_k(touched.into_iter().map(|d| (d, acc[d as usize])), k)
        .into_iter()
        .map(|(doc, score)| ScoredHit {
            id: idx.doc_id(doc).to_string(),
            score,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::build_vocab;

    fn corpus() -> Vec<(String, String)> {
        vec![
            ("d1".into(), "cat sat on the mat".into()),
            ("d2".into(), "dog dog cat".into()),
            ("d3".into(), "bird".into()),
        ]
    }

    #[test]
    fn term_frequencies_and_lengths() {
        let c = corpus();
        let texts: Vec<&str> = c.iter().map(|d| d.1.as_str()).collect();
        let v = build_vocab(&texts, 1).unwrap();
        let idx = bm25_index(&c, &v).unwrap();
        assert_eq!(idx.doc_lengths().unwrap(), &[5, 3, 1]);
        let dog = v.id("dog").unwrap();
        assert_eq!(idx.postings(dog), &[(1, 2.0)]);
        let cat = v.id("cat").unwrap();
        assert_eq!(idx.postings(cat), &[(0, 1.0), (1, 1.0)]);
        assert_eq!(idx.postings(v.id("bird").unwrap()), &[(2, 1.0)]);
    }

    #[test]
    fn single_doc_single_term_score() {
        let c = vec![("only".to_string(), "term".to_string())];
        let v = build_vocab(&["term"], 1).unwrap();
        let idx = bm25_index(&c, &v).unwrap();
        let hits = bm25_search(&idx, &tokenize("term", &v, 16), 10, Bm25Params::default()).unwrap();
        // N=1, df=1: idf = ln(1 + 0.5/1.5) = ln(4/3); len == avgdl so the
        // tf factor is 1 * 2.2 / (1 + 1.2) = 1
        assert_eq!(hits.len(), 1);
        assert!((hits[0].score - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn absent_query_term_contributes_nothing() {
        let c = corpus();
        let texts: Vec<&str> = c.iter().map(|d| d.1.as_str()).collect();
        let v = build_vocab(&texts, 1).unwrap();
        let idx = bm25_index(&c, &v).unwrap();
        let p = Bm25Params::default();
        let a = bm25_search(&idx, &tokenize("bird", &v, 16), 10, p).unwrap();
        let b = bm25_search(&idx, &tokenize("bird unicorn", &v, 16), 10, p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn b_zero_ignores_length() {
        let c = vec![
            ("short".to_string(), "x".to_string()),
            ("long".to_string(), "x y y y y y y".to_string()),
        ];
        let v = build_vocab(&["x y"], 1).unwrap();
        let idx = bm25_index(&c, &v).unwrap();
        let hits = bm25_search(&idx, &tokenize("x", &v, 16), 10, Bm25Params { k1: 1.2, b: 0.0 }).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn idf_is_positive() {
        for n in 1..50 {
            for df in 1..=n {
                assert!(idf(n, df) > 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_params_and_plain_indexes() {
        let c = corpus();
        let v = build_vocab(&["cat dog"], 1).unwrap();
        let idx = bm25_index(&c, &v).unwrap();
        let q = tokenize("cat", &v, 8);
        assert!(bm25_search(&idx, &q, 5, Bm25Params { k1: 0.0, b: 0.5 }).is_err());
        assert!(bm25_search(&idx, &q, 5, Bm25Params { k1: 1.0, b: 1.5 }).is_err());
        assert!(bm25_search(&InvertedIndex::empty(4), &q, 5, Bm25Params::default()).is_err());
        let empty: Vec<(String, String)> = Vec::new();
        assert!(bm25_index(&empty, &v).is_err());
    }
}
