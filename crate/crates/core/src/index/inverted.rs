use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub id: String,
    pub score: f64,
}

/// Term-major posting lists of `(doc, weight)`; weights are stored as `f32`
/// and scored in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    pub(crate) v: usize,
    pub(crate) postings: Vec<Vec<(u32, f32)>>,
    pub(crate) doc_ids: Vec<String>,
    /// Token counts per document; present for BM25 indexes.
    pub(crate) doc_lengths: Option<Vec<u32>>,
}

/// Candidate ordering: higher score first, then lower internal doc id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    score: f64,
    doc: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // "greater" means ranked worse, so a max-heap keeps the current k-th best on top
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then(self.doc.cmp(&other.doc))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact top-k of `(doc, score)` pairs, best first.
pub(crate) fn top_k(scored: impl IntoIterator<Item = (u32, f64)>, k: usize) -> Vec<(u32, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
    for (doc, score) in scored {
        let c = Candidate { score, doc };
        if heap.len() < k {
            heap.push(c);
        } else if let Some(worst) = heap.peek() {
            if c < *worst {
                heap.pop();
                heap.push(c);
            }
        }
    }
    heap.into_sorted_vec().into_iter().map(|c| (c.doc, c.score)).collect()
}

impl InvertedIndex {
    pub fn empty(v: usize) -> Self {
        InvertedIndex {
            v,
            postings: vec![Vec::new(); v],
            doc_ids: Vec::new(),
            doc_lengths: None,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.doc_ids[doc as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn postings(&self, term: u32) -> &[(u32, f32)] {
        self.postings.get(term as usize).map_or(&[], Vec::as_slice)
    }

    pub fn doc_lengths(&self) -> Option<&[u32]> {
        self.doc_lengths.as_deref()
    }

    pub fn total_postings(&self) -> usize {
        self.postings.iter().map(Vec::len).sum()
    }

    /// Dot-product top-k over the posting lists of the query terms.
    pub fn search(&self, q: &SparseVector, k: usize) -> Vec<ScoredHit> {
        self.search_internal(q, k)
            .into_iter()
            .map(|(doc, score)| ScoredHit {
                id: self.doc_ids[doc as usize].clone(),
                score,
            })
            .collect()
    }

    /// Like [`InvertedIndex::search`] but returns internal doc ids.
    pub fn search_internal(&self, q: &SparseVector, k: usize) -> Vec<(u32, f64)> {
        let mut acc = vec![0.0f64; self.doc_count()];
        let mut seen = vec![false; self.doc_count()];
        let mut touched: Vec<u32> = Vec::new();
        for &(t, qw) in q.entries() {
            for &(doc, w) in self.postings(t) {
                let d = doc as usize;
                if !seen[d] {
                    seen[d] = true;
                    touched.push(doc);
                }
                acc[d] += qw * w as f64;
            }
        }
        top_k(touched.into_iter().map(|d| (d, acc[d as usize])), k)
    }

    /// Copy with weights mapped to integer impacts in `1..=levels`, scaled
    /// by the global maximum weight.
    pub fn quantized(&self, levels: u32) -> InvertedIndex {
        let levels = levels.max(1) as f32;
        let max = self
            .postings
            .iter()
            .flatten()
            .map(|p| p.1)
            .fold(0.0f32, f32::max);
        let mut out = self.clone();
        if max > 0.0 {
            for list in &mut out.postings {
                for p in list.iter_mut() {
                    p.1 = (p.1 / max * levels).round().max(1.0);
                }
            }
        }
        out
    }
}

/// Incremental builder; documents get internal ids in insertion order.
#[derive(Debug)]
pub struct IndexBuilder {
    index: InvertedIndex,
    seen: HashSet<String>,
}

impl IndexBuilder {
    pub fn new(v: usize) -> Self {
        IndexBuilder {
            index: InvertedIndex::empty(v),
            seen: HashSet::new(),
        }
    }

    fn register(&mut self, id: &str) -> Result<u32> {
        if !self.seen.insert(id.to_string()) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        let doc = u32::try_from(self.index.doc_ids.len())
            .map_err(|_| Error::InvalidArgument("too many documents".into()))?;
        self.index.doc_ids.push(id.to_string());
        Ok(doc)
    }

    fn ensure_term(&mut self, t: u32) {
        if t as usize >= self.index.postings.len() {
            self.index.postings.resize(t as usize + 1, Vec::new());
            self.index.v = self.index.postings.len();
        }
    }

    pub fn add(&mut self, id: &str, vector: &SparseVector) -> Result<()> {
        let doc = self.register(id)?;
        for &(t, w) in vector.entries() {
            let w = w as f32;
            // weights below f32 resolution are not representable as positive impacts
            if w > 0.0 {
                self.ensure_term(t);
                self.index.postings[t as usize].push((doc, w));
            }
        }
        Ok(())
    }

    /// Adds a document of raw term counts and records its length.
    pub(crate) fn add_counts(&mut self, id: &str, counts: &[(u32, u32)], length: u32) -> Result<()> {
        let doc = self.register(id)?;
        for &(t, c) in counts {
            self.ensure_term(t);
            self.index.postings[t as usize].push((doc, c as f32));
        }
        self.index.doc_lengths.get_or_insert_with(Vec::new).push(length);
        Ok(())
    }

    pub fn finish(self) -> InvertedIndex {
        self.index
    }
}

/// Builds an index from `(external id, vector)` pairs.
pub fn build_index<I>(docs: I, v: usize) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = (String, SparseVector)>,
{
    let mut b = IndexBuilder::new(v);
    for (id, vec) in docs {
        b.add(&id, &vec)?;
    }
    Ok(b.finish())
}

/// Scores every stored vector with a full dot product. Weights are rounded
/// to `f32` exactly as the index stores them.
pub fn brute_force_search(docs: &[(String, SparseVector)], q: &SparseVector, k: usize) -> Vec<ScoredHit> {
    let scored = docs.iter().enumerate().filter_map(|(doc, (_, d))| {
        let (mut i, mut j) = (0, 0);
        let (qe, de) = (q.entries(), d.entries());
        let mut acc = 0.0f64;
        let mut matched = false;
        while i < qe.len() && j < de.len() {
            match qe[i].0.cmp(&de[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    let w = de[j].1 as f32;
                    if w > 0.0 {
                        acc += qe[i].1 * w as f64;
                        matched = true;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        matched.then_some((doc as u32, acc))
    });
    top_k(scored, k)
        .into_iter()
        .map(|(doc, score)| ScoredHit {
            id: docs[doc as usize].0.clone(),
            score,
        })
        .collect()
}
