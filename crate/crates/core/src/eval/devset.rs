//! Scaled-down dev sets and BM25-mined training triples.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::Qrels;
use crate::error::{Error, Result};
use crate::index::{bm25_index, bm25_search, Bm25Params, InvertedIndex};
use crate::text::{tokenize, Vocabulary};
use crate::training::TrainingTriple;

#[derive(Debug, Clone, PartialEq)]
pub struct Devset {
    pub passages: Vec<(String, String)>,
    pub queries: Vec<(String, String)>,
    pub qrels: Qrels,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevsetSpec {
    /// Number of judged queries to sample.
    pub queries: usize,
    /// BM25 depth pooled per query.
    pub top_n: usize,
    /// Target passage count; random passages fill up to it.
    pub size: usize,
    pub seed: u64,
}

/// Samples judged queries and pools BM25 top-n passages, the relevant
/// passages and random fill into a smaller corpus. Passages keep their
/// original order.
pub fn make_devset(
    passages: &[(String, String)],
    queries: &[(String, String)],
    qrels: &Qrels,
    vocab: &Vocabulary,
    spec: DevsetSpec,
) -> Result<Devset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let judged: Vec<&(String, String)> = queries.iter().filter(|q| qrels.relevant(&q.0).is_some()).collect();
    if judged.is_empty() {
        return Err(Error::EmptyInput("make_devset needs judged queries"));
    }
    let sampled: Vec<&(String, String)> = {
        let mut v: Vec<_> = judged.choose_multiple(&mut rng, spec.queries.min(judged.len())).copied().collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    };
    let idx = bm25_index(passages, vocab)?;
    let pos: std::collections::HashMap<&str, usize> =
        passages.iter().enumerate().map(|(i, p)| (p.0.as_str(), i)).collect();

    let mut keep: BTreeSet<usize> = BTreeSet::new();
    let mut dev_qrels = Qrels::new();
    for (qid, text) in &sampled {
        for pid in qrels.relevant(qid).into_iter().flatten() {
            if let Some(&i) = pos.get(pid.as_str()) {
                keep.insert(i);
                dev_qrels.add(qid.clone(), pid.clone());
            }
        }
        let hits = bm25_search(&idx, &tokenize(text, vocab, usize::MAX), spec.top_n, Bm25Params::default())?;
        keep.extend(hits.iter().map(|h| pos[h.id.as_str()]));
    }
    let mut rest: Vec<usize> = (0..passages.len()).filter(|i| !keep.contains(i)).collect();
    rest.shuffle(&mut rng);
    let fill = spec.size.saturating_sub(keep.len());
    keep.extend(rest.into_iter().take(fill));

    Ok(Devset {
        passages: keep.into_iter().map(|i| passages[i].clone()).collect(),
        queries: sampled
            .into_iter()
            .filter(|q| dev_qrels.relevant(&q.0).is_some())
            .cloned()
            .collect(),
        qrels: dev_qrels,
    })
}

/// Builds `negatives` triples per judged query: half from the BM25 top
/// non-relevant passages and the rest drawn at random.
pub fn make_triples(
    queries: &[(String, String)],
    qrels: &Qrels,
    passages: &[(String, String)],
    index: &InvertedIndex,
    vocab: &Vocabulary,
    negatives: usize,
    seed: u64,
) -> Result<Vec<TrainingTriple>> {
    if passages.len() < 2 {
        return Err(Error::InvalidArgument("need at least two passages to mine negatives".into()));
    }
    let text_of: std::collections::HashMap<&str, &str> =
        passages.iter().map(|p| (p.0.as_str(), p.1.as_str())).collect();
    let n_bm25 = negatives.div_ceil(2);
    let mined: Vec<Vec<String>> = queries
        .par_iter()
        .map(|(qid, text)| {
            let Some(rel) = qrels.relevant(qid) else {
                return Ok(Vec::new());
            };
            let hits = bm25_search(index, &tokenize(text, vocab, usize::MAX), n_bm25 + rel.len(), Bm25Params::default())?;
            Ok(hits
                .into_iter()
                .filter(|h| !rel.contains(&h.id))
                .take(n_bm25)
                .map(|h| h.id)
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for ((qid, text), hard) in queries.iter().zip(mined) {
        let Some(rel) = qrels.relevant(qid) else { continue };
        let Some(positive) = rel.iter().find_map(|p| text_of.get(p.as_str())) else {
            continue;
        };
        let mut negs: Vec<&str> = hard.iter().map(String::as_str).collect();
        let mut guard = 0;
        while negs.len() < negatives && guard < 100 * negatives {
            let cand = &passages.choose(&mut rng).expect("non-empty").0;
            if !rel.contains(cand) && !negs.contains(&cand.as_str()) {
                negs.push(cand);
            }
            guard += 1;
        }
        for neg in negs {
            out.push(TrainingTriple {
                query: text.clone(),
                positive: positive.to_string(),
                negative: text_of[neg].to_string(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::build_vocab;

    fn corpus() -> (Vec<(String, String)>, Vec<(String, String)>, Qrels, Vocabulary) {
        let passages: Vec<(String, String)> = (0..20)
            .map(|i| (format!("p{i}"), format!("topic{} common word{}", i % 5, i)))
            .collect();
        let queries = vec![
            ("q1".to_string(), "topic1 word1".to_string()),
            ("q2".to_string(), "topic2".to_string()),
            ("q3".to_string(), "unjudged".to_string()),
        ];
        let qrels: Qrels = [("q1", "p1"), ("q2", "p7")].into_iter().collect();
        let texts: Vec<&str> = passages.iter().map(|p| p.1.as_str()).collect();
        let v = build_vocab(&texts, 1).unwrap();
        (passages, queries, qrels, v)
    }

    #[test]
    fn devset_pools_relevant_and_bm25_hits() {
        let (p, q, r, v) = corpus();
        let spec = DevsetSpec {
            queries: 2,
            top_n: 3,
            size: 10,
            seed: 1,
        };
        let d = make_devset(&p, &q, &r, &v, spec).unwrap();
        assert_eq!(d.queries.len(), 2);
        assert_eq!(d.passages.len(), 10);
        let ids: BTreeSet<&str> = d.passages.iter().map(|x| x.0.as_str()).collect();
        assert!(ids.contains("p1") && ids.contains("p7"));
        assert_eq!(d, make_devset(&p, &q, &r, &v, spec).unwrap());
    }

    #[test]
    fn triples_avoid_relevant_negatives() {
        let (p, q, r, v) = corpus();
        let idx = bm25_index(&p, &v).unwrap();
        let t = make_triples(&q, &r, &p, &idx, &v, 4, 3).unwrap();
        assert_eq!(t.len(), 8);
        let p1 = &p[1].1;
        for tr in t.iter().filter(|t| t.query == "topic1 word1") {
            assert_eq!(&tr.positive, p1);
            assert_ne!(&tr.negative, p1);
        }
        // the first mined negative for q1 shares its topic
        assert!(t[0].negative.starts_with("topic1"));
    }
}
