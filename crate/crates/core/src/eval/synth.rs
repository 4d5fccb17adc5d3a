//! Generated corpus with a controlled lexical mismatch.
//!
//! Every passage mentions a unique pair of entity words among filler words
//! and repeated stopwords. Each entity has an alias that never occurs in any
//! passage. A query names the two entities of its passage plus stopwords;
//! in a fixed share of queries one entity is replaced by its alias, so the
//! relevant passage lacks that query term. Parallel pairs built from the training passages
//! pair every passage with its aliases and with its training query.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::Qrels;
use crate::error::{Error, Result};
use crate::text::{read_tsv_pairs, write_tsv_pairs};
use crate::training::{read_pairs, write_pairs, ExpansionKind, ParallelPair};

const STOPWORDS: [&str; 12] = ["the", "of", "and", "a", "in", "to", "is", "for", "on", "with", "as", "by"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub passages: usize,
    pub eval_queries: usize,
    pub entities: usize,
    pub fillers: usize,
    pub fillers_per_passage: usize,
    pub stopwords_per_passage: usize,
    pub stopwords_per_query: usize,
    /// Share of queries in which one entity is replaced by its alias.
    pub mismatch_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            passages: 2000,
            eval_queries: 200,
            entities: 100,
            fillers: 200,
            fillers_per_passage: 8,
            stopwords_per_passage: 6,
            stopwords_per_query: 2,
            mismatch_rate: 0.5,
            seed: 7,
        }
    }
}

/// A retrieval corpus with evaluation and training splits, as stored in a
/// corpus directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusBundle {
    pub passages: Vec<(String, String)>,
    pub queries: Vec<(String, String)>,
    pub qrels: Qrels,
    pub train_queries: Vec<(String, String)>,
    pub train_qrels: Qrels,
    pub pairs: Vec<ParallelPair>,
    /// Evaluation queries whose relevant passage lacks one query term.
    pub mismatched: BTreeSet<String>,
}

const FILES: [&str; 7] = [
    "passages.tsv",
    "queries.tsv",
    "qrels.tsv",
    "train_queries.tsv",
    "train_qrels.tsv",
    "pairs.tsv",
    "mismatched.txt",
];

impl CorpusBundle {
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_tsv_pairs(dir.join(FILES[0]), &self.passages)?;
        write_tsv_pairs(dir.join(FILES[1]), &self.queries)?;
        self.qrels.write(dir.join(FILES[2]))?;
        write_tsv_pairs(dir.join(FILES[3]), &self.train_queries)?;
        self.train_qrels.write(dir.join(FILES[4]))?;
        write_pairs(dir.join(FILES[5]), &self.pairs)?;
        let mut m: String = self.mismatched.iter().map(|q| format!("{q}\n")).collect();
        if m.is_empty() {
            m.push('\n');
        }
        fs::write(dir.join(FILES[6]), m)?;
        Ok(())
    }

    /// Reads a corpus directory. Training files and `mismatched.txt` are
    /// optional.
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let optional = |name: &str| dir.join(name).exists().then(|| dir.join(name));
        let mut b = CorpusBundle {
            passages: read_tsv_pairs(dir.join(FILES[0]))?,
            queries: read_tsv_pairs(dir.join(FILES[1]))?,
            qrels: Qrels::read(dir.join(FILES[2]))?,
            ..Default::default()
        };
        if let Some(p) = optional(FILES[3]) {
            b.train_queries = read_tsv_pairs(p)?;
        }
        if let Some(p) = optional(FILES[4]) {
            b.train_qrels = Qrels::read(p)?;
        }
        if let Some(p) = optional(FILES[5]) {
            b.pairs = read_pairs(p)?;
        }
        if let Some(p) = optional(FILES[6]) {
            b.mismatched = fs::read_to_string(p)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
        }
        if b.passages.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(b)
    }
}

pub fn entity_word(i: usize) -> String {
    format!("entity{i}")
}

pub fn alias_word(i: usize) -> String {
    format!("alias{i}")
}

fn filler_word(i: usize) -> String {
    format!("word{i}")
}

/// Generates the corpus; the first `eval_queries` passages carry the
/// evaluation queries and the rest the training queries and pairs.
pub fn generate(cfg: &SynthConfig) -> Result<CorpusBundle> {
    let k = cfg.entities;
    let max_pairs = k * k.saturating_sub(1) / 2;
    if cfg.passages == 0 || cfg.passages > max_pairs {
        return Err(Error::InvalidArgument(format!(
            "{} passages need between 1 and {max_pairs} distinct entity pairs",
            cfg.passages
        )));
    }
    if cfg.eval_queries > cfg.passages || cfg.fillers == 0 || !(0.0..=1.0).contains(&cfg.mismatch_rate) {
        return Err(Error::InvalidArgument("inconsistent synthetic corpus settings".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut all_pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    all_pairs.shuffle(&mut rng);
    all_pairs.truncate(cfg.passages);

    let mut bundle = CorpusBundle::default();
    for (j, &(x, y)) in all_pairs.iter().enumerate() {
        let mut words = vec![entity_word(x), entity_word(y)];
        words.extend((0..cfg.fillers_per_passage).map(|_| filler_word(rng.random_range(0..cfg.fillers))));
        words.extend((0..cfg.stopwords_per_passage).map(|_| STOPWORDS.choose(&mut rng).unwrap().to_string()));
        words.shuffle(&mut rng);
        bundle.passages.push((format!("p{j}"), words.join(" ")));
    }

    for (j, &(x, y)) in all_pairs.iter().enumerate() {
        let mismatch = rng.random_bool(cfg.mismatch_rate);
        let (mut a, mut b) = (entity_word(x), entity_word(y));
        if mismatch {
            if rng.random_bool(0.5) {
                a = alias_word(x);
            } else {
                b = alias_word(y);
            }
        }
        let mut words = vec![a, b];
        words.extend((0..cfg.stopwords_per_query).map(|_| STOPWORDS.choose(&mut rng).unwrap().to_string()));
        words.shuffle(&mut rng);
        let text = words.join(" ");
        let pid = format!("p{j}");
        if j < cfg.eval_queries {
            let qid = format!("q{j}");
            if mismatch {
                bundle.mismatched.insert(qid.clone());
            }
            bundle.qrels.add(qid.clone(), pid);
            bundle.queries.push((qid, text));
        } else {
            let qid = format!("t{j}");
            bundle.train_qrels.add(qid.clone(), pid);
            bundle.pairs.push(ParallelPair {
                passage: bundle.passages[j].1.clone(),
                target: format!("{} {}", alias_word(x), alias_word(y)),
                kind: ExpansionKind::Summarization,
            });
            bundle.pairs.push(ParallelPair {
                passage: bundle.passages[j].1.clone(),
                target: text.clone(),
                kind: ExpansionKind::Passage2Query,
            });
            bundle.train_queries.push((qid, text));
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            passages: 60,
            eval_queries: 10,
            entities: 20,
            fillers: 30,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_config_is_feasible() {
        let b = generate(&SynthConfig::default()).unwrap();
        assert_eq!(b.passages.len(), 2000);
        assert_eq!(b.queries.len(), 200);
        assert_eq!(b.train_queries.len(), 1800);
        let share = b.mismatched.len() as f64 / 200.0;
        assert!((0.35..0.65).contains(&share), "{share}");
    }

    #[test]
    fn mismatched_passages_lack_one_query_term() {
        let b = generate(&small()).unwrap();
        for (qid, q) in &b.queries {
            let pid = b.qrels.relevant(qid).unwrap().iter().next().unwrap();
            let passage = &b.passages.iter().find(|p| &p.0 == pid).unwrap().1;
            let pw: BTreeSet<&str> = passage.split(' ').collect();
            let missing = q
                .split(' ')
                .filter(|w| !STOPWORDS.contains(w) && !pw.contains(w))
                .count();
            assert_eq!(missing, usize::from(b.mismatched.contains(qid)), "{qid}: {q} / {passage}");
        }
    }

    #[test]
    fn aliases_never_occur_in_passages() {
        let b = generate(&small()).unwrap();
        assert!(b.passages.iter().all(|p| !p.1.contains("alias")));
        assert!(b.pairs.iter().any(|p| p.target.contains("alias")));
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthConfig { seed: 8, ..small() };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = generate(&small()).unwrap();
        b.write_dir(dir.path()).unwrap();
        assert_eq!(CorpusBundle::read_dir(dir.path()).unwrap(), b);
    }

    #[test]
    fn rejects_impossible_sizes() {
        assert!(generate(&SynthConfig { passages: 10_000, ..small() }).is_err());
        assert!(generate(&SynthConfig { eval_queries: 100, ..small() }).is_err());
    }
}
