use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{read_tsv, tokenize, Vocabulary};

/// One ranking instance: the positive passage is more relevant than the negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTriple {
    pub query: String,
    pub positive: String,
    pub negative: String,
}

/// Which expansion target a parallel pair teaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionKind {
    /// Terms that tend to appear in queries for the passage.
    Passage2Query,
    /// Terms that appear in summaries or tags of the passage.
    Summarization,
}

impl fmt::Display for ExpansionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpansionKind::Passage2Query => "passage2query",
            ExpansionKind::Summarization => "summarization",
        })
    }
}

impl FromStr for ExpansionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "passage2query" => Ok(ExpansionKind::Passage2Query),
            "summarization" => Ok(ExpansionKind::Summarization),
            other => Err(Error::InvalidArgument(format!("unknown expansion kind `{other}`"))),
        }
    }
}

/// A passage and a target text whose terms the gate should learn to activate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub passage: String,
    pub target: String,
    pub kind: ExpansionKind,
}

impl TrainingTriple {
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        for (name, text) in [("query", &self.query), ("positive", &self.positive), ("negative", &self.negative)] {
            if tokenize(text, vocab, usize::MAX).word_count() == 0 {
                return Err(Error::InvalidArgument(format!("triple has an empty {name}")));
            }
        }
        Ok(())
    }
}

impl ParallelPair {
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if tokenize(&self.target, vocab, usize::MAX).word_count() == 0 {
            return Err(Error::InvalidArgument("parallel pair has an empty target".into()));
        }
        Ok(())
    }
}

/// `query<TAB>positive<TAB>negative`
pub fn read_triples(path: impl AsRef<Path>) -> Result<Vec<TrainingTriple>> {
    Ok(read_tsv(path.as_ref(), 3)?
        .into_iter()
        .map(|mut r| {
            let negative = r.pop().unwrap_or_default();
            let positive = r.pop().unwrap_or_default();
            let query = r.pop().unwrap_or_default();
            TrainingTriple {
                query,
                positive,
                negative,
            }
        })
        .collect())
}

pub fn write_triples(path: impl AsRef<Path>, triples: &[TrainingTriple]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for t in triples {
        writeln!(w, "{}\t{}\t{}", t.query, t.positive, t.negative)?;
    }
    w.flush()?;
    Ok(())
}

/// `passage<TAB>target_text<TAB>kind`
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<ParallelPair>> {
    let path = path.as_ref();
    read_tsv(path, 3)?
        .into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            let kind = r.pop().unwrap_or_default();
            let target = r.pop().unwrap_or_default();
            let passage = r.pop().unwrap_or_default();
            let kind = kind.parse().map_err(|e: Error| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            Ok(ParallelPair { passage, target, kind })
        })
        .collect()
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[ParallelPair]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.passage, p.target, p.kind)?;
    }
    w.flush()?;
    Ok(())
}
