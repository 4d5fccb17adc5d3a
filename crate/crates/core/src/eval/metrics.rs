use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::index::ScoredHit;
use crate::text::read_tsv;

/// Relevant ids per query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, qid: impl Into<String>, pid: impl Into<String>) {
        self.map.entry(qid.into()).or_default().insert(pid.into());
    }

    pub fn relevant(&self, qid: &str) -> Option<&BTreeSet<String>> {
        self.map.get(qid)
    }

    pub fn is_relevant(&self, qid: &str, pid: &str) -> bool {
        self.map.get(qid).is_some_and(|s| s.contains(pid))
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `qid<TAB>pid` per line.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut q = Qrels::new();
        for mut row in read_tsv(path.as_ref(), 2)? {
            let pid = row.pop().unwrap_or_default();
            let qid = row.pop().unwrap_or_default();
            q.add(qid, pid);
        }
        Ok(q)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for (qid, pids) in &self.map {
            for pid in pids {
                writeln!(w, "{qid}\t{pid}")?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl<Q: Into<String>, P: Into<String>> FromIterator<(Q, P)> for Qrels {
    fn from_iter<I: IntoIterator<Item = (Q, P)>>(iter: I) -> Self {
        let mut q = Qrels::new();
        for (a, b) in iter {
            q.add(a, b);
        }
        q
    }
}

/// Ranked `(doc id, score)` lists per query, best first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    runs: BTreeMap<String, Vec<(String, f64)>>,
}

impl RunFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a ranking; scores must be non-increasing.
    pub fn insert(&mut self, qid: impl Into<String>, ranked: Vec<(String, f64)>) -> Result<()> {
        if ranked.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(Error::InvalidArgument("run scores must be non-increasing".into()));
        }
        self.runs.insert(qid.into(), ranked);
        Ok(())
    }

    pub fn insert_hits(&mut self, qid: impl Into<String>, hits: Vec<ScoredHit>) -> Result<()> {
        self.insert(qid, hits.into_iter().map(|h| (h.id, h.score)).collect())
    }

    pub fn ranking(&self, qid: &str) -> Option<&[(String, f64)]> {
        self.runs.get(qid).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.runs.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    /// The rankings of the queries judged in `qrels`.
    pub fn restricted_to(&self, qrels: &Qrels) -> RunFile {
        RunFile {
            runs: self
                .runs
                .iter()
                .filter(|(q, _)| qrels.relevant(q).is_some())
                .map(|(q, r)| (q.clone(), r.clone()))
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// TREC format: `qid Q0 docid rank score tag`.
    pub fn write_trec(&self, path: impl AsRef<Path>, tag: &str) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for (qid, ranked) in &self.runs {
            for (i, (doc, score)) in ranked.iter().enumerate() {
                writeln!(w, "{qid} Q0 {doc} {} {score} {tag}", i + 1)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_trec(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };
        let mut rows: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(parse_err(i + 1, format!("expected 6 columns, found {}", f.len())));
            }
            let rank: usize = f[3].parse().map_err(|_| parse_err(i + 1, format!("bad rank `{}`", f[3])))?;
            let score: f64 = f[4].parse().map_err(|_| parse_err(i + 1, format!("bad score `{}`", f[4])))?;
            rows.entry(f[0].to_string()).or_default().push((rank, f[2].to_string(), score));
        }
        let mut run = RunFile::new();
        for (qid, mut list) in rows {
            list.sort_by_key(|r| r.0);
            if list.iter().enumerate().any(|(i, r)| r.0 != i + 1) {
                return Err(Error::InvalidArgument(format!("ranks for query {qid} are not contiguous from 1")));
            }
            run.insert(qid, list.into_iter().map(|r| (r.1, r.2)).collect())?;
        }
        Ok(run)
    }
}

/// Run queries that have no judgments; they are left out of every metric.
pub fn unjudged_queries(run: &RunFile, qrels: &Qrels) -> usize {
    run.queries().filter(|q| qrels.relevant(q).is_none()).count()
}

fn mean_over_qrels(run: &RunFile, qrels: &Qrels, k: usize, per_query: impl Fn(&[(String, f64)], &BTreeSet<String>) -> f64) -> f64 {
    assert!(k >= 1, "cutoff must be at least 1");
    let skipped = unjudged_queries(run, qrels);
    if skipped > 0 {
        warn!("{skipped} run queries have no relevance judgments and were skipped");
    }
    if qrels.is_empty() {
        return 0.0;
    }
    let total: f64 = qrels
        .map
        .iter()
        .map(|(qid, rel)| {
            let ranked = run.ranking(qid).unwrap_or(&[]);
            per_query(&ranked[..ranked.len().min(k)], rel)
        })
        .sum();
    total / qrels.len() as f64
}

/// Mean reciprocal rank of the first relevant hit within the top `k`,
/// averaged over all judged queries.
pub fn mrr_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> f64 {
    mean_over_qrels(run, qrels, k, |top, rel| {
        top.iter()
            .position(|(d, _)| rel.contains(d))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64)
    })
}

/// Mean fraction of relevant ids found in the top `k`.
pub fn recall_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> f64 {
    mean_over_qrels(run, qrels, k, |top, rel| {
        let found = top.iter().filter(|(d, _)| rel.contains(d)).count();
        found as f64 / rel.len() as f64
    })
}
