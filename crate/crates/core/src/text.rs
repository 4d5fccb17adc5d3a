//! Tokenization, vocabulary construction and bag-of-words vectors.
//!
//! The tokenizer lowercases, replaces ASCII punctuation with whitespace and
//! splits on whitespace. Every id in the system lives on the axis defined by
//! a [`Vocabulary`], whose first four ids are reserved.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
/// Number of reserved ids at the front of every vocabulary.
pub const RESERVED: u32 = 4;

pub const DEFAULT_MAX_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit term list. Reserved tokens are
    /// prepended; duplicates and reserved names in `terms` are rejected.
    pub fn from_terms<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
        all.extend(terms.into_iter().map(Into::into));
        Self::from_full_list(all)
    }

    fn from_full_list(terms: Vec<String>) -> Result<Self> {
        let reserved = [PAD, UNK, CLS, SEP];
        if terms.len() <= RESERVED as usize {
            return Err(Error::EmptyCorpus);
        }
        for (i, r) in reserved.iter().enumerate() {
            if terms[i] != *r {
                return Err(Error::InvalidArgument(format!(
                    "vocabulary id {i} must be {r}, found `{}`",
                    terms[i]
                )));
            }
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary term `{t}`")));
            }
        }
        Ok(Vocabulary { terms, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// One term per line, line number = id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for t in &self.terms {
            writeln!(w, "{t}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(fs::File::open(path)?);
        let mut terms = Vec::new();
        for line in reader.lines() {
            terms.push(line?);
        }
        Self::from_full_list(terms).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })
    }
}

/// Lowercases, turns ASCII punctuation into separators and splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect::<String>()
        .to_lowercase();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Collects every normalized term with collection frequency `>= min_freq`,
/// ordered by frequency descending then lexicographically.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], min_freq: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let reserved = [PAD, UNK, CLS, SEP];
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in corpus {
        for tok in normalize(doc.as_ref()) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq.max(1) && !reserved.contains(&t.as_str()))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if kept.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Vocabulary::from_terms(kept.into_iter().map(|(t, _)| t))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    ids: Vec<u32>,
}

impl TokenSeq {
    /// Wraps raw ids. The first id must be `[CLS]`.
    pub fn from_ids(ids: Vec<u32>) -> Result<Self> {
        if ids.first() != Some(&CLS_ID) {
            return Err(Error::InvalidArgument("token sequence must start with [CLS]".into()));
        }
        Ok(TokenSeq { ids })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of word tokens, i.e. everything after `[CLS]`.
    pub fn word_count(&self) -> usize {
        self.ids.len().saturating_sub(1)
    }
}

pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSeq {
    let max_len = max_len.max(1);
    let mut ids = Vec::with_capacity(max_len.min(64));
    ids.push(CLS_ID);
    for tok in normalize(text) {
        if ids.len() >= max_len {
            break;
        }
        ids.push(vocab.id(&tok).unwrap_or(UNK_ID));
    }
    TokenSeq { ids }
}

/// Space-joined terms after `[CLS]`.
pub fn detokenize(seq: &TokenSeq, vocab: &Vocabulary) -> String {
    seq.ids[1..]
        .iter()
        .map(|&id| vocab.term(id).unwrap_or(UNK))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Binary bag of words: sorted distinct non-reserved ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BowVector {
    ids: Vec<u32>,
}

impl BowVector {
    pub fn from_ids(mut ids: Vec<u32>) -> Self {
        ids.retain(|&id| id >= RESERVED);
        ids.sort_unstable();
        ids.dedup();
        BowVector { ids }
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.ids.binary_search(&id).is_ok()
    }
}

pub fn bow(seq: &TokenSeq) -> BowVector {
    BowVector::from_ids(seq.ids.clone())
}

/// Term frequencies of non-reserved ids, sorted by id.
pub fn term_counts(seq: &TokenSeq) -> Vec<(u32, u32)> {
    let mut ids: Vec<u32> = seq.ids.iter().copied().filter(|&i| i >= RESERVED).collect();
    ids.sort_unstable();
    let mut out: Vec<(u32, u32)> = Vec::new();
    for id in ids {
        match out.last_mut() {
            Some((last, c)) if *last == id => *c += 1,
            _ => out.push((id, 1)),
        }
    }
    out
}

/// Reads a two-column TSV (`id<TAB>text`). Blank lines are skipped.
pub fn read_tsv_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let rows = read_tsv(path.as_ref(), 2)?;
    Ok(rows
        .into_iter()
        .map(|mut r| {
            let text = r.pop().unwrap_or_default();
            let id = r.pop().unwrap_or_default();
            (id, text)
        })
        .collect())
}

pub fn write_tsv_pairs(path: impl AsRef<Path>, rows: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (id, text) in rows {
        writeln!(w, "{id}\t{text}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a TSV with exactly `columns` fields per line.
pub(crate) fn read_tsv(path: &Path, columns: usize) -> Result<Vec<Vec<String>>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() != columns {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: n + 1,
                msg: format!("expected {columns} tab-separated fields, found {}", fields.len()),
            });
        }
        out.push(fields);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_vocab() -> Vocabulary {
        Vocabulary::from_terms(["weather", "in", "jamaica", "a", "b"]).unwrap()
    }

    #[test]
    fn build_vocab_orders_by_frequency_then_lexicographic() {
        let v = build_vocab(&["a b", "b c"], 1).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v.terms(), &["[PAD]", "[UNK]", "[CLS]", "[SEP]", "b", "a", "c"]);
        for (i, t) in v.terms().iter().enumerate() {
            assert_eq!(v.id(t), Some(i as u32));
        }
    }

    #[test]
    fn build_vocab_min_freq_filters() {
        let v = build_vocab(&["a b", "b c"], 2).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.term(4), Some("b"));
    }

    #[test]
    fn build_vocab_rejects_empty_corpus() {
        let empty: [&str; 0] = [];
        assert!(matches!(build_vocab(&empty, 1), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn tokenize_fixture_sentence() {
        let v = fixture_vocab();
        let seq = tokenize("Weather in Jamaica", &v, 64);
        let expect = vec![CLS_ID, v.id("weather").unwrap(), v.id("in").unwrap(), v.id("jamaica").unwrap()];
        assert_eq!(seq.ids(), expect.as_slice());
    }

    #[test]
    fn tokenize_empty_and_unknown() {
        let v = fixture_vocab();
        assert_eq!(tokenize("", &v, 64).ids(), &[CLS_ID]);
        assert_eq!(tokenize("zzzz", &v, 64).ids(), &[CLS_ID, UNK_ID]);
    }

    #[test]
    fn tokenize_truncates_including_cls() {
        let v = fixture_vocab();
        let seq = tokenize("a b a b a b", &v, 3);
        assert_eq!(seq.len(), 3);
        assert_eq!(seq.ids()[0], CLS_ID);
    }

    #[test]
    fn tokenize_strips_punctuation() {
        let v = fixture_vocab();
        let seq = tokenize("Weather, in... JAMAICA!", &v, 64);
        assert_eq!(seq.len(), 4);
        assert!(!seq.ids().contains(&UNK_ID));
    }

    #[test]
    fn bow_examples() {
        let a = 4;
        let b = 5;
        let s = TokenSeq::from_ids(vec![CLS_ID, a, b, a]).unwrap();
        assert_eq!(bow(&s).ids(), &[a, b]);
        let s = TokenSeq::from_ids(vec![CLS_ID]).unwrap();
        assert!(bow(&s).is_empty());
        let s = TokenSeq::from_ids(vec![CLS_ID, UNK_ID, b]).unwrap();
        assert_eq!(bow(&s).ids(), &[b]);
    }

    #[test]
    fn term_counts_aggregates() {
        let s = TokenSeq::from_ids(vec![CLS_ID, 5, 4, 5, UNK_ID]).unwrap();
        assert_eq!(term_counts(&s), vec![(4, 1), (5, 2)]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = fixture_vocab();
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }
}
