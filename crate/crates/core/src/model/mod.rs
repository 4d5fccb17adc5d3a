//! The sparse representation model: an importance tower, an optional gating
//! tower, and an optional independent query tower.
//!
//! A passage representation is the importance vector masked by a gate and
//! capped to the largest `lambda_cap` weights. Queries are represented by raw
//! term frequencies, by the passage tower itself, or by a separate tower.

mod gate;
mod sparse;
mod tower;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use gate::{expansion_gate, gate_distribution, literal_gate, GateSplit, GateVector, GatingParams, DEFAULT_THRESHOLD};
pub use sparse::{default_lambda_cap, sparse_rep, SparseVector};
pub use tower::{encode, passage_importance, EncoderParams, ImportanceHead, LayerParams, Tower, TowerCache, TowerDims};

use crate::error::{Error, Result};
use crate::numerics::checkpoint::{load_tensors, save_tensors};
use crate::numerics::Matrix;
use crate::text::{bow, term_counts, BowVector, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LiteralOnly,
    ExpansionEnhanced,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::LiteralOnly => "literal-only",
            Mode::ExpansionEnhanced => "expansion-enhanced",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal-only" | "literal" => Ok(Mode::LiteralOnly),
            "expansion-enhanced" | "expansion" => Ok(Mode::ExpansionEnhanced),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryStrategy {
    QueryTf,
    Symmetric,
    Asymmetric,
}

impl QueryStrategy {
    pub const ALL: [QueryStrategy; 3] = [QueryStrategy::QueryTf, QueryStrategy::Symmetric, QueryStrategy::Asymmetric];

    pub fn as_str(&self) -> &'static str {
        match self {
            QueryStrategy::QueryTf => "query-tf",
            QueryStrategy::Symmetric => "symmetric",
            QueryStrategy::Asymmetric => "asymmetric",
        }
    }
}

impl fmt::Display for QueryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "query-tf" | "tf" => Ok(QueryStrategy::QueryTf),
            "symmetric" => Ok(QueryStrategy::Symmetric),
            "asymmetric" => Ok(QueryStrategy::Asymmetric),
            other => Err(Error::UnknownStrategy(other.to_string())),
        }
    }
}

/// Hyper-parameters of a model; serialized as the checkpoint sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub v: usize,
    pub threshold: f64,
    /// `None` selects [`default_lambda_cap`] per passage.
    pub lambda_cap: Option<usize>,
    pub strategy: QueryStrategy,
    pub mode: Mode,
    /// Whether `[CLS]`/`[SEP]` positions contribute to the summed importance.
    #[serde(default = "default_true")]
    pub include_special: bool,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn new(v: usize) -> Self {
        ModelConfig {
            d: 32,
            n_layers: 2,
            d_ff: 64,
            max_len: crate::text::DEFAULT_MAX_LEN,
            v,
            threshold: DEFAULT_THRESHOLD,
            lambda_cap: None,
            strategy: QueryStrategy::Symmetric,
            mode: Mode::ExpansionEnhanced,
            include_special: true,
        }
    }

    pub fn dims(&self) -> TowerDims {
        TowerDims {
            vocab_size: self.v,
            d: self.d,
            d_ff: self.d_ff,
            n_layers: self.n_layers,
            max_len: self.max_len,
        }
    }

    pub fn cap_for(&self, bow_len: usize) -> usize {
        self.lambda_cap.unwrap_or_else(|| default_lambda_cap(bow_len))
    }
}

/// Everything the importance and gating computations produced for one passage.
#[derive(Debug, Clone)]
pub struct PassageParts {
    pub importance: Vec<f64>,
    pub bow: BowVector,
    pub gate: GateVector,
    pub expansion: GateVector,
    pub rep: SparseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub importance: Tower,
    pub gating: Option<GatingParams>,
    pub query: Option<Tower>,
}

impl ModelParams {
    /// Fresh parameters. A gating tower is created for expansion-enhanced
    /// models and a query tower for the asymmetric strategy.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        if !(config.threshold > 0.0 && config.threshold < 1.0) {
            return Err(Error::InvalidArgument("threshold must lie in (0, 1)".into()));
        }
        let dims = config.dims();
        let importance = Tower::init(&dims, rng)?;
        let gating = match config.mode {
            Mode::ExpansionEnhanced => Some(GatingParams {
                tower: Tower::init(&dims, rng)?,
                threshold: config.threshold,
            }),
            Mode::LiteralOnly => None,
        };
        let query = match config.strategy {
            QueryStrategy::Asymmetric => Some(Tower::init(&dims, rng)?),
            _ => None,
        };
        Ok(ModelParams {
            config,
            importance,
            gating,
            query,
        })
    }

    /// The tower that encodes queries under the configured strategy.
    pub fn query_tower(&self) -> Option<&Tower> {
        match self.config.strategy {
            QueryStrategy::QueryTf => None,
            QueryStrategy::Symmetric => Some(&self.importance),
            QueryStrategy::Asymmetric => self.query.as_ref(),
        }
    }

    pub fn gate_for(&self, seq: &TokenSeq, b: &BowVector, mode: Mode) -> Result<GateSplit> {
        match mode {
            Mode::LiteralOnly => Ok(GateSplit {
                expansion: GateVector::default(),
                combined: literal_gate(b),
            }),
            Mode::ExpansionEnhanced => {
                let g = self
                    .gating
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("expansion-enhanced mode needs a gating tower".into()))?;
                let dist = gate_distribution(seq, g, self.config.include_special)?;
                expansion_gate(&dist, b, g.threshold)
            }
        }
    }

    pub fn passage_parts(&self, seq: &TokenSeq, mode: Mode, lambda_cap: Option<usize>) -> Result<PassageParts> {
        let b = bow(seq);
        let split = self.gate_for(seq, &b, mode)?;
        let importance = self.importance.importance(seq, self.config.include_special)?;
        let cap = lambda_cap.unwrap_or_else(|| self.config.cap_for(b.len()));
        let rep = sparse_rep(&importance, &split.combined, cap);
        Ok(PassageParts {
            importance,
            bow: b,
            gate: split.combined,
            expansion: split.expansion,
            rep,
        })
    }

    pub fn represent_passage(&self, seq: &TokenSeq, mode: Mode, lambda_cap: Option<usize>) -> Result<SparseVector> {
        Ok(self.passage_parts(seq, mode, lambda_cap)?.rep)
    }

    pub fn represent_query(&self, seq: &TokenSeq, strategy: QueryStrategy) -> Result<SparseVector> {
        match strategy {
            QueryStrategy::QueryTf => Ok(query_tf(seq)),
            QueryStrategy::Symmetric => self.represent_with_tower(&self.importance, seq),
            QueryStrategy::Asymmetric => {
                let tower = self
                    .query
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("asymmetric strategy needs a query tower".into()))?;
                self.represent_with_tower(tower, seq)
            }
        }
    }

    fn represent_with_tower(&self, tower: &Tower, seq: &TokenSeq) -> Result<SparseVector> {
        let b = bow(seq);
        let importance = tower.importance(seq, self.config.include_special)?;
        Ok(sparse_rep(&importance, &literal_gate(&b), self.config.cap_for(b.len())))
    }

    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = self.importance.named_tensors();
        if let Some(g) = &self.gating {
            out.extend(g.tower.named_tensors().into_iter().map(|(n, m)| (format!("gate.{n}"), m)));
        }
        if let Some(q) = &self.query {
            out.extend(q.named_tensors().into_iter().map(|(n, m)| (format!("qenc.{n}"), m)));
        }
        out
    }

    /// Writes `path` (tensors) and `path.json` (config sidecar).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        save_tensors(path, &self.named_tensors())?;
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.config)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let config: ModelConfig = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let dims = config.dims();
        dims.validate()?;
        let mut all: HashMap<String, Matrix> = load_tensors(path)?.into_iter().collect();
        let mut take_prefixed = |prefix: &str| -> HashMap<String, Matrix> {
            let keys: Vec<String> = all.keys().filter(|k| k.starts_with(prefix)).cloned().collect();
            keys.into_iter()
                .map(|k| {
                    let m = all.remove(&k).expect("key listed above");
                    (k[prefix.len()..].to_string(), m)
                })
                .collect()
        };
        let mut gate_t = take_prefixed("gate.");
        let mut query_t = take_prefixed("qenc.");
        let gating = if gate_t.is_empty() {
            None
        } else {
            Some(GatingParams {
                tower: Tower::from_named(&mut gate_t, &dims)?,
                threshold: config.threshold,
            })
        };
        let query = if query_t.is_empty() {
            None
        } else {
            Some(Tower::from_named(&mut query_t, &dims)?)
        };
        let importance = Tower::from_named(&mut all, &dims)?;
        if let Some(extra) = all.keys().next() {
            return Err(Error::BadCheckpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(ModelParams {
            config,
            importance,
            gating,
            query,
        })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Raw term-frequency query vector over non-reserved terms.
pub fn query_tf(seq: &TokenSeq) -> SparseVector {
    SparseVector::from_unsorted(term_counts(seq).into_iter().map(|(t, c)| (t, c as f64)).collect())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::text::{tokenize, Vocabulary};

    fn small_config(mode: Mode, strategy: QueryStrategy) -> ModelConfig {
        ModelConfig {
            d: 8,
            n_layers: 1,
            d_ff: 8,
            max_len: 16,
            mode,
            strategy,
            ..ModelConfig::new(20)
        }
    }

    fn vocab() -> Vocabulary {
        Vocabulary::from_terms((0..16).map(|i| format!("w{i}"))).unwrap()
    }

    #[test]
    fn query_tf_counts() {
        let v = Vocabulary::from_terms(["hot", "day"]).unwrap();
        let q = query_tf(&tokenize("hot hot day", &v, 16));
        assert_eq!(q.entries(), &[(v.id("hot").unwrap(), 2.0), (v.id("day").unwrap(), 1.0)]);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("asymmetric".parse::<QueryStrategy>().unwrap(), QueryStrategy::Asymmetric);
        assert!(matches!("dense".parse::<QueryStrategy>(), Err(Error::UnknownStrategy(_))));
    }

    #[test]
    fn symmetric_shares_the_passage_tower() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ModelParams::init(small_config(Mode::LiteralOnly, QueryStrategy::Symmetric), &mut rng).unwrap();
        assert!(std::ptr::eq(m.query_tower().unwrap(), &m.importance));
    }

    #[test]
    fn asymmetric_towers_are_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ModelParams::init(small_config(Mode::LiteralOnly, QueryStrategy::Asymmetric), &mut rng).unwrap();
        let q = m.query_tower().unwrap();
        assert!(!std::ptr::eq(q, &m.importance));
        assert!(!std::ptr::eq(q.encoder.embedding.data().as_ptr(), m.importance.encoder.embedding.data().as_ptr()));
        assert_ne!(q.encoder.embedding, m.importance.encoder.embedding);
    }

    #[test]
    fn literal_support_is_within_bow() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ModelParams::init(small_config(Mode::ExpansionEnhanced, QueryStrategy::Symmetric), &mut rng).unwrap();
        let v = vocab();
        let seq = tokenize("w1 w2 w3 w1 w9", &v, 16);
        let b = bow(&seq);
        let lit = m.represent_passage(&seq, Mode::LiteralOnly, None).unwrap();
        assert!(lit.support().all(|t| b.contains(t)));
        let parts = m.passage_parts(&seq, Mode::ExpansionEnhanced, Some(usize::MAX)).unwrap();
        let g = gate_distribution(&seq, m.gating.as_ref().unwrap(), true).unwrap();
        assert!(parts.rep.support().all(|t| b.contains(t) || g[t as usize] >= 0.7));
        let lit_inf = m.represent_passage(&seq, Mode::LiteralOnly, Some(usize::MAX)).unwrap();
        assert!(lit_inf.support().all(|t| parts.rep.get(t).is_some()));
    }

    #[test]
    fn expansion_mode_requires_gating() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = ModelParams::init(small_config(Mode::LiteralOnly, QueryStrategy::Symmetric), &mut rng).unwrap();
        let seq = tokenize("w1", &vocab(), 16);
        assert!(m.represent_passage(&seq, Mode::ExpansionEnhanced, None).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sptm");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = ModelParams::init(small_config(Mode::ExpansionEnhanced, QueryStrategy::Asymmetric), &mut rng).unwrap();
        m.save(&path).unwrap();
        let back = ModelParams::load(&path).unwrap();
        assert_eq!(back, m);
        let names: Vec<String> = m.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert!(names.iter().any(|n| n.starts_with("enc.")));
        assert!(names.iter().any(|n| n.starts_with("imp.")));
        assert!(names.iter().any(|n| n.starts_with("gate.")));
        assert!(names.iter().any(|n| n.starts_with("qenc.")));
    }
}
