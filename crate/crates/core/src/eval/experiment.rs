//! End-to-end runs: data, vocabulary, training, indexing, search and metrics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::devset::make_triples;
use super::metrics::{mrr_at_k, recall_at_k, Qrels, RunFile};
use super::prm::{ModelEncoder, SparseEncoder, TfEncoder};
use super::synth::{generate, CorpusBundle, SynthConfig};
use crate::error::{Error, Result};
use crate::index::{bm25_index, bm25_search, build_index, Bm25Params};
use crate::model::{GatingParams, Mode, ModelConfig, ModelParams, QueryStrategy};
use crate::text::{build_vocab, tokenize, Vocabulary};
use crate::training::{train_gating, train_joint, LossCurve, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SynthConfig),
    /// A corpus directory as written by [`CorpusBundle::write_dir`].
    Dir(PathBuf),
}

/// Model shape shared by every trained system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub d: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub threshold: f64,
    pub lambda_cap: Option<usize>,
    pub include_special: bool,
}

impl Default for ModelShape {
    fn default() -> Self {
        let c = ModelConfig::new(0);
        ModelShape {
            d: c.d,
            n_layers: c.n_layers,
            d_ff: c.d_ff,
            max_len: c.max_len,
            threshold: c.threshold,
            lambda_cap: c.lambda_cap,
            include_special: c.include_special,
        }
    }
}

impl ModelShape {
    pub fn config(&self, v: usize, mode: Mode, strategy: QueryStrategy) -> ModelConfig {
        ModelConfig {
            d: self.d,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            max_len: self.max_len,
            v,
            threshold: self.threshold,
            lambda_cap: self.lambda_cap,
            strategy,
            mode,
            include_special: self.include_special,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub model: ModelShape,
    pub train: TrainConfig,
    pub min_freq: usize,
    /// Training triples per query; half BM25-mined, half random.
    pub negatives_per_query: usize,
    pub bm25: Bm25Params,
    pub cutoffs: Vec<usize>,
    /// Also train the query-tf and asymmetric strategies.
    pub compare_strategies: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            data: DataSource::Synthetic(SynthConfig::default()),
            model: ModelShape::default(),
            train: TrainConfig::default(),
            min_freq: 1,
            negatives_per_query: 2,
            bm25: Bm25Params::default(),
            cutoffs: vec![10, 100, 1000],
            compare_strategies: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr_at_10: f64,
    /// Recall at each configured cutoff.
    pub recall: BTreeMap<usize, f64>,
}

impl Metrics {
    pub fn compute(run: &RunFile, qrels: &Qrels, cutoffs: &[usize]) -> Self {
        Metrics {
            mrr_at_10: mrr_at_k(run, qrels, 10),
            recall: cutoffs.iter().map(|&k| (k, recall_at_k(run, qrels, k))).collect(),
        }
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.get(&k).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub name: String,
    pub mode: Option<Mode>,
    pub strategy: Option<QueryStrategy>,
    pub metrics: Metrics,
    /// Metrics over the mismatched queries only, when the corpus marks them.
    pub mismatched: Option<Metrics>,
    pub mean_passage_nnz: f64,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub passages: usize,
    pub queries: usize,
    pub mismatched_queries: usize,
    pub vocab_size: usize,
    pub triples: usize,
    pub pairs: usize,
}

/// Everything that depends only on the config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub config_hash: String,
    pub seed: u64,
    pub corpus: CorpusStats,
    pub gating_final_loss: Option<f64>,
    pub systems: Vec<SystemResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub results: ExperimentResults,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn system(&self, name: &str) -> Option<&SystemResult> {
        self.results.systems.iter().find(|s| s.name == name)
    }

    /// JSON of the results without timing.
    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&self.results).expect("report serializes")
    }

    /// Table with metrics scaled by 100.
    pub fn to_table(&self) -> String {
        let cutoffs: Vec<usize> = self
            .results
            .systems
            .first()
            .map(|s| s.metrics.recall.keys().copied().collect())
            .unwrap_or_default();
        let mut out = format!("{:<32} {:>8}", "system", "MRR@10");
        for k in &cutoffs {
            out.push_str(&format!(" {:>10}", format!("R@{k}")));
        }
        out.push('\n');
        for s in &self.results.systems {
            out.push_str(&format!("{:<32} {:>8.2}", s.name, 100.0 * s.metrics.mrr_at_10));
            for k in &cutoffs {
                out.push_str(&format!(" {:>10.2}", 100.0 * s.metrics.recall_at(*k).unwrap_or(0.0)));
            }
            out.push('\n');
        }
        out.push_str(&format!("wall clock {:.1}s\n", self.wall_clock_secs));
        out
    }
}

pub const BM25: &str = "bm25";
pub const TF: &str = "tf";
pub const LITERAL_ONLY: &str = "literal-only";
pub const EXPANSION_ENHANCED: &str = "expansion-enhanced";

pub fn strategy_system(strategy: QueryStrategy) -> String {
    format!("strategy/{strategy}")
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

struct Evaluation<'a> {
    bundle: &'a CorpusBundle,
    vocab: &'a Vocabulary,
    cutoffs: &'a [usize],
    mismatched_qrels: Option<Qrels>,
}

impl Evaluation<'_> {
    fn depth(&self) -> usize {
        self.cutoffs.iter().copied().max().unwrap_or(10).max(10)
    }

    fn metrics(&self, run: &RunFile) -> (Metrics, Option<Metrics>) {
        let qrels = &self.bundle.qrels;
        (
            Metrics::compute(run, qrels, self.cutoffs),
            self.mismatched_qrels
                .as_ref()
                .map(|m| Metrics::compute(&run.restricted_to(m), m, self.cutoffs)),
        )
    }

    /// Represents every passage, indexes them and searches every query.
    fn run_encoder(&self, encoder: &dyn SparseEncoder, max_len: usize) -> Result<(RunFile, f64)> {
        let reps = stage(
            "represent",
            self.bundle
                .passages
                .par_iter()
                .map(|(id, text)| Ok((id.clone(), encoder.encode_passage(&tokenize(text, self.vocab, max_len))?)))
                .collect::<Result<Vec<_>>>(),
        )?;
        let nnz = reps.iter().map(|r| r.1.nnz()).sum::<usize>() as f64 / reps.len().max(1) as f64;
        let index = stage("index", build_index(reps, self.vocab.len()))?;
        let depth = self.depth();
        let ranked = stage(
            "search",
            self.bundle
                .queries
                .par_iter()
                .map(|(qid, text)| {
                    let q = encoder.encode_query(&tokenize(text, self.vocab, max_len))?;
                    Ok((qid.clone(), index.search(&q, depth)))
                })
                .collect::<Result<Vec<_>>>(),
        )?;
        let mut run = RunFile::new();
        for (qid, hits) in ranked {
            run.insert_hits(qid, hits)?;
        }
        Ok((run, nnz))
    }

    fn system(
        &self,
        name: String,
        params: Option<&ModelParams>,
        run: &RunFile,
        nnz: f64,
        curve: Option<&LossCurve>,
    ) -> SystemResult {
        let (metrics, mismatched) = self.metrics(run);
        info!("{name}: MRR@10 {:.4}", metrics.mrr_at_10);
        SystemResult {
            name,
            mode: params.map(|p| p.config.mode),
            strategy: params.map(|p| p.config.strategy),
            metrics,
            mismatched,
            mean_passage_nnz: nnz,
            final_loss: curve.and_then(|c| c.tail_mean(50)),
        }
    }
}

/// Runs every system of the experiment and collects a report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let bundle = stage(
        "data",
        match &cfg.data {
            DataSource::Synthetic(s) => generate(s),
            DataSource::Dir(d) => CorpusBundle::read_dir(d),
        },
    )?;
    if bundle.queries.is_empty() || bundle.train_queries.is_empty() {
        return Err(Error::EmptyInput("experiment needs evaluation and training queries").at_stage("data"));
    }

    let vocab = stage("vocab", {
        let mut texts: Vec<&str> = bundle.passages.iter().map(|p| p.1.as_str()).collect();
        texts.extend(bundle.queries.iter().map(|q| q.1.as_str()));
        texts.extend(bundle.train_queries.iter().map(|q| q.1.as_str()));
        texts.extend(bundle.pairs.iter().map(|p| p.target.as_str()));
        build_vocab(&texts, cfg.min_freq)
    })?;
    let v = vocab.len();

    let bm25_idx = stage("bm25", bm25_index(&bundle.passages, &vocab))?;
    let triples = stage(
        "triples",
        make_triples(
            &bundle.train_queries,
            &bundle.train_qrels,
            &bundle.passages,
            &bm25_idx,
            &vocab,
            cfg.negatives_per_query,
            cfg.seed,
        ),
    )?;
    info!("{} passages, {} triples, {} pairs, vocabulary {v}", bundle.passages.len(), triples.len(), bundle.pairs.len());

    let mismatched_qrels = (!bundle.mismatched.is_empty()).then(|| {
        bundle
            .mismatched
            .iter()
            .filter_map(|q| bundle.qrels.relevant(q).map(|r| (q, r)))
            .flat_map(|(q, r)| r.iter().map(move |p| (q.clone(), p.clone())))
            .collect::<Qrels>()
    });
    let eval = Evaluation {
        bundle: &bundle,
        vocab: &vocab,
        cutoffs: &cfg.cutoffs,
        mismatched_qrels,
    };
    let mut systems = Vec::new();

    // bag-of-words baselines
    let bm25_run = stage("bm25", {
        let depth = eval.depth();
        let ranked = bundle
            .queries
            .par_iter()
            .map(|(qid, text)| {
                bm25_search(&bm25_idx, &tokenize(text, &vocab, usize::MAX), depth, cfg.bm25).map(|h| (qid.clone(), h))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut run = RunFile::new();
        for (qid, hits) in ranked {
            run.insert_hits(qid, hits)?;
        }
        Ok(run)
    })?;
    systems.push(eval.system(BM25.into(), None, &bm25_run, f64::NAN, None));
    let (tf_run, tf_nnz) = eval.run_encoder(&TfEncoder, usize::MAX)?;
    systems.push(eval.system(TF.into(), None, &tf_run, tf_nnz, None));

    let init = |mode: Mode, strategy: QueryStrategy| -> Result<ModelParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        ModelParams::init(cfg.model.config(v, mode, strategy), &mut rng)
    };
    let train = TrainConfig {
        seed: cfg.seed,
        threshold: cfg.model.threshold,
        ..cfg.train.clone()
    };

    // phase one, shared by every expansion-enhanced system
    let fresh = stage("init", init(Mode::ExpansionEnhanced, QueryStrategy::Symmetric))?;
    let gating_init = fresh.gating.clone().expect("expansion mode has a gating tower");
    let gating = stage(
        "train-gating",
        train_gating(&bundle.pairs, &vocab, &train, gating_init, cfg.model.include_special),
    )?;
    let gating_final_loss = gating.curve.tail_mean(50);
    let trained_gate: GatingParams = gating.params;

    let mut variants = vec![(LITERAL_ONLY.to_string(), Mode::LiteralOnly, QueryStrategy::Symmetric)];
    variants.push((EXPANSION_ENHANCED.to_string(), Mode::ExpansionEnhanced, QueryStrategy::Symmetric));
    if cfg.compare_strategies {
        for s in [QueryStrategy::QueryTf, QueryStrategy::Asymmetric] {
            variants.push((strategy_system(s), Mode::ExpansionEnhanced, s));
        }
    }
    for (name, mode, strategy) in variants {
        let mut params = stage("init", init(mode, strategy))?;
        if mode == Mode::ExpansionEnhanced {
            params.gating = Some(trained_gate.clone());
        }
        let out = stage("train-joint", train_joint(&triples, &bundle.pairs, &vocab, &train, params))?;
        let (run, nnz) = eval.run_encoder(&ModelEncoder::new(&out.params), cfg.model.max_len)?;
        let result = eval.system(name.clone(), Some(&out.params), &run, nnz, Some(&out.curve));
        if cfg.compare_strategies && name == EXPANSION_ENHANCED {
            let mut alias = result.clone();
            alias.name = strategy_system(QueryStrategy::Symmetric);
            systems.push(result);
            systems.push(alias);
        } else {
            systems.push(result);
        }
    }

    Ok(ExperimentReport {
        results: ExperimentResults {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            corpus: CorpusStats {
                passages: bundle.passages.len(),
                queries: bundle.queries.len(),
                mismatched_queries: bundle.mismatched.len(),
                vocab_size: v,
                triples: triples.len(),
                pairs: bundle.pairs.len(),
            },
            gating_final_loss,
            systems,
        },
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}
