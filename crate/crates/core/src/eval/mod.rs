//! Metrics, document ranking, expansion attribution and experiment runs.

mod devset;
mod experiment;
mod explain;
mod metrics;
mod prm;
mod synth;

pub use devset::{make_devset, make_triples, Devset, DevsetSpec};
pub use experiment::{
    run_experiment, strategy_system, CorpusStats, DataSource, ExperimentConfig, ExperimentReport, ExperimentResults,
    Metrics, ModelShape, SystemResult, BM25, EXPANSION_ENHANCED, LITERAL_ONLY, TF,
};
pub use explain::{explain_expansion, AttributionReport, Contribution, DEFAULT_TOP_N};
pub use metrics::{mrr_at_k, recall_at_k, unjudged_queries, Qrels, RunFile};
pub use prm::{passage_retrieval_max, split_windows, ModelEncoder, SparseEncoder, TfEncoder, DEFAULT_STRIDE, DEFAULT_WINDOW};
pub use synth::{alias_word, entity_word, generate, CorpusBundle, SynthConfig};
