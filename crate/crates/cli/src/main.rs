use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lsr_core::model::{Mode, QueryStrategy};

mod commands;

/// Learned sparse retrieval: vocabulary, training, indexing and evaluation.
#[derive(Debug, Parser)]
#[command(name = "lsr", version)]
pub struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Experiment config (JSON). Training commands read its `model` and
    /// `train` sections, `bm25` commands its `bm25` section.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    LiteralOnly,
    ExpansionEnhanced,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::LiteralOnly => Mode::LiteralOnly,
            ModeArg::ExpansionEnhanced => Mode::ExpansionEnhanced,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    QueryTf,
    Symmetric,
    Asymmetric,
}

impl From<StrategyArg> for QueryStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::QueryTf => QueryStrategy::QueryTf,
            StrategyArg::Symmetric => QueryStrategy::Symmetric,
            StrategyArg::Asymmetric => QueryStrategy::Asymmetric,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Vocabulary construction.
    #[command(subcommand)]
    Vocab(VocabCmd),
    /// Model training.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Writes sparse representations as JSON lines.
    Represent {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// `id<TAB>text` file.
        #[arg(long)]
        input: PathBuf,
        /// Encode the input as queries instead of passages.
        #[arg(long)]
        queries: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learned sparse index.
    #[command(subcommand)]
    Index(IndexCmd),
    /// BM25 baseline index.
    #[command(subcommand)]
    Bm25(Bm25Cmd),
    /// Evaluation of run files.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Samples a smaller judged corpus pooled from BM25 results.
    MakeDevset {
        #[arg(long)]
        passages: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 100)]
        n_queries: usize,
        #[arg(long, default_value_t = 100)]
        top_n: usize,
        #[arg(long, default_value_t = 10_000)]
        size: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Builds training triples with BM25-mined and random negatives.
    MakeTriples {
        #[arg(long)]
        passages: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 2)]
        negatives: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shows which passage tokens activated an expanded term.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        passage: String,
        #[arg(long)]
        term: String,
        #[arg(long, default_value_t = lsr_core::eval::DEFAULT_TOP_N)]
        n: usize,
    },
    /// Runs the full comparison described by `--config`.
    Experiment {
        /// Where to write the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the generated lexical-mismatch corpus to a directory.
    Generate {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum VocabCmd {
    /// Builds a vocabulary from `id<TAB>text` files.
    Build {
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_freq: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum TrainCmd {
    /// Phase one: the gating tower on parallel pairs.
    Gating {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss curve CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Phase two: the ranking towers on triples, gate frozen.
    Joint {
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        /// Checkpoint with a trained gating tower.
        #[arg(long)]
        gating: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "expansion-enhanced")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "symmetric")]
        strategy: StrategyArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        curve: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexCmd {
    Build {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        passages: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Searches every query and writes a TREC run file.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum Bm25Cmd {
    Index {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        passages: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Scores a TREC run file against `qid<TAB>pid` qrels.
    Run {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        cutoffs: Vec<usize>,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA })
        }
    }
}
