use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use lsr_core::eval::{
    explain_expansion, generate, make_devset, make_triples, mrr_at_k, recall_at_k, run_experiment, unjudged_queries,
    DataSource, DevsetSpec, ExperimentConfig, ModelEncoder, Qrels, RunFile, SparseEncoder,
};
use lsr_core::index::{bm25_index, bm25_search, build_index, load_index, save_index, Bm25Params};
use lsr_core::model::{Mode, ModelParams, QueryStrategy};
use lsr_core::text::{build_vocab, read_tsv_pairs, tokenize, write_tsv_pairs, Vocabulary};
use lsr_core::training::{read_pairs, read_triples, train_gating, train_joint, write_triples, TrainConfig};
use lsr_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Bm25Cmd, Cli, Command, EvalCmd, IndexCmd, TrainCmd, VocabCmd};

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.train.seed = cfg.seed;
    cfg.train.threshold = cfg.model.threshold;
    Ok(cfg)
}

fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    cfg.train.clone()
}

fn write_run(path: &Path, run: &RunFile, tag: &str) -> Result<()> {
    run.write_trec(path, tag)?;
    info!("wrote {} queries to {}", run.len(), path.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::Vocab(VocabCmd::Build { corpus, min_freq, out }) => {
            let mut texts = Vec::new();
            for path in corpus {
                texts.extend(read_tsv_pairs(path)?.into_iter().map(|r| r.1));
            }
            let vocab = build_vocab(&texts, *min_freq)?;
            vocab.save(out)?;
            info!("vocabulary of {} terms written to {}", vocab.len(), out.display());
        }
        Command::Train(TrainCmd::Gating { pairs, vocab, out, curve }) => {
            let vocab = Vocabulary::load(vocab)?;
            let pairs = read_pairs(pairs)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let model_cfg = cfg.model.config(vocab.len(), Mode::ExpansionEnhanced, QueryStrategy::Symmetric);
            let mut params = ModelParams::init(model_cfg, &mut rng)?;
            let gating = params.gating.take().expect("expansion mode has a gating tower");
            let outcome = train_gating(&pairs, &vocab, &train_config(&cfg), gating, cfg.model.include_special)?;
            params.gating = Some(outcome.params);
            params.save(out)?;
            if let Some(c) = curve {
                outcome.curve.write_csv(c)?;
            }
        }
        Command::Train(TrainCmd::Joint {
            triples,
            pairs,
            vocab,
            gating,
            mode,
            strategy,
            out,
            curve,
        }) => {
            let vocab = Vocabulary::load(vocab)?;
            let triples = read_triples(triples)?;
            let pairs = match pairs {
                Some(p) => read_pairs(p)?,
                None => Vec::new(),
            };
            let (mode, strategy): (Mode, QueryStrategy) = ((*mode).into(), (*strategy).into());
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut params = ModelParams::init(cfg.model.config(vocab.len(), mode, strategy), &mut rng)?;
            if mode == Mode::ExpansionEnhanced {
                let path = gating.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("expansion-enhanced training needs --gating <checkpoint>".into())
                })?;
                let trained = ModelParams::load(path)?;
                if trained.config.v != vocab.len() {
                    return Err(Error::InvalidArgument("gating checkpoint was trained on another vocabulary".into()));
                }
                params.gating = trained.gating;
            }
            let outcome = train_joint(&triples, &pairs, &vocab, &train_config(&cfg), params)?;
            outcome.params.save(out)?;
            if let Some(c) = curve {
                outcome.curve.write_csv(c)?;
            }
        }
        Command::Represent {
            model,
            vocab,
            input,
            queries,
            out,
        } => {
            let params = ModelParams::load(model)?;
            let vocab = Vocabulary::load(vocab)?;
            let enc = ModelEncoder::new(&params);
            let rows = read_tsv_pairs(input)?;
            let reps = rows
                .par_iter()
                .map(|(id, text)| {
                    let seq = tokenize(text, &vocab, params.config.max_len);
                    let v = if *queries {
                        enc.encode_query(&seq)?
                    } else {
                        enc.encode_passage(&seq)?
                    };
                    Ok((id, v))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut w = BufWriter::new(fs::File::create(out)?);
            for (id, v) in reps {
                let terms: Vec<serde_json::Value> = v
                    .entries()
                    .iter()
                    .map(|&(t, weight)| serde_json::json!({"term": vocab.term(t), "id": t, "weight": weight}))
                    .collect();
                writeln!(w, "{}", serde_json::json!({"id": id, "terms": terms}))?;
            }
            w.flush()?;
        }
        Command::Index(IndexCmd::Build {
            model,
            vocab,
            passages,
            out,
        }) => {
            let params = ModelParams::load(model)?;
            let vocab = Vocabulary::load(vocab)?;
            let enc = ModelEncoder::new(&params);
            let rows = read_tsv_pairs(passages)?;
            let reps = rows
                .par_iter()
                .map(|(id, text)| Ok((id.clone(), enc.encode_passage(&tokenize(text, &vocab, params.config.max_len))?)))
                .collect::<Result<Vec<_>>>()?;
            let idx = build_index(reps, vocab.len())?;
            save_index(&idx, out)?;
            info!("indexed {} passages, {} postings", idx.doc_count(), idx.total_postings());
        }
        Command::Index(IndexCmd::Search {
            index,
            model,
            vocab,
            queries,
            k,
            out,
        }) => {
            let idx = load_index(index)?;
            let params = ModelParams::load(model)?;
            let vocab = Vocabulary::load(vocab)?;
            let enc = ModelEncoder::new(&params);
            let queries = read_tsv_pairs(queries)?;
            let ranked = queries
                .par_iter()
                .map(|(qid, text)| {
                    let q = enc.encode_query(&tokenize(text, &vocab, params.config.max_len))?;
                    Ok((qid.clone(), idx.search(&q, *k)))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut run = RunFile::new();
            for (qid, hits) in ranked {
                run.insert_hits(qid, hits)?;
            }
            write_run(out, &run, "lsr")?;
        }
        Command::Bm25(Bm25Cmd::Index { vocab, passages, out }) => {
            let vocab = Vocabulary::load(vocab)?;
            let idx = bm25_index(&read_tsv_pairs(passages)?, &vocab)?;
            save_index(&idx, out)?;
            info!("indexed {} passages", idx.doc_count());
        }
        Command::Bm25(Bm25Cmd::Search {
            index,
            vocab,
            queries,
            k,
            k1,
            b,
            out,
        }) => {
            let idx = load_index(index)?;
            let vocab = Vocabulary::load(vocab)?;
            let params = Bm25Params {
                k1: k1.unwrap_or(cfg.bm25.k1),
                b: b.unwrap_or(cfg.bm25.b),
            };
            let queries = read_tsv_pairs(queries)?;
            let ranked = queries
                .par_iter()
                .map(|(qid, text)| Ok((qid.clone(), bm25_search(&idx, &tokenize(text, &vocab, usize::MAX), *k, params)?)))
                .collect::<Result<Vec<_>>>()?;
            let mut run = RunFile::new();
            for (qid, hits) in ranked {
                run.insert_hits(qid, hits)?;
            }
            write_run(out, &run, "bm25")?;
        }
        Command::Eval(EvalCmd::Run { run, qrels, cutoffs }) => {
            let run = RunFile::read_trec(run)?;
            let qrels = Qrels::read(qrels)?;
            if cutoffs.contains(&0) {
                return Err(Error::InvalidArgument("cutoffs must be at least 1".into()));
            }
            let mut report = serde_json::Map::new();
            report.insert("queries".into(), qrels.len().into());
            report.insert("unjudged_run_queries".into(), unjudged_queries(&run, &qrels).into());
            report.insert("mrr@10".into(), mrr_at_k(&run, &qrels, 10).into());
            for &k in cutoffs {
                report.insert(format!("recall@{k}"), recall_at_k(&run, &qrels, k).into());
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::MakeDevset {
            passages,
            queries,
            qrels,
            vocab,
            n_queries,
            top_n,
            size,
            out_dir,
        } => {
            let vocab = Vocabulary::load(vocab)?;
            let spec = DevsetSpec {
                queries: *n_queries,
                top_n: *top_n,
                size: *size,
                seed: cfg.seed,
            };
            let dev = make_devset(
                &read_tsv_pairs(passages)?,
                &read_tsv_pairs(queries)?,
                &Qrels::read(qrels)?,
                &vocab,
                spec,
            )?;
            fs::create_dir_all(out_dir)?;
            write_tsv_pairs(out_dir.join("passages.tsv"), &dev.passages)?;
            write_tsv_pairs(out_dir.join("queries.tsv"), &dev.queries)?;
            dev.qrels.write(out_dir.join("qrels.tsv"))?;
            info!("dev set: {} passages, {} queries", dev.passages.len(), dev.queries.len());
        }
        Command::MakeTriples {
            passages,
            queries,
            qrels,
            vocab,
            negatives,
            out,
        } => {
            let vocab = Vocabulary::load(vocab)?;
            let passages = read_tsv_pairs(passages)?;
            let idx = bm25_index(&passages, &vocab)?;
            let triples = make_triples(
                &read_tsv_pairs(queries)?,
                &Qrels::read(qrels)?,
                &passages,
                &idx,
                &vocab,
                *negatives,
                cfg.seed,
            )?;
            write_triples(out, &triples)?;
            info!("wrote {} triples", triples.len());
        }
        Command::Explain {
            model,
            vocab,
            passage,
            term,
            n,
        } => {
            let params = ModelParams::load(model)?;
            let vocab = Vocabulary::load(vocab)?;
            let gating = params
                .gating
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("checkpoint has no gating tower".into()))?;
            let id = vocab
                .id(&term.to_lowercase())
                .ok_or_else(|| Error::InvalidArgument(format!("`{term}` is not in the vocabulary")))?;
            let seq = tokenize(passage, &vocab, params.config.max_len);
            let report = explain_expansion(&seq, id, gating, &vocab, params.config.include_special, *n)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Experiment { out } => {
            let report = run_experiment(&cfg)?;
            print!("{}", report.to_table());
            if let Some(path) = out {
                fs::write(path, serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::Generate { out_dir } => {
            let synth = match &cfg.data {
                DataSource::Synthetic(s) => s.clone(),
                DataSource::Dir(_) => return Err(Error::InvalidArgument("config data source is not synthetic".into())),
            };
            generate(&synth)?.write_dir(out_dir)?;
            info!("corpus written to {}", out_dir.display());
        }
    }
    Ok(())
}
