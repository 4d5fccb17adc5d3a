//! Two-phase training: the gating tower learns expansion targets first, then
//! the importance (and query) towers learn the ranking objective with the
//! gate held fixed.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{ParallelPair, TrainingTriple};
use super::loss::{densify, expansion_loss_logits, joint_loss, rank_loss};
use crate::error::{Error, Result};
use crate::model::{
    literal_gate, query_tf, sparse_rep, GateVector, GatingParams, Mode, ModelParams, QueryStrategy, SparseVector, Tower,
};
use crate::numerics::{adam_step, AdamConfig, AdamState, Matrix};
use crate::text::{bow, tokenize, BowVector, TokenSeq, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub gating_iterations: usize,
    pub joint_iterations: usize,
    /// Weight of the non-target terms in the expansion loss.
    pub lambda1: f64,
    /// Weight of the target terms in the expansion loss.
    pub lambda2: f64,
    pub seed: u64,
    pub lambda_cap: Option<usize>,
    pub threshold: f64,
    /// Keep updating the gating tower with the expansion loss during the
    /// joint phase instead of freezing it.
    pub unfreeze_gating: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-3,
            batch_size: 8,
            gating_iterations: 2000,
            joint_iterations: 5000,
            lambda1: 1e-3,
            lambda2: 1.0,
            seed: 42,
            lambda_cap: None,
            threshold: 0.7,
            unfreeze_gating: false,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0 && self.lambda2 > 0.0) {
            return Err(Error::InvalidArgument("lambda1 and lambda2 must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidArgument("threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Mean batch loss per iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub points: Vec<(usize, f64)>,
}

impl LossCurve {
    pub fn first(&self) -> Option<f64> {
        self.points.first().map(|p| p.1)
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    /// Mean over the first / last `n` points.
    pub fn head_mean(&self, n: usize) -> Option<f64> {
        let n = n.min(self.points.len());
        (n > 0).then(|| self.points[..n].iter().map(|p| p.1).sum::<f64>() / n as f64)
    }

    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        let n = n.min(self.points.len());
        (n > 0).then(|| self.points[self.points.len() - n..].iter().map(|p| p.1).sum::<f64>() / n as f64)
    }

    /// CSV with header `iter,loss`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "iter,loss")?;
        for (i, l) in &self.points {
            writeln!(w, "{i},{l}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Deterministic epoch-shuffled batches.
struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        BatchSampler { order, pos: 0, rng }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// A tokenized parallel pair.
#[derive(Debug, Clone)]
pub struct PairInstance {
    pub passage: TokenSeq,
    pub target: BowVector,
}

pub fn prepare_pairs(pairs: &[ParallelPair], vocab: &Vocabulary, max_len: usize) -> Result<Vec<PairInstance>> {
    pairs
        .iter()
        .map(|p| {
            p.validate(vocab)?;
            Ok(PairInstance {
                passage: tokenize(&p.passage, vocab, max_len),
                target: bow(&tokenize(&p.target, vocab, usize::MAX)),
            })
        })
        .collect()
}

/// Expansion loss of one pair and its gradient on the gating tower.
pub fn expansion_instance(
    gating: &GatingParams,
    inst: &PairInstance,
    lambda1: f64,
    lambda2: f64,
    include_special: bool,
) -> Result<(f64, Tower)> {
    let (logits, cache) = gating.tower.forward(&inst.passage, include_special)?;
    let l = expansion_loss_logits(&logits, &inst.target, lambda1, lambda2);
    let mut grads = gating.tower.zeros_like();
    gating.tower.backward(&cache, &l.grad_logit, &mut grads);
    Ok((l.loss, grads))
}

fn expansion_value(gating: &GatingParams, inst: &PairInstance, cfg: &TrainConfig, include_special: bool) -> Result<f64> {
    let logits = gating.tower.importance(&inst.passage, include_special)?;
    Ok(expansion_loss_logits(&logits, &inst.target, cfg.lambda1, cfg.lambda2).loss)
}

fn sum_towers(template: &Tower, parts: impl IntoIterator<Item = Tower>, scale: f64) -> Tower {
    let mut acc = template.zeros_like();
    for g in parts {
        acc.add_scaled(scale, &g);
    }
    acc
}

fn apply(tower: &mut Tower, grads: &Tower, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let grad_list: Vec<&Matrix> = grads.tensors();
    let mut params = tower.tensors_mut();
    adam_step(&mut params, &grad_list, state, cfg)
}

fn check_loss(iteration: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, loss })
    }
}

#[derive(Debug, Clone)]
pub struct GatingOutcome {
    pub params: GatingParams,
    pub curve: LossCurve,
}

/// Phase one: fits the gating tower to the parallel corpus with the
/// expansion loss only.
pub fn train_gating(
    pairs: &[ParallelPair],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    mut gating: GatingParams,
    include_special: bool,
) -> Result<GatingOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("train_gating needs parallel pairs"));
    }
    gating.threshold = cfg.threshold;
    let instances = prepare_pairs(pairs, vocab, gating.tower.encoder.max_len())?;
    let mut sampler = BatchSampler::new(instances.len(), cfg.seed ^ 0x6761_7465);
    let mut state = AdamState::for_tensors(&gating.tower.tensors());
    let adam = cfg.adam();
    let mut curve = LossCurve::default();
    let scale = 1.0 / cfg.batch_size as f64;

    for it in 0..cfg.gating_iterations {
        let batch = sampler.next_batch(cfg.batch_size);
        let results: Vec<(f64, Tower)> = batch
            .par_iter()
            .map(|&i| expansion_instance(&gating, &instances[i], cfg.lambda1, cfg.lambda2, include_special))
            .collect::<Result<_>>()?;
        let loss = results.iter().map(|r| r.0).sum::<f64>() * scale;
        check_loss(it, loss)?;
        let grads = sum_towers(&gating.tower, results.into_iter().map(|r| r.1), scale);
        apply(&mut gating.tower, &grads, &mut state, &adam).map_err(|e| match e {
            Error::GradientOverflow => Error::Divergence { iteration: it, loss },
            other => other,
        })?;
        curve.points.push((it, loss));
        if it % 200 == 0 {
            debug!("gating iter {it}: loss {loss:.5}");
        }
    }
    if let Some(l) = curve.last() {
        info!("gating phase finished after {} iterations, loss {l:.5}", cfg.gating_iterations);
    }
    Ok(GatingOutcome { params: gating, curve })
}

/// A tokenized triple with fixed passage gates.
#[derive(Debug, Clone)]
pub struct TripleInstance {
    pub query: TokenSeq,
    pub positive: TokenSeq,
    pub negative: TokenSeq,
    pub pos_gate: GateVector,
    pub neg_gate: GateVector,
}

/// Gradients of the ranking loss on the trainable towers.
#[derive(Debug, Clone)]
pub struct RankGrads {
    pub importance: Tower,
    pub query: Option<Tower>,
}

/// Ranking loss of one triple and its gradients. Gates and the top-`cap`
/// selection are treated as constants.
pub fn rank_instance(
    params: &ModelParams,
    strategy: QueryStrategy,
    inst: &TripleInstance,
    lambda_cap: Option<usize>,
) -> Result<(f64, RankGrads)> {
    let cfg = &params.config;
    let v = cfg.v;
    let inc = cfg.include_special;
    let cap_of = |b_len: usize| lambda_cap.unwrap_or_else(|| cfg.cap_for(b_len));

    let (pos_imp, pos_cache) = params.importance.forward(&inst.positive, inc)?;
    let (neg_imp, neg_cache) = params.importance.forward(&inst.negative, inc)?;
    let pos = sparse_rep(&pos_imp, &inst.pos_gate, cap_of(bow(&inst.positive).len()));
    let neg = sparse_rep(&neg_imp, &inst.neg_gate, cap_of(bow(&inst.negative).len()));

    let query_tower = match strategy {
        QueryStrategy::QueryTf => None,
        QueryStrategy::Symmetric => Some(&params.importance),
        QueryStrategy::Asymmetric => Some(
            params
                .query
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("asymmetric strategy needs a query tower".into()))?,
        ),
    };
    let (q, q_cache): (SparseVector, _) = match query_tower {
        None => (query_tf(&inst.query), None),
        Some(t) => {
            let (imp, cache) = t.forward(&inst.query, inc)?;
            let qb = bow(&inst.query);
            (sparse_rep(&imp, &literal_gate(&qb), cap_of(qb.len())), Some(cache))
        }
    };

    let r = rank_loss(&q, &pos, &neg);
    let mut g_imp = params.importance.zeros_like();
    params.importance.backward(&pos_cache, &densify(&r.grad_pos, v), &mut g_imp);
    params.importance.backward(&neg_cache, &densify(&r.grad_neg, v), &mut g_imp);
    let mut g_query = None;
    if let (Some(tower), Some(cache)) = (query_tower, q_cache) {
        let dq = densify(&r.grad_query, v);
        match strategy {
            QueryStrategy::Symmetric => tower.backward(&cache, &dq, &mut g_imp),
            _ => {
                let mut g = tower.zeros_like();
                tower.backward(&cache, &dq, &mut g);
                g_query = Some(g);
            }
        }
    }
    Ok((
        r.loss,
        RankGrads {
            importance: g_imp,
            query: g_query,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub params: ModelParams,
    pub curve: LossCurve,
}

/// Phase two: optimizes the ranking loss (plus the expansion loss, which is
/// constant while the gate is frozen) on the importance and query towers.
pub fn train_joint(
    triples: &[TrainingTriple],
    pairs: &[ParallelPair],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    mut params: ModelParams,
) -> Result<JointOutcome> {
    cfg.validate()?;
    if triples.is_empty() {
        return Err(Error::EmptyInput("train_joint needs training triples"));
    }
    for t in triples {
        t.validate(vocab)?;
    }
    let mode = params.config.mode;
    let strategy = params.config.strategy;
    let inc = params.config.include_special;
    let max_len = params.config.max_len;
    if mode == Mode::ExpansionEnhanced && params.gating.is_none() {
        return Err(Error::InvalidArgument("expansion-enhanced training needs a trained gating tower".into()));
    }
    if strategy == QueryStrategy::Asymmetric && params.query.is_none() {
        return Err(Error::InvalidArgument("asymmetric strategy needs a query tower".into()));
    }

    // unique passages, so each gate is computed once while the gate is frozen
    let mut passage_ids: HashMap<&str, usize> = HashMap::new();
    let mut passages: Vec<TokenSeq> = Vec::new();
    let mut triple_refs = Vec::with_capacity(triples.len());
    for t in triples {
        let mut ids = [0usize; 2];
        for (slot, text) in ids.iter_mut().zip([t.positive.as_str(), t.negative.as_str()]) {
            *slot = *passage_ids.entry(text).or_insert_with(|| {
                passages.push(tokenize(text, vocab, max_len));
                passages.len() - 1
            });
        }
        triple_refs.push((tokenize(&t.query, vocab, max_len), ids[0], ids[1]));
    }

    let use_pairs = mode == Mode::ExpansionEnhanced && !pairs.is_empty();
    let pair_instances = if use_pairs {
        prepare_pairs(pairs, vocab, max_len)?
    } else {
        Vec::new()
    };

    let frozen = !cfg.unfreeze_gating;
    let compute_gates = |params: &ModelParams| -> Result<Vec<GateVector>> {
        passages
            .par_iter()
            .map(|seq| params.gate_for(seq, &bow(seq), mode).map(|s| s.combined))
            .collect()
    };
    let mut gates = compute_gates(&params)?;
    let cached_exp: Vec<f64> = if use_pairs && frozen {
        let g = params.gating.as_ref().expect("checked above");
        pair_instances
            .par_iter()
            .map(|p| expansion_value(g, p, cfg, inc))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let adam = cfg.adam();
    let mut imp_state = AdamState::for_tensors(&params.importance.tensors());
    let mut query_state = params.query.as_ref().map(|q| AdamState::for_tensors(&q.tensors()));
    let mut gate_state = params.gating.as_ref().map(|g| AdamState::for_tensors(&g.tower.tensors()));
    let mut sampler = BatchSampler::new(triple_refs.len(), cfg.seed ^ 0x6a6f_696e);
    let mut pair_sampler = BatchSampler::new(pair_instances.len().max(1), cfg.seed ^ 0x7061_6972);
    let scale = 1.0 / cfg.batch_size as f64;
    let mut curve = LossCurve::default();

    for it in 0..cfg.joint_iterations {
        if !frozen && it > 0 {
            gates = compute_gates(&params)?;
        }
        let batch = sampler.next_batch(cfg.batch_size);
        let results: Vec<(f64, RankGrads)> = batch
            .par_iter()
            .map(|&i| {
                let (q, p, n) = &triple_refs[i];
                let inst = TripleInstance {
                    query: q.clone(),
                    positive: passages[*p].clone(),
                    negative: passages[*n].clone(),
                    pos_gate: gates[*p].clone(),
                    neg_gate: gates[*n].clone(),
                };
                rank_instance(&params, strategy, &inst, cfg.lambda_cap)
            })
            .collect::<Result<_>>()?;
        let rank = results.iter().map(|r| r.0).sum::<f64>() * scale;

        let mut exp = 0.0;
        let mut gate_grads = None;
        if use_pairs {
            let pb = pair_sampler.next_batch(cfg.batch_size);
            if frozen {
                exp = pb.iter().map(|&i| cached_exp[i]).sum::<f64>() * scale;
            } else {
                let g = params.gating.as_ref().expect("checked above");
                let res: Vec<(f64, Tower)> = pb
                    .par_iter()
                    .map(|&i| expansion_instance(g, &pair_instances[i], cfg.lambda1, cfg.lambda2, inc))
                    .collect::<Result<_>>()?;
                exp = res.iter().map(|r| r.0).sum::<f64>() * scale;
                gate_grads = Some(sum_towers(&g.tower, res.into_iter().map(|r| r.1), scale));
            }
        }
        let loss = joint_loss(rank, exp);
        check_loss(it, loss)?;

        let mut imp_parts = Vec::with_capacity(results.len());
        let mut query_parts = Vec::new();
        for (_, g) in results {
            imp_parts.push(g.importance);
            if let Some(q) = g.query {
                query_parts.push(q);
            }
        }
        let diverged = |e: Error| match e {
            Error::GradientOverflow => Error::Divergence { iteration: it, loss },
            other => other,
        };
        let g_imp = sum_towers(&params.importance, imp_parts, scale);
        apply(&mut params.importance, &g_imp, &mut imp_state, &adam).map_err(diverged)?;
        if let (Some(q), Some(st)) = (params.query.as_mut(), query_state.as_mut()) {
            if !query_parts.is_empty() {
                let g_q = sum_towers(q, query_parts, scale);
                apply(q, &g_q, st, &adam).map_err(diverged)?;
            }
        }
        if let (Some(gg), Some(g), Some(st)) = (gate_grads, params.gating.as_mut(), gate_state.as_mut()) {
            apply(&mut g.tower, &gg, st, &adam).map_err(diverged)?;
        }
        curve.points.push((it, loss));
        if it % 500 == 0 {
            debug!("joint iter {it}: loss {loss:.5} (rank {rank:.5})");
        }
    }
    if let Some(l) = curve.last() {
        info!("joint phase ({mode}, {strategy}) finished, loss {l:.5}");
    }
    Ok(JointOutcome { params, curve })
}
