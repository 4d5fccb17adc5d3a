//! Which passage tokens activate an expanded term in the gating tower.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{expansion_gate, GatingParams};
use crate::numerics::{sigmoid, Matrix};
use crate::text::{bow, TokenSeq, Vocabulary, UNK};

pub const DEFAULT_TOP_N: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub position: usize,
    pub token: String,
    /// Rectified per-position gating logit of the expanded term.
    pub logit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub term: String,
    pub term_id: u32,
    /// Gating probability of the term.
    pub probability: f64,
    /// Sum of all rectified per-position logits.
    pub aggregate_logit: f64,
    /// Top-n positions, largest logit first.
    pub contributions: Vec<Contribution>,
}

/// Traces an expanded term back to the passage tokens whose gating logits
/// produced it.
pub fn explain_expansion(
    passage: &TokenSeq,
    term: u32,
    gating: &GatingParams,
    vocab: &Vocabulary,
    include_special: bool,
    n: usize,
) -> Result<AttributionReport> {
    if term as usize >= gating.tower.encoder.vocab_size() {
        return Err(Error::InvalidArgument(format!("term id {term} outside the vocabulary")));
    }
    let (aggregate, cache) = gating.tower.forward(passage, include_special)?;
    let probs: Vec<f64> = aggregate.iter().map(|&z| sigmoid(z)).collect();
    let split = expansion_gate(&probs, &bow(passage), gating.threshold)?;
    if !split.expansion.contains(term) {
        return Err(Error::TermNotExpanded);
    }
    Ok(AttributionReport {
        term: vocab.term(term).unwrap_or(UNK).to_string(),
        term_id: term,
        probability: probs[term as usize],
        aggregate_logit: aggregate[term as usize],
        contributions: rank_contributions(passage, &cache.logits, &cache.included, term, vocab, n),
    })
}

fn rank_contributions(
    passage: &TokenSeq,
    logits: &Matrix,
    included: &[bool],
    term: u32,
    vocab: &Vocabulary,
    n: usize,
) -> Vec<Contribution> {
    let mut out: Vec<Contribution> = passage
        .ids()
        .iter()
        .enumerate()
        .filter(|&(i, _)| included[i])
        .map(|(i, &id)| Contribution {
            position: i,
            token: vocab.term(id).unwrap_or(UNK).to_string(),
            logit: logits.get(i, term as usize).max(0.0),
        })
        .collect();
    out.sort_by(|a, b| b.logit.total_cmp(&a.logit).then(a.position.cmp(&b.position)));
    out.truncate(n);
    out
}
