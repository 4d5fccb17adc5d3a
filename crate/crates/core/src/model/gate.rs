//! Gating: which vocabulary terms may carry weight in a representation.

use super::tower::Tower;
use crate::error::{Error, Result};
use crate::numerics::sigmoid;
use crate::text::{BowVector, TokenSeq};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

/// Binary gate over the vocabulary, stored as sorted active ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GateVector {
    active: Vec<u32>,
}

impl GateVector {
    pub fn from_ids(mut ids: Vec<u32>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        GateVector { active: ids }
    }

    pub fn active(&self) -> &[u32] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.active.binary_search(&id).is_ok()
    }
}

/// The expansion-enhanced gate together with its expansion-only part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateSplit {
    /// `G_e`: thresholded terms that are not literal.
    pub expansion: GateVector,
    /// `G_le = G_e + BoW(p)`.
    pub combined: GateVector,
}

pub fn literal_gate(b: &BowVector) -> GateVector {
    GateVector {
        active: b.ids().to_vec(),
    }
}

/// Binarizes `g` at `threshold`, masks out literal terms and adds them back.
pub fn expansion_gate(g: &[f64], b: &BowVector, threshold: f64) -> Result<GateSplit> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("gate threshold {threshold} outside (0, 1)")));
    }
    let expansion: Vec<u32> = g
        .iter()
        .enumerate()
        .filter(|&(t, &p)| p >= threshold && !b.contains(t as u32))
        .map(|(t, _)| t as u32)
        .collect();
    let mut combined = expansion.clone();
    combined.extend_from_slice(b.ids());
    Ok(GateSplit {
        expansion: GateVector { active: expansion },
        combined: GateVector::from_ids(combined),
    })
}

/// The gating tower and its binarizer threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingParams {
    pub tower: Tower,
    pub threshold: f64,
}

/// Dense gating probabilities: logistic of the summed rectified gating logits.
pub fn gate_distribution(seq: &TokenSeq, g: &GatingParams, include_special: bool) -> Result<Vec<f64>> {
    let logits = g.tower.importance(seq, include_special)?;
    Ok(logits.into_iter().map(sigmoid).collect())
}
