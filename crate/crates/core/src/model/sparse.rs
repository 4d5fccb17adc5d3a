use serde::{Deserialize, Serialize};

use super::gate::GateVector;
use crate::error::{Error, Result};

/// Default cap on non-zeros: `max(64, 4 * |bow|)`.
pub fn default_lambda_cap(bow_len: usize) -> usize {
    (4 * bow_len).max(64)
}

/// Sorted `(term id, weight)` pairs with strictly positive weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn new(entries: Vec<(u32, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidArgument("sparse vector ids must be strictly increasing".into()));
            }
        }
        if let Some((t, w)) = entries.iter().find(|(_, w)| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!("non-positive weight {w} for term {t}")));
        }
        Ok(SparseVector { entries })
    }

    /// Sorts, sums duplicates and drops non-positive weights.
    pub fn from_unsorted(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut out: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (t, w) in entries {
            match out.last_mut() {
                Some((last, acc)) if *last == t => *acc += w,
                _ => out.push((t, w)),
            }
        }
        out.retain(|(_, w)| *w > 0.0);
        SparseVector { entries: out }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn get(&self, term: u32) -> Option<f64> {
        self.entries
            .binary_search_by_key(&term, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Dot product, summed in ascending term-id order.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        SparseVector::new(self.entries.iter().map(|&(t, w)| (t, w * alpha)).collect())
    }
}

/// Masks the dense importance by the gate, drops non-positive weights and
/// keeps the `lambda_cap` largest (ties toward the lower term id).
pub fn sparse_rep(importance: &[f64], gate: &GateVector, lambda_cap: usize) -> SparseVector {
    let mut entries: Vec<(u32, f64)> = gate
        .active()
        .iter()
        .filter_map(|&t| importance.get(t as usize).map(|&w| (t, w)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    if entries.len() > lambda_cap {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        entries.truncate(lambda_cap);
        entries.sort_by_key(|e| e.0);
    }
    SparseVector { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_rep_masks_and_truncates() {
        let gate = GateVector::from_ids(vec![0, 2, 3]);
        let out = sparse_rep(&[5.0, 0.0, 2.0, 7.0], &gate, 2);
        assert_eq!(out.entries(), &[(0, 5.0), (3, 7.0)]);
    }

    #[test]
    fn sparse_rep_empty_gate() {
        let out = sparse_rep(&[5.0, 1.0], &GateVector::default(), 4);
        assert!(out.is_empty());
    }

    #[test]
    fn sparse_rep_drops_zero_weights() {
        let gate = GateVector::from_ids(vec![0, 1]);
        let out = sparse_rep(&[0.0, 1.5], &gate, 4);
        assert_eq!(out.entries(), &[(1, 1.5)]);
    }

    #[test]
    fn sparse_rep_tie_break_prefers_lower_id() {
        let gate = GateVector::from_ids(vec![0, 1, 2]);
        let out = sparse_rep(&[1.0, 3.0, 3.0], &gate, 1);
        assert_eq!(out.entries(), &[(1, 3.0)]);
    }

    #[test]
    fn new_validates() {
        assert!(SparseVector::new(vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(vec![(1, 0.0)]).is_err());
        assert!(SparseVector::new(vec![(1, 1.0), (4, 0.5)]).is_ok());
    }

    #[test]
    fn dot_and_from_unsorted() {
        let a = SparseVector::from_unsorted(vec![(3, 1.0), (1, 2.0), (3, 1.0)]);
        assert_eq!(a.entries(), &[(1, 2.0), (3, 2.0)]);
        let b = SparseVector::new(vec![(0, 9.0), (3, 0.5)]).unwrap();
        assert_eq!(a.dot(&b), 1.0);
    }

    #[test]
    fn default_cap() {
        assert_eq!(default_lambda_cap(3), 64);
        assert_eq!(default_lambda_cap(20), 80);
    }
}
