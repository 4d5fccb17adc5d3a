use crate::model::SparseVector;
use crate::numerics::{sigmoid, softplus};
use crate::text::BowVector;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

/// Pairwise softmax ranking loss of one `(q, p+, p-)` triple.
///
/// Gradients are sparse, aligned with the support of the respective vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RankLoss {
    pub loss: f64,
    pub s_pos: f64,
    pub s_neg: f64,
    pub grad_query: Vec<(u32, f64)>,
    pub grad_pos: Vec<(u32, f64)>,
    pub grad_neg: Vec<(u32, f64)>,
}

/// `-log(e^{s+} / (e^{s+} + e^{s-}))` with dot-product similarity.
pub fn rank_loss(q: &SparseVector, pos: &SparseVector, neg: &SparseVector) -> RankLoss {
    let s_pos = q.dot(pos);
    let s_neg = q.dot(neg);
    // log(1 + e^{s- - s+}) is the same quantity, overflow-free
    let loss = softplus(s_neg - s_pos);
    let p_neg = sigmoid(s_neg - s_pos);
    let d_pos = -p_neg;
    let d_neg = p_neg;

    let weight = |v: &SparseVector, t: u32| v.get(t).unwrap_or(0.0);
    let grad_pos = pos.entries().iter().map(|&(t, _)| (t, d_pos * weight(q, t))).collect();
    let grad_neg = neg.entries().iter().map(|&(t, _)| (t, d_neg * weight(q, t))).collect();
    let grad_query = q
        .entries()
        .iter()
        .map(|&(t, _)| (t, d_pos * weight(pos, t) + d_neg * weight(neg, t)))
        .collect();
    RankLoss {
        loss,
        s_pos,
        s_neg,
        grad_query,
        grad_pos,
        grad_neg,
    }
}

/// Scatters sparse gradients onto a dense vocabulary-sized vector.
pub fn densify(grads: &[(u32, f64)], v: usize) -> Vec<f64> {
    let mut out = vec![0.0; v];
    for &(t, g) in grads {
        out[t as usize] += g;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionLoss {
    pub loss: f64,
    /// `d loss / d G`.
    pub grad_prob: Vec<f64>,
    /// `d loss / d z` where `G = sigmoid(z)`.
    pub grad_logit: Vec<f64>,
}

/// Weighted binary cross-entropy between gating probabilities and the
/// target bag of words: `-l1 * sum_{T=0} log(1-G) - l2 * sum_{T=1} log G`.
pub fn expansion_loss(g: &[f64], target: &BowVector, lambda1: f64, lambda2: f64) -> ExpansionLoss {
    let mut loss = 0.0;
    let mut grad_prob = vec![0.0; g.len()];
    let mut grad_logit = vec![0.0; g.len()];
    for (k, &raw) in g.iter().enumerate() {
        let p = raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
        if target.contains(k as u32) {
            loss -= lambda2 * p.ln();
            grad_prob[k] = -lambda2 / p;
            grad_logit[k] = -lambda2 * (1.0 - p);
        } else {
            loss -= lambda1 * (1.0 - p).ln();
            grad_prob[k] = lambda1 / (1.0 - p);
            grad_logit[k] = lambda1 * p;
        }
    }
    ExpansionLoss {
        loss,
        grad_prob,
        grad_logit,
    }
}

/// [`expansion_loss`] evaluated on gating logits, using
/// `-log G = softplus(-z)` and `-log(1-G) = softplus(z)` so that saturated
/// logits keep full precision. `grad_prob` is left empty.
pub fn expansion_loss_logits(z: &[f64], target: &BowVector, lambda1: f64, lambda2: f64) -> ExpansionLoss {
    let mut loss = 0.0;
    let mut grad_logit = vec![0.0; z.len()];
    for (k, &zk) in z.iter().enumerate() {
        if target.contains(k as u32) {
            loss += lambda2 * softplus(-zk);
            grad_logit[k] = -lambda2 * sigmoid(-zk);
        } else {
            loss += lambda1 * softplus(zk);
            grad_logit[k] = lambda1 * sigmoid(zk);
        }
    }
    ExpansionLoss {
        loss,
        grad_prob: Vec::new(),
        grad_logit,
    }
}

/// `L = L_rank + L_exp`.
pub fn joint_loss(rank: f64, expansion: f64) -> f64 {
    rank + expansion
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;

    fn sv(e: &[(u32, f64)]) -> SparseVector {
        SparseVector::new(e.to_vec()).unwrap()
    }

    #[test]
    fn equal_scores_give_ln2() {
        let q = sv(&[(4, 1.0)]);
        let p = sv(&[(4, 3.0)]);
        let r = rank_loss(&q, &p, &p);
        assert!((r.loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn hand_example() {
        let r = rank_loss(&sv(&[(0, 1.0)]), &sv(&[(0, 2.0)]), &sv(&[(1, 5.0)]));
        assert_eq!((r.s_pos, r.s_neg), (2.0, 0.0));
        let expect = (1.0 + (-2.0f64).exp()).ln();
        assert!((r.loss - expect).abs() < 1e-15);
        assert!((r.loss - 0.1269).abs() < 5e-5);
    }

    #[test]
    fn loss_decreases_with_margin() {
        let q = sv(&[(0, 1.0)]);
        let neg = sv(&[(0, 1.0)]);
        let mut prev = f64::INFINITY;
        for m in 1..40 {
            let pos = sv(&[(0, 1.0 + m as f64)]);
            let l = rank_loss(&q, &pos, &neg).loss;
            assert!(l < prev && l >= 0.0);
            prev = l;
        }
        assert!(prev < 1e-15);
    }

    #[test]
    fn rank_gradient_matches_finite_difference_on_weights() {
        let q = [0.5, 1.5, 0.25];
        let p = [2.0, 0.3, 1.0];
        let n = [1.0, 1.0, 0.7];
        let build = |x: &[f64]| -> f64 {
            let q = sv(&[(0, x[0]), (1, x[1]), (2, x[2])]);
            let p = sv(&[(0, x[3]), (1, x[4]), (2, x[5])]);
            let n = sv(&[(0, x[6]), (1, x[7]), (2, x[8])]);
            rank_loss(&q, &p, &n).loss
        };
        let theta: Vec<f64> = q.iter().chain(&p).chain(&n).copied().collect();
        let fd = finite_diff_grad(build, &theta, 1e-6);
        let r = rank_loss(&sv(&[(0, q[0]), (1, q[1]), (2, q[2])]), &sv(&[(0, p[0]), (1, p[1]), (2, p[2])]), &sv(&[(0, n[0]), (1, n[1]), (2, n[2])]));
        let analytic: Vec<f64> = r
            .grad_query
            .iter()
            .chain(&r.grad_pos)
            .chain(&r.grad_neg)
            .map(|e| e.1)
            .collect();
        for (a, b) in analytic.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn expansion_hand_example() {
        let t = BowVector::from_ids(vec![5]);
        let mut g = vec![0.0; 6];
        g[4] = 0.5;
        g[5] = 0.5;
        // only slots 4 and 5 are in play; the zero slots contribute -log(1) = 0
        let l = expansion_loss(&g, &t, 1.0, 1.0);
        assert!((l.loss - 2.0 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn expansion_all_targets_has_no_negative_term() {
        let t = BowVector::from_ids(vec![4, 5, 6]);
        let g = vec![0.3, 0.6, 0.9];
        // ids 0..3 are reserved and never targets, so shift into range
        let mut padded = vec![0.0; 4];
        padded.extend(g.iter().copied());
        let l = expansion_loss(&padded, &t, 7.0, 1.0);
        let expect: f64 = -g.iter().map(|x| x.ln()).sum::<f64>();
        assert!((l.loss - expect).abs() < 1e-9);
    }

    #[test]
    fn expansion_perfect_fit_goes_to_zero() {
        let t = BowVector::from_ids(vec![4]);
        let g = vec![1e-15, 1e-15, 1e-15, 1e-15, 1.0 - 1e-15];
        let l = expansion_loss(&g, &t, 1e-3, 1.0);
        assert!(l.loss >= 0.0 && l.loss < 1e-9);
    }

    #[test]
    fn zero_lambda1_zeroes_non_target_gradients() {
        let t = BowVector::from_ids(vec![6]);
        let g = vec![0.2, 0.4, 0.6, 0.8, 0.3, 0.9, 0.55];
        let l = expansion_loss(&g, &t, 0.0, 1.0);
        for (k, (&gp, &gz)) in l.grad_prob.iter().zip(&l.grad_logit).enumerate() {
            if k != 6 {
                assert_eq!((gp, gz), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn logit_form_matches_probability_form() {
        let t = BowVector::from_ids(vec![5, 7]);
        let z = vec![-3.0, 0.2, 1.5, -0.7, 2.0, -1.0, 0.0, 4.0];
        let g: Vec<f64> = z.iter().map(|&x| sigmoid(x)).collect();
        let a = expansion_loss(&g, &t, 0.3, 1.0);
        let b = expansion_loss_logits(&z, &t, 0.3, 1.0);
        assert!((a.loss - b.loss).abs() < 1e-12);
        for (x, y) in a.grad_logit.iter().zip(&b.grad_logit) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_form_is_exact_when_saturated() {
        let t = BowVector::from_ids(vec![]);
        let l = expansion_loss_logits(&[40.0], &t, 1.0, 1.0);
        assert!((l.loss - (40.0 + (-40f64).exp())).abs() < 1e-12);
        let num = finite_diff_grad(|x| expansion_loss_logits(x, &t, 1.0, 1.0).loss, &[18.0], 1e-5);
        assert!((num[0] - l.grad_logit[0]).abs() < 1e-6);
    }

    #[test]
    fn joint_loss_is_additive() {
        assert_eq!(joint_loss(0.7, 0.0), 0.7);
        let ln2 = 2f64.ln();
        assert!((joint_loss(ln2, ln2) - 2.0 * ln2).abs() < 1e-15);
        let ranks = [0.1, 0.4, 0.9];
        let exps = [1.0, 0.0, 2.0];
        let per: Vec<f64> = ranks.iter().zip(&exps).map(|(a, b)| joint_loss(*a, *b)).collect();
        assert!((mean(&per) - joint_loss(mean(&ranks), mean(&exps))).abs() < 1e-15);
    }
}
