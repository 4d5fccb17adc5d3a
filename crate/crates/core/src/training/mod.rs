//! Ranking and expansion losses, training data, and the two-phase schedule.

mod data;
mod loss;
mod trainer;

pub use data::{read_pairs, read_triples, write_pairs, write_triples, ExpansionKind, ParallelPair, TrainingTriple};
pub use loss::{densify, expansion_loss, expansion_loss_logits, joint_loss, mean, rank_loss, ExpansionLoss, RankLoss, PROB_EPS};
pub use trainer::{
    expansion_instance, prepare_pairs, rank_instance, train_gating, train_joint, GatingOutcome, JointOutcome, LossCurve,
    PairInstance, RankGrads, TrainConfig, TripleInstance,
};
