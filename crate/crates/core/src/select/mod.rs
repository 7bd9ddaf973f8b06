//! CCQ selection: single-question queries, joint distributions over question
//! subsets, entropy bounds, greedy approximation and the brute-force oracle.

mod greedy;
mod multi;
mod single;

pub use greedy::{
    greedy_select, prune_bound_dominance, prune_candidate_determined, prune_partition_singleton,
    prune_submodular_stale_score, prune_upper_bound_bisect, CcqPick, GreedyIterationTrace,
    GreedyOptions, GreedySelection, GreedyTrace, Partition, PartitionIndex, PruningFlags,
};
pub use multi::{
    answer_likelihood_given_matching, brute_force_select, delta_h_multi, delta_h_multi_definition,
    entropy_bounds, joint_answer_distribution, joint_entropy_answers, joint_entropy_truth,
    joint_truth_distribution, AnswerOutcome, EntropyBounds, JointOutcome, EXACT_ANSWER_CAP,
};
pub use single::{
    delta_h_single, delta_h_single_definition, select_sccq, select_sccq_pruned, CcqCandidate,
};

use thiserror::Error;

use crate::belief::WorkerAccuracy;
use crate::model::{CorrespondenceId, ModelError, ResultSet};

/// Predicted accuracy for a question *before* it is published: either one
/// crowd-wide constant or a per-correspondence hardness estimate. Realized
/// accuracies arrive only with answers and are a separate concern.
#[derive(Debug, Clone)]
pub enum AccuracyModel {
    Constant(WorkerAccuracy),
    PerCorrespondence(Vec<WorkerAccuracy>),
}

impl AccuracyModel {
    pub fn perfect() -> AccuracyModel {
        AccuracyModel::Constant(WorkerAccuracy::new(1.0).expect("1.0 is a valid accuracy"))
    }

    pub fn constant(p: f64) -> Result<AccuracyModel, crate::belief::BeliefError> {
        Ok(AccuracyModel::Constant(WorkerAccuracy::new(p)?))
    }

    pub fn predicted(&self, c: CorrespondenceId) -> WorkerAccuracy {
        match self {
            AccuracyModel::Constant(acc) => *acc,
            AccuracyModel::PerCorrespondence(accs) => accs[c.index()],
        }
    }

    /// Per-correspondence models must cover every id of the result set.
    pub fn check_against(&self, rs: &ResultSet) -> Result<(), SelectError> {
        match self {
            AccuracyModel::Constant(_) => Ok(()),
            AccuracyModel::PerCorrespondence(accs) => {
                if accs.len() == rs.n_correspondences() {
                    Ok(())
                } else {
                    Err(SelectError::AccuracyModelMismatch {
                        expected: rs.n_correspondences(),
                        got: accs.len(),
                    })
                }
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("every correspondence marginal is already 0 or 1")]
    NoInformativeCcq,
    #[error("subset size {k} exceeds the exact-computation cap {cap}; use bounds or greedy")]
    KOverCap { k: usize, cap: usize },
    #[error("{subsets} candidate subsets exceed the enumeration cap {cap}")]
    EnumerationCapExceeded { subsets: u128, cap: u128 },
    #[error("requested {k} questions but only {available} informative correspondences exist")]
    NotEnoughInformative { k: usize, available: usize },
    #[error("accuracy model covers {got} correspondences, result set has {expected}")]
    AccuracyModelMismatch { expected: usize, got: usize },
    #[error("accuracy list has {got} entries for a subset of size {expected}")]
    AccuracyLenMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Belief(#[from] crate::belief::BeliefError),
}
