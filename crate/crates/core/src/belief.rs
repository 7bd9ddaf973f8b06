//! Noisy crowd answers and Bayesian adjustment of matching probabilities.
//!
//! A worker answers a yes/no question correctly with probability
//! `P_W ∈ [0.5, 1]`. Observing an answer multiplies each matching's
//! probability by the answer likelihood (`P_W` when the matching agrees with
//! the answer, `1 − P_W` otherwise) and renormalizes. Updates commute, so a
//! batch of answers lands on the same posterior in any order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{binary_entropy, CorrespondenceId, ModelError, ResultSet};

/// Probability that a worker answers a question correctly.
///
/// The strict constructor enforces the `[0.5, 1]` domain; accuracies below
/// one half would mean a systematically adversarial worker and usually
/// indicate a backend bug, so they are rejected rather than clamped.
/// [`WorkerAccuracy::new_relaxed`] admits `(0, 1]` for simulations that
/// deliberately model sub-half crowds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WorkerAccuracy(f64);

impl WorkerAccuracy {
    pub fn new(p: f64) -> Result<Self, BeliefError> {
        if (0.5..=1.0).contains(&p) {
            Ok(WorkerAccuracy(p))
        } else {
            Err(BeliefError::AccuracyOutOfRange { p })
        }
    }

    /// Admits any accuracy in `(0, 1]`. Only simulation paths that explicitly
    /// opt into sub-half crowds should use this.
    pub fn new_relaxed(p: f64) -> Result<Self, BeliefError> {
        if p > 0.0 && p <= 1.0 {
            Ok(WorkerAccuracy(p))
        } else {
            Err(BeliefError::AccuracyOutOfRange { p })
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_sub_half(self) -> bool {
        self.0 < 0.5
    }
}

impl<'de> Deserialize<'de> for WorkerAccuracy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let p = f64::deserialize(deserializer)?;
        WorkerAccuracy::new_relaxed(p).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerValue {
    Yes,
    No,
}

impl AnswerValue {
    pub fn negated(self) -> AnswerValue {
        match self {
            AnswerValue::Yes => AnswerValue::No,
            AnswerValue::No => AnswerValue::Yes,
        }
    }
}

/// A yes/no response to the question "is this correspondence in the correct
/// matching?", paired with the responding worker's accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub ccq: CorrespondenceId,
    pub value: AnswerValue,
    pub accuracy: WorkerAccuracy,
}

/// Answer as it appears on experiment traces (JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub ccq: u32,
    pub value: AnswerValue,
    pub accuracy: f64,
    pub tick: u64,
}

impl AnswerRecord {
    pub fn new(answer: &Answer, tick: u64) -> Self {
        AnswerRecord {
            ccq: answer.ccq.0,
            value: answer.value,
            accuracy: answer.accuracy.get(),
            tick,
        }
    }
}

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("worker accuracy {p} outside the accepted range")]
    AccuracyOutOfRange { p: f64 },
    #[error("answer for {ccq} is impossible under current beliefs and accuracy")]
    ImpossibleAnswer { ccq: CorrespondenceId },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Entropy of the worker's noise: `H(W) = H_b(P_W)` in bits.
pub fn crowd_entropy(acc: WorkerAccuracy) -> f64 {
    binary_entropy(acc.get())
}

/// Probability of a Yes/No answer about a correspondence with marginal `p_c`,
/// asked of a worker with the given accuracy. The pair sums to one exactly.
pub fn answer_distribution(p_c: f64, acc: WorkerAccuracy) -> (f64, f64) {
    let w = acc.get();
    let p_yes = p_c * w + (1.0 - p_c) * (1.0 - w);
    (p_yes, 1.0 - p_yes)
}

/// Entropy of the answer variable, in bits.
///
/// Computed from both product forms rather than `H_b(p_yes)`, so swapping the
/// marginal for its complement permutes the two summands instead of
/// perturbing them: the function is symmetric around 0.5 to the last bit for
/// exactly-representable complements.
pub fn answer_entropy(p_c: f64, acc: WorkerAccuracy) -> f64 {
    let w = acc.get();
    let p_yes = p_c * w + (1.0 - p_c) * (1.0 - w);
    let p_no = (1.0 - p_c) * w + p_c * (1.0 - w);
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    term(p_yes) + term(p_no)
}

/// Likelihood of `answer` given that matching `m` is the correct one.
pub(crate) fn answer_likelihood(rs: &ResultSet, matching: usize, answer: &Answer) -> f64 {
    let contains = rs.incidence().contains(matching, answer.ccq);
    let agrees = match answer.value {
        AnswerValue::Yes => contains,
        AnswerValue::No => !contains,
    };
    if agrees {
        answer.accuracy.get()
    } else {
        1.0 - answer.accuracy.get()
    }
}

/// Bayesian adjustment: returns the posterior matching distribution after one
/// answer. Matchings and incidence are untouched; only probabilities move.
///
/// Errors with [`BeliefError::ImpossibleAnswer`] when the answer has zero
/// probability under the current beliefs (e.g. a No about a correspondence
/// with marginal 1 from a worker with accuracy 1), which would otherwise
/// produce NaNs.
pub fn posterior_update(rs: &ResultSet, answer: &Answer) -> Result<ResultSet, BeliefError> {
    let p_c = rs.corr_probability(answer.ccq)?;
    let (p_yes, p_no) = answer_distribution(p_c, answer.accuracy);
    let denom = match answer.value {
        AnswerValue::Yes => p_yes,
        AnswerValue::No => p_no,
    };
    if denom <= 0.0 {
        return Err(BeliefError::ImpossibleAnswer { ccq: answer.ccq });
    }

    let mut probs: Vec<f64> = (0..rs.n_matchings())
        .map(|i| rs.prob(i) * answer_likelihood(rs, i, answer) / denom)
        .collect();

    // Tiny drift accumulates over long runs; snap the vector back onto the
    // simplex whenever it exceeds the tolerance.
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > crate::model::RENORM_DRIFT && sum > 0.0 {
        for p in &mut probs {
            *p /= sum;
        }
    }

    Ok(rs.with_probs(probs)?)
}

/// Folds [`posterior_update`] over a list of answers. The result does not
/// depend on the order of the list.
pub fn posterior_update_batch(
    rs: &ResultSet,
    answers: &[Answer],
) -> Result<ResultSet, BeliefError> {
    let mut current = rs.clone();
    for answer in answers {
        current = posterior_update(&current, answer)?;
    }
    Ok(current)
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use crate::model::ResultSet;
    use proptest::prelude::*;

    fn arb_instance() -> impl Strategy<Value = (ResultSet, Vec<Answer>)> {
        (2usize..6, 3u32..8)
            .prop_flat_map(|(n, universe)| {
                (
                    proptest::collection::vec(
                        proptest::collection::btree_set(0..universe, 1..=universe as usize),
                        n,
                    ),
                    proptest::collection::vec(0.05f64..1.0, n),
                    proptest::collection::vec(
                        (0u32..universe, proptest::bool::ANY, 0.5f64..=1.0),
                        1..5,
                    ),
                )
            })
            .prop_filter_map("answers must be possible", |(sets, weights, raw)| {
                let total: f64 = weights.iter().sum();
                let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
                let lists: Vec<Vec<u32>> =
                    sets.into_iter().map(|s| s.into_iter().collect()).collect();
                let rs = ResultSet::from_member_lists(lists, probs).ok()?;
                let n_ids = rs.n_correspondences() as u32;
                let answers: Vec<Answer> = raw
                    .into_iter()
                    .map(|(id, yes, p)| Answer {
                        ccq: CorrespondenceId(id % n_ids),
                        value: if yes {
                            AnswerValue::Yes
                        } else {
                            AnswerValue::No
                        },
                        accuracy: WorkerAccuracy::new(p.min(0.99)).unwrap(),
                    })
                    .collect();
                Some((rs, answers))
            })
    }

    proptest! {
        #[test]
        fn posterior_sums_to_one((rs, answers) in arb_instance()) {
            let post = posterior_update_batch(&rs, &answers).unwrap();
            let sum: f64 = post.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }

        #[test]
        fn order_independence((rs, answers) in arb_instance()) {
            let forward = posterior_update_batch(&rs, &answers).unwrap();
            let mut reversed = answers.clone();
            reversed.reverse();
            let backward = posterior_update_batch(&rs, &reversed).unwrap();
            for i in 0..rs.n_matchings() {
                prop_assert!((forward.prob(i) - backward.prob(i)).abs() < 1e-9);
            }
        }
    }
}
