//! Joint distributions over a subset of k CCQs.
//!
//! The truth patterns of k correspondences have at most `|R|` live outcomes
//! (each matching lands in exactly one pattern), so their distribution and
//! entropy cost `O(k·|R|)`. The answer patterns number `2^k`; the exact
//! answer distribution and the definitional uncertainty reduction are
//! therefore capped at [`EXACT_ANSWER_CAP`] questions, and the Theorem-style
//! entropy bounds below sandwich `H(D_A)` from the truth side alone.

use std::collections::HashMap;

use crate::belief::{crowd_entropy, WorkerAccuracy};
use crate::model::{entropy_bits, CorrespondenceSubset, ResultSet};
use crate::select::{AccuracyModel, SelectError};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Exact answer-pattern computations refuse subsets larger than this; the
/// `2^k` domain is the whole reason the bounds and the greedy path exist.
pub const EXACT_ANSWER_CAP: usize = 20;

/// Patterns are bitmasks over subset positions: bit `t` set means the answer
/// at position `t` is Yes (for answers) or the correspondence is contained
/// (for truths).
pub type Pattern = u32;

/// A truth pattern over the subset with its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointOutcome {
    pub pattern: Pattern,
    pub prob: f64,
}

/// An answer pattern over the subset with its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnswerOutcome {
    pub pattern: Pattern,
    pub prob: f64,
}

/// Lower and upper bounds on the joint answer entropy `H(D_A)`, computed
/// without ever materializing the `2^k` answer domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBounds {
    pub lower: f64,
    pub upper: f64,
}

fn check_subset_len(k: usize) -> Result<(), SelectError> {
    if k > EXACT_ANSWER_CAP {
        Err(SelectError::KOverCap {
            k,
            cap: EXACT_ANSWER_CAP,
        })
    } else {
        Ok(())
    }
}

fn check_accs(subset: &CorrespondenceSubset, accs: &[WorkerAccuracy]) -> Result<(), SelectError> {
    if accs.len() != subset.len() {
        Err(SelectError::AccuracyLenMismatch {
            expected: subset.len(),
            got: accs.len(),
        })
    } else {
        Ok(())
    }
}

/// Groups matchings by their containment pattern over `subset` and sums their
/// probabilities: the joint truth distribution. Each matching contributes to
/// exactly one outcome, so the result has at most `|R|` entries and the masses
/// sum to the total probability mass. Outcomes are returned in ascending
/// pattern order.
pub fn joint_truth_distribution(
    rs: &ResultSet,
    subset: &CorrespondenceSubset,
) -> Result<Vec<JointOutcome>, SelectError> {
    if subset.len() > Pattern::BITS as usize {
        return Err(SelectError::KOverCap {
            k: subset.len(),
            cap: Pattern::BITS as usize,
        });
    }
    for &c in subset.members() {
        rs.corr_probability(c)?; // id range check
    }
    let mut grouped: HashMap<Pattern, f64> = HashMap::new();
    for i in 0..rs.n_matchings() {
        let mut pattern: Pattern = 0;
        for (t, &c) in subset.members().iter().enumerate() {
            if rs.incidence().contains(i, c) {
                pattern |= 1 << t;
            }
        }
        *grouped.entry(pattern).or_insert(0.0) += rs.prob(i);
    }
    let mut outcomes: Vec<JointOutcome> = grouped
        .into_iter()
        .map(|(pattern, prob)| JointOutcome { pattern, prob })
        .collect();
    outcomes.sort_by_key(|o| o.pattern);
    Ok(outcomes)
}

/// Probability that workers with the given accuracies produce answer pattern
/// `answers` when the truth pattern is `truths`: the product over positions of
/// `acc` (agreement) or `1 − acc` (disagreement).
fn pattern_likelihood(answers: Pattern, truths: Pattern, accs: &[WorkerAccuracy]) -> f64 {
    let mut q = 1.0;
    for (t, acc) in accs.iter().enumerate() {
        let agree = ((answers >> t) & 1) == ((truths >> t) & 1);
        q *= if agree { acc.get() } else { 1.0 - acc.get() };
    }
    q
}

/// Expands a truth distribution into the full `2^k` answer distribution.
pub fn joint_answer_distribution(
    truth: &[JointOutcome],
    accs: &[WorkerAccuracy],
) -> Result<Vec<AnswerOutcome>, SelectError> {
    let k = accs.len();
    check_subset_len(k)?;
    let mut out = Vec::with_capacity(1 << k);
    for answers in 0..(1u64 << k) as Pattern {
        let prob = truth
            .iter()
            .map(|u| u.prob * pattern_likelihood(answers, u.pattern, accs))
            .sum();
        out.push(AnswerOutcome {
            pattern: answers,
            prob,
        });
    }
    Ok(out)
}

/// Likelihood of an answer pattern given that matching `matching` is correct:
/// answers are independent per question, each agreeing with the matching's
/// containment with probability `acc`.
pub fn answer_likelihood_given_matching(
    rs: &ResultSet,
    matching: usize,
    answers: Pattern,
    subset: &CorrespondenceSubset,
    accs: &[WorkerAccuracy],
) -> Result<f64, SelectError> {
    check_accs(subset, accs)?;
    let mut truths: Pattern = 0;
    for (t, &c) in subset.members().iter().enumerate() {
        rs.corr_probability(c)?;
        if rs.incidence().contains(matching, c) {
            truths |= 1 << t;
        }
    }
    Ok(pattern_likelihood(answers, truths, accs))
}

/// Joint entropy of an answer distribution, in bits.
pub fn joint_entropy_answers(answer_dist: &[AnswerOutcome]) -> f64 {
    entropy_bits(answer_dist.iter().map(|a| a.prob))
}

/// Joint entropy of a truth distribution, in bits.
pub fn joint_entropy_truth(truth_dist: &[JointOutcome]) -> f64 {
    entropy_bits(truth_dist.iter().map(|u| u.prob))
}

/// Expected uncertainty reduction of asking the whole subset, via the
/// identity `ΔH = H(D_A) − Σ_t H(W_t)`. Exact, and exponential in `k`.
pub fn delta_h_multi(
    rs: &ResultSet,
    subset: &CorrespondenceSubset,
    accs: &[WorkerAccuracy],
) -> Result<f64, SelectError> {
    check_accs(subset, accs)?;
    check_subset_len(subset.len())?;
    let truth = joint_truth_distribution(rs, subset)?;
    let answers = joint_answer_distribution(&truth, accs)?;
    let sum_hw: f64 = accs.iter().map(|&a| crowd_entropy(a)).sum();
    Ok(joint_entropy_answers(&answers) - sum_hw)
}

/// Reference evaluation from the definition: `H(R) − H(R | A_1..A_k)`,
/// expanding the conditional entropy over every answer pattern with its
/// posterior. Agrees with [`delta_h_multi`] to floating-point accuracy and is
/// kept as the oracle for it.
pub fn delta_h_multi_definition(
    rs: &ResultSet,
    subset: &CorrespondenceSubset,
    accs: &[WorkerAccuracy],
) -> Result<f64, SelectError> {
    check_accs(subset, accs)?;
    check_subset_len(subset.len())?;
    let k = subset.len();

    // Containment pattern per matching, computed once.
    let truths: Vec<Pattern> = (0..rs.n_matchings())
        .map(|i| {
            let mut t: Pattern = 0;
            for (pos, &c) in subset.members().iter().enumerate() {
                if rs.incidence().contains(i, c) {
                    t |= 1 << pos;
                }
            }
            t
        })
        .collect();
    for &c in subset.members() {
        rs.corr_probability(c)?;
    }

    let mut conditional = 0.0;
    let mut joint = Vec::with_capacity(rs.n_matchings());
    for answers in 0..(1u64 << k) as Pattern {
        joint.clear();
        let mut p_answers = 0.0;
        for (i, &truth) in truths.iter().enumerate() {
            let w = rs.prob(i) * pattern_likelihood(answers, truth, accs);
            p_answers += w;
            joint.push(w);
        }
        if p_answers <= 0.0 {
            continue;
        }
        let posterior_entropy = entropy_bits(joint.iter().map(|w| w / p_answers));
        conditional += p_answers * posterior_entropy;
    }
    Ok(rs.uncertainty() - conditional)
}

/// Sandwiches the joint answer entropy using only the `O(k·|R|)` truth
/// distribution:
///
/// * upper: `min { H(D_U) + Σ H(W_t),  −Σ log2(1 − P_t) }`
/// * lower: `max { −Σ log2 P_t,  H(D_U) + Σ H(W_t) + π log2 π +
///   (1−π) log2(1−π) − (1−π)·min(log2(2^k − 1), H(D_U)) }` with `π = Π P_t`.
///
/// Branches that diverge at `P_t = 1` (the `−log(1−P)` term) are skipped, so
/// the bounds stay finite and collapse onto `H(D_U)` for perfect workers and
/// onto `k` for coin-flipping ones.
pub fn entropy_bounds(
    rs: &ResultSet,
    subset: &CorrespondenceSubset,
    accs: &[WorkerAccuracy],
) -> Result<EntropyBounds, SelectError> {
    check_accs(subset, accs)?;
    let truth = joint_truth_distribution(rs, subset)?;
    Ok(bounds_from_truth_entropy(
        joint_entropy_truth(&truth),
        subset.len(),
        accs.iter().map(|a| a.get()),
    ))
}

/// Same bound formulas over a precomputed `H(D_U)`; also used by the greedy
/// dominance rule with mixed accuracies.
pub(crate) fn bounds_from_truth_entropy(
    h_du: f64,
    k: usize,
    accs: impl Iterator<Item = f64> + Clone,
) -> EntropyBounds {
    let sum_hw: f64 = accs.clone().map(crate::model::binary_entropy).sum();

    let upper_chain = h_du + sum_hw;
    let mut upper_floor = 0.0;
    let mut floor_finite = true;
    for p in accs.clone() {
        if p >= 1.0 {
            floor_finite = false;
            break;
        }
        upper_floor -= (1.0 - p).log2();
    }
    let upper = if floor_finite {
        upper_chain.min(upper_floor)
    } else {
        upper_chain
    };

    let lower_floor: f64 = accs.clone().map(|p| -(p.log2())).sum();
    let pi: f64 = accs.product();
    let plog = |x: f64| if x > 0.0 { x * x.log2() } else { 0.0 };
    let distinguish = if k >= 50 {
        k as f64
    } else {
        (((1u64 << k) - 1) as f64).log2()
    };
    let lower_chain =
        h_du + sum_hw + plog(pi) + plog(1.0 - pi) - (1.0 - pi) * distinguish.min(h_du);
    let lower = lower_floor.max(lower_chain);

    EntropyBounds { lower, upper }
}

/// Enumerates every size-`k` subset of the informative correspondences and
/// returns the exact optimum of `ΔH` with the winning subset (first in
/// lexicographic order on ties). Refuses instances whose subset count exceeds
/// `cap` (default sized for `|C| ≤ 14, k ≤ 4`).
pub fn brute_force_select(
    rs: &ResultSet,
    k: usize,
    acc_model: &AccuracyModel,
    cap: Option<u128>,
) -> Result<(CorrespondenceSubset, f64), SelectError> {
    const DEFAULT_CAP: u128 = 2048;
    acc_model.check_against(rs)?;
    check_subset_len(k)?;
    let cap = cap.unwrap_or(DEFAULT_CAP);

    let pool: Vec<crate::model::CorrespondenceId> = rs
        .marginals()
        .iter()
        .enumerate()
        .filter(|(_, &p)| ResultSet::is_informative_marginal(p))
        .map(|(i, _)| crate::model::CorrespondenceId(i as u32))
        .collect();
    if k == 0 || pool.len() < k {
        return Err(SelectError::NotEnoughInformative {
            k,
            available: pool.len(),
        });
    }

    let n_subsets = binomial(pool.len() as u128, k as u128);
    if n_subsets > cap {
        return Err(SelectError::EnumerationCapExceeded {
            subsets: n_subsets,
            cap,
        });
    }

    let combos = combinations(pool.len(), k);
    let evaluate = |combo: &Vec<usize>| -> Result<(f64, Vec<usize>), SelectError> {
        let members: Vec<_> = combo.iter().map(|&i| pool[i]).collect();
        let accs: Vec<_> = members.iter().map(|&c| acc_model.predicted(c)).collect();
        let subset = CorrespondenceSubset::new(members).expect("combinations are valid subsets");
        let value = delta_h_multi(rs, &subset, &accs)?;
        Ok((value, combo.clone()))
    };

    let best = best_combo(&combos, evaluate)?;
    let (value, combo) = best.ok_or(SelectError::NotEnoughInformative {
        k,
        available: pool.len(),
    })?;
    let members = combo.into_iter().map(|i| pool[i]).collect();
    Ok((
        CorrespondenceSubset::new(members).expect("winning combination is a valid subset"),
        value,
    ))
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        // advance to the next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        current[i] += 1;
        for j in (i + 1)..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

// Ties resolve to the lexicographically smallest combination in both paths.
#[cfg(feature = "parallel")]
fn best_combo<F>(
    combos: &[Vec<usize>],
    evaluate: F,
) -> Result<Option<(f64, Vec<usize>)>, SelectError>
where
    F: Fn(&Vec<usize>) -> Result<(f64, Vec<usize>), SelectError> + Sync,
{
    let scored: Result<Vec<(f64, Vec<usize>)>, SelectError> =
        combos.par_iter().map(&evaluate).collect();
    Ok(scored?.into_iter().reduce(|a, b| {
        if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    }))
}

#[cfg(not(feature = "parallel"))]
fn best_combo<F>(
    combos: &[Vec<usize>],
    evaluate: F,
) -> Result<Option<(f64, Vec<usize>)>, SelectError>
where
    F: Fn(&Vec<usize>) -> Result<(f64, Vec<usize>), SelectError> + Sync,
{
    let mut best: Option<(f64, Vec<usize>)> = None;
    for combo in combos {
        let out = evaluate(combo)?;
        if best.as_ref().map_or(true, |b| out.0 > b.0) {
            best = Some(out);
        }
    }
    Ok(best)
}
