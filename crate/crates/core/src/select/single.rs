//! Single-CCQ selection.
//!
//! The expected entropy reduction of asking one question equals the entropy
//! of its answer minus the entropy of the crowd, `ΔH = H(A) − H(W)`. For a
//! fixed accuracy that is a symmetric, unimodal function of the marginal with
//! its peak at 0.5, so the best single question is always the correspondence
//! whose marginal lies closest to 0.5, and no posterior needs evaluating.
//! The pruned variant exploits the same fact while scanning incidence
//! columns, abandoning a column as soon as its accumulated mass proves it
//! cannot win.

use crate::belief::{
    answer_distribution, answer_entropy, crowd_entropy, posterior_update, Answer, AnswerValue,
    WorkerAccuracy,
};
use crate::model::{CorrespondenceId, ResultSet};
use crate::select::{AccuracyModel, SelectError};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Outcome of a single-CCQ query: the chosen correspondence, its marginal,
/// and the expected uncertainty reduction at the predicted accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcqCandidate {
    pub ccq: CorrespondenceId,
    pub marginal: f64,
    pub delta_h: f64,
}

/// Distances to 0.5 are compared at this resolution so that mathematically
/// tied marginals (which differ by an ulp depending on summation order) break
/// the tie on the id, not on floating-point noise.
fn dist_key(dist: f64) -> u64 {
    (dist * 1e12).round() as u64
}

/// Expected uncertainty reduction via the identity `H(A) − H(W)`.
///
/// Non-negative for any marginal and any accuracy in `[0.5, 1]`; the tiny
/// negative residue floating point can produce is clamped away.
pub fn delta_h_single(p_c: f64, acc: WorkerAccuracy) -> f64 {
    (answer_entropy(p_c, acc) - crowd_entropy(acc)).max(0.0)
}

/// Reference evaluation of the same quantity from its definition:
/// `H(R) − H(R|A)`, expanding the conditional entropy over both answers with
/// their posterior distributions. Slow but direct; kept as the oracle the
/// identity is tested against.
pub fn delta_h_single_definition(
    rs: &ResultSet,
    c: CorrespondenceId,
    acc: WorkerAccuracy,
) -> Result<f64, SelectError> {
    let p_c = rs.corr_probability(c)?;
    let (p_yes, p_no) = answer_distribution(p_c, acc);
    let mut conditional = 0.0;
    for (value, p_answer) in [(AnswerValue::Yes, p_yes), (AnswerValue::No, p_no)] {
        if p_answer <= 0.0 {
            continue;
        }
        let posterior = posterior_update(
            rs,
            &Answer {
                ccq: c,
                value,
                accuracy: acc,
            },
        )?;
        conditional += p_answer * posterior.uncertainty();
    }
    Ok(rs.uncertainty() - conditional)
}

fn candidate(acc_model: &AccuracyModel, c: CorrespondenceId, marginal: f64) -> CcqCandidate {
    CcqCandidate {
        ccq: c,
        marginal,
        delta_h: delta_h_single(marginal, acc_model.predicted(c)),
    }
}

/// Answers the single-CCQ selection query: the correspondence whose marginal
/// is closest to 0.5, ties broken on the lower id. Errors when every marginal
/// is already 0 or 1.
pub fn select_sccq(rs: &ResultSet, acc_model: &AccuracyModel) -> Result<CcqCandidate, SelectError> {
    acc_model.check_against(rs)?;
    let mut best: Option<(u64, CorrespondenceId, f64)> = None;
    for (i, &p) in rs.marginals().iter().enumerate() {
        if !ResultSet::is_informative_marginal(p) {
            continue;
        }
        let key = dist_key((p - 0.5).abs());
        if best.is_none_or(|(bk, _, _)| key < bk) {
            best = Some((key, CorrespondenceId(i as u32), p));
        }
    }
    let (_, c, p) = best.ok_or(SelectError::NoInformativeCcq)?;
    Ok(candidate(acc_model, c, p))
}

/// Identical contract to [`select_sccq`], implemented as an accumulate-and-
/// prune scan over incidence columns: matchings are visited in descending
/// probability order and a column is abandoned once `P_acc − 0.5` already
/// exceeds the best distance seen, since the final marginal can only grow.
pub fn select_sccq_pruned(
    rs: &ResultSet,
    acc_model: &AccuracyModel,
) -> Result<CcqCandidate, SelectError> {
    acc_model.check_against(rs)?;

    // Scan heavy rows first so the accumulated mass crosses the pruning
    // threshold as early as possible.
    let mut order: Vec<usize> = (0..rs.n_matchings()).collect();
    order.sort_by(|&a, &b| {
        rs.prob(b)
            .partial_cmp(&rs.prob(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let scan_column = |col: usize, best_key: u64| -> Option<(u64, usize, f64)> {
        let c = CorrespondenceId(col as u32);
        let mut mass = 0.0;
        for &row in &order {
            if rs.incidence().contains(row, c) {
                mass += rs.prob(row);
                // The marginal only grows from here; once it is pinned
                // strictly above the best distance the column cannot win.
                // Ties are left alive so id ordering resolves them.
                if mass > 0.5 && dist_key(mass - 0.5) > best_key {
                    return None;
                }
            }
        }
        // Surviving columns re-sum in canonical row order, so the reported
        // marginal is bit-identical to the exhaustive path's.
        let p = rs.corr_probability(c).expect("column index is in range");
        if !ResultSet::is_informative_marginal(p) {
            return None;
        }
        Some((dist_key((p - 0.5).abs()), col, p))
    };

    let best = scan_columns(rs.n_correspondences(), scan_column);
    let (_, col, p) = best.ok_or(SelectError::NoInformativeCcq)?;
    Ok(candidate(acc_model, CorrespondenceId(col as u32), p))
}

#[cfg(feature = "parallel")]
fn scan_columns<F>(n: usize, scan: F) -> Option<(u64, usize, f64)>
where
    F: Fn(usize, u64) -> Option<(u64, usize, f64)> + Sync,
{
    use std::sync::atomic::{AtomicU64, Ordering};
    // Shared monotone best key; stale reads only weaken pruning, never
    // change the winner.
    let best_key = AtomicU64::new(u64::MAX);
    (0..n)
        .into_par_iter()
        .filter_map(|col| {
            let found = scan(col, best_key.load(Ordering::Relaxed))?;
            best_key.fetch_min(found.0, Ordering::Relaxed);
            Some(found)
        })
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)))
}

#[cfg(not(feature = "parallel"))]
fn scan_columns<F>(n: usize, scan: F) -> Option<(u64, usize, f64)>
where
    F: Fn(usize, u64) -> Option<(u64, usize, f64)> + Sync,
{
    let mut best: Option<(u64, usize, f64)> = None;
    for col in 0..n {
        let threshold = best.map_or(u64::MAX, |(k, _, _)| k);
        if let Some(found) = scan(col, threshold) {
            if best.map_or(true, |(k, _, _)| found.0 < k) {
                best = Some(found);
            }
        }
    }
    best
}
