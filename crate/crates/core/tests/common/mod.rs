//! Shared fixtures for integration tests.
#![allow(dead_code)] // each test target uses its own subset

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use ccq_core::ResultSet;

/// The running example: m1 = {c1,c2,c3,c4} @ .45, m2 = {c1,c3,c4} @ .3,
/// m3 = {c2,c3,c5} @ .25; ids in first-appearance order (c1..c5 -> 0..4).
pub fn table1() -> ResultSet {
    ResultSet::from_member_lists(
        vec![vec![1, 2, 3, 4], vec![1, 3, 4], vec![5, 2, 3]],
        vec![0.45, 0.3, 0.25],
    )
    .unwrap()
}

/// A random result set, independent of the production generator: arbitrary
/// membership sets with normalized random weights.
pub fn random_result_set(
    rng: &mut ChaCha12Rng,
    max_matchings: usize,
    max_universe: u32,
) -> ResultSet {
    loop {
        let n = rng.random_range(2..=max_matchings);
        let universe = rng.random_range(2..=max_universe);
        let lists: Vec<Vec<u32>> = (0..n)
            .map(|_| {
                let mut members: Vec<u32> =
                    (0..universe).filter(|_| rng.random_bool(0.5)).collect();
                if members.is_empty() {
                    members.push(rng.random_range(0..universe));
                }
                members
            })
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let probs = weights.iter().map(|w| w / total).collect();
        if let Ok(rs) = ResultSet::from_member_lists(lists, probs) {
            return rs;
        }
    }
}
