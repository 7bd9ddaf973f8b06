//! Synthetic corpora, baselines and quality metrics for experiments.

mod experiment;

pub use experiment::{
    pruning_report, run_experiment, write_bundle, AlgorithmReport, AlgorithmSpec, CorpusSpec,
    CurvePoint, ExperimentConfig, GeneratorTemplate, LimitSpec, PredictedAccuracy, PruningRow,
    PruningTable, ReportBundle, RunSummary, SweepEntry, TruthFile,
};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate, CorrespondenceId, ModelError, ResultSet};
use crate::select::SelectError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("generator spec infeasible: {0}")]
    InfeasibleSpec(String),
    #[error("experiment config invalid: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Crowd(#[from] crate::crowd::CrowdError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Parameters of the synthetic corpus generator.
///
/// Matchings share a common core of `overlap · size` correspondences and draw
/// the rest privately, so `overlap` steers how correlated the candidate
/// matchings are. `concentration` is the symmetric Dirichlet parameter for
/// the probability vector: large values give near-uniform probabilities,
/// small ones a few dominant matchings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_matchings: usize,
    pub n_correspondences: usize,
    pub concentration: f64,
    pub overlap: f64,
    pub seed: u64,
}

/// A generated result set plus the matching designated as ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub result_set: ResultSet,
    /// Index of the designated correct matching.
    pub ground_truth: usize,
}

impl GeneratedCorpus {
    /// Correspondence ids of the ground-truth matching, for simulator config.
    pub fn truth_members(&self) -> Vec<u32> {
        self.result_set
            .matching(self.ground_truth)
            .members()
            .iter()
            .map(|c| c.0)
            .collect()
    }
}

const GENERATOR_ATTEMPTS: usize = 8;

/// Generates a validate-clean result set, deterministically per seed, and
/// designates a probability-weighted ground-truth matching.
pub fn generate(spec: &GeneratorSpec) -> Result<GeneratedCorpus, HarnessError> {
    if spec.n_matchings < 2 {
        return Err(HarnessError::InfeasibleSpec(
            "need at least two matchings".into(),
        ));
    }
    if spec.n_correspondences == 0 {
        return Err(HarnessError::InfeasibleSpec(
            "need at least one correspondence".into(),
        ));
    }
    if !(0.0..1.0).contains(&spec.overlap) {
        return Err(HarnessError::InfeasibleSpec(format!(
            "overlap {} outside [0, 1)",
            spec.overlap
        )));
    }
    if spec.concentration <= 0.0 {
        return Err(HarnessError::InfeasibleSpec(
            "concentration must be positive".into(),
        ));
    }
    if spec.overlap == 0.0 && spec.n_correspondences < spec.n_matchings {
        return Err(HarnessError::InfeasibleSpec(format!(
            "disjoint matchings need n_correspondences >= n_matchings ({} < {})",
            spec.n_correspondences, spec.n_matchings
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    for _ in 0..GENERATOR_ATTEMPTS {
        if let Some(corpus) = try_generate(spec, &mut rng)? {
            return Ok(corpus);
        }
    }
    Err(HarnessError::InfeasibleSpec(format!(
        "could not build {} distinct matchings over {} correspondences",
        spec.n_matchings, spec.n_correspondences
    )))
}

fn try_generate(
    spec: &GeneratorSpec,
    rng: &mut ChaCha12Rng,
) -> Result<Option<GeneratedCorpus>, HarnessError> {
    let n = spec.n_matchings;
    let m = spec.n_correspondences;

    let probs = dirichlet(spec.concentration, n, rng);

    let mut ids: Vec<u32> = (0..m as u32).collect();
    ids.shuffle(rng);

    let mut member_lists: Vec<Vec<u32>> = Vec::with_capacity(n);
    if spec.overlap == 0.0 {
        // disjoint blocks, one per matching, remainder spread round-robin
        let base = m / n;
        let mut cursor = 0usize;
        for i in 0..n {
            let extra = usize::from(i < m % n);
            let take = base + extra;
            member_lists.push(ids[cursor..cursor + take].to_vec());
            cursor += take;
        }
    } else {
        // a shared core present in every matching plus private draws
        let size = (m as f64 * 0.35).round().max(2.0).min(m as f64) as usize;
        let core_len = ((spec.overlap * size as f64).round() as usize).min(size - 1);
        let (core, pool) = ids.split_at(core_len);
        let private = size - core_len;
        if pool.len() < private {
            return Ok(None);
        }
        // redraw per matching so small subset pools still yield distinct sets
        let mut seen: std::collections::HashSet<Vec<u32>> = std::collections::HashSet::new();
        for _ in 0..n {
            let mut placed = false;
            for _ in 0..64 {
                let mut members = core.to_vec();
                let draw: Vec<u32> = pool.choose_multiple(rng, private).copied().collect();
                members.extend(draw);
                let mut key = members.clone();
                key.sort_unstable();
                if seen.insert(key) {
                    member_lists.push(members);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Ok(None);
            }
        }
        // every correspondence must appear somewhere
        let mut used = vec![false; m];
        for list in &member_lists {
            for &id in list {
                used[id as usize] = true;
            }
        }
        for (id, flag) in used.iter().enumerate() {
            if !flag {
                let target = rng.random_range(0..n);
                member_lists[target].push(id as u32);
            }
        }
    }

    // the leftover pass can still merge two sets; keep a final check
    let mut keys: Vec<Vec<u32>> = member_lists
        .iter()
        .map(|l| {
            let mut k = l.clone();
            k.sort_unstable();
            k
        })
        .collect();
    keys.sort();
    if keys.windows(2).any(|w| w[0] == w[1]) {
        return Ok(None);
    }

    let result_set = ResultSet::from_member_lists(member_lists, probs)?;
    debug_assert!(
        validate(&result_set).is_clean(),
        "{}",
        validate(&result_set)
    );

    // ground truth mirrors "pick the matching believed correct": a
    // probability-weighted draw
    let pick = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    let mut ground_truth = result_set.n_matchings() - 1;
    for (i, &p) in result_set.probs().iter().enumerate() {
        acc += p;
        if pick < acc {
            ground_truth = i;
            break;
        }
    }

    Ok(Some(GeneratedCorpus {
        result_set,
        ground_truth,
    }))
}

fn dirichlet(concentration: f64, n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let gamma = rand_distr::Gamma::new(concentration, 1.0)
        .expect("positive concentration is a valid Gamma shape");
    let mut weights: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(gamma)).collect();
    let mut total: f64 = weights.iter().sum();
    if total <= 0.0 {
        // extreme concentrations can underflow every draw; fall back to uniform
        weights = vec![1.0; n];
        total = n as f64;
    }
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Uniformly random informative correspondence: the baseline selector the
/// entropy-guided strategies are compared against.
pub fn random_baseline_select<R: Rng + ?Sized>(
    rs: &ResultSet,
    rng: &mut R,
) -> Result<CorrespondenceId, SelectError> {
    crate::frameworks::random_informative_pick(rs, rng)
}

/// Precision/recall of the maximum-probability matching against the
/// designated ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub precision: f64,
    pub recall: f64,
    pub map_matching: usize,
}

/// `map_matching` is the argmax-probability matching (ties to the lower
/// index); precision divides the overlap by its size, recall by the truth's.
pub fn evaluate_quality(rs: &ResultSet, ground_truth: usize) -> QualityReport {
    let mut map_matching = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &p) in rs.probs().iter().enumerate() {
        if p > best {
            best = p;
            map_matching = i;
        }
    }
    let map = rs.matching(map_matching);
    let truth = rs.matching(ground_truth);
    let shared = map.members().iter().filter(|c| truth.contains(**c)).count();
    QualityReport {
        precision: shared as f64 / map.len() as f64,
        recall: shared as f64 / truth.len() as f64,
        map_matching,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            n_matchings: 10,
            n_correspondences: 12,
            concentration: 1.0,
            overlap: 0.4,
            seed,
        }
    }

    #[test]
    fn generated_sets_are_clean_and_deterministic() {
        let a = generate(&spec(3)).unwrap();
        let b = generate(&spec(3)).unwrap();
        assert!(validate(&a.result_set).is_clean());
        assert_eq!(a.ground_truth, b.ground_truth);
        assert_eq!(a.result_set.probs(), b.result_set.probs());
        assert_eq!(
            crate::model::result_set_to_json(&a.result_set),
            crate::model::result_set_to_json(&b.result_set)
        );

        let c = generate(&spec(4)).unwrap();
        assert_ne!(a.result_set.probs(), c.result_set.probs());
    }

    #[test]
    fn zero_overlap_means_disjoint_matchings() {
        let corpus = generate(&GeneratorSpec {
            n_matchings: 5,
            n_correspondences: 17,
            concentration: 2.0,
            overlap: 0.0,
            seed: 9,
        })
        .unwrap();
        let rs = &corpus.result_set;
        for i in 0..rs.n_matchings() {
            for j in (i + 1)..rs.n_matchings() {
                assert!(rs.incidence().row(i).is_disjoint(rs.incidence().row(j)));
            }
        }
        // marginals equal their matching's probability
        for (i, m) in rs.matchings().iter().enumerate() {
            for &c in m.members() {
                assert_abs_diff_eq!(rs.corr_probability(c).unwrap(), rs.prob(i), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn high_concentration_approaches_uniform() {
        let corpus = generate(&GeneratorSpec {
            concentration: 1e6,
            ..spec(5)
        })
        .unwrap();
        let n = corpus.result_set.n_matchings() as f64;
        for &p in corpus.result_set.probs() {
            assert!(
                (p - 1.0 / n).abs() < 0.05 / n * n,
                "prob {p} far from uniform"
            );
        }
    }

    #[test]
    fn infeasible_specs_error() {
        assert!(matches!(
            generate(&GeneratorSpec {
                n_matchings: 1,
                ..spec(0)
            }),
            Err(HarnessError::InfeasibleSpec(_))
        ));
        assert!(matches!(
            generate(&GeneratorSpec {
                n_matchings: 10,
                n_correspondences: 4,
                overlap: 0.0,
                ..spec(0)
            }),
            Err(HarnessError::InfeasibleSpec(_))
        ));
        // two matchings over one correspondence cannot be distinct
        assert!(generate(&GeneratorSpec {
            n_matchings: 2,
            n_correspondences: 1,
            concentration: 1.0,
            overlap: 0.5,
            seed: 0,
        })
        .is_err());
    }

    #[test]
    fn every_correspondence_is_used() {
        for seed in 0..5 {
            let corpus = generate(&spec(seed)).unwrap();
            assert!(validate(&corpus.result_set).is_clean());
        }
    }

    #[test]
    fn quality_metrics() {
        let rs = crate::model::testutil::table1();

        // map (m1) equals truth
        let q = evaluate_quality(&rs, 0);
        assert_eq!(q.map_matching, 0);
        assert_eq!((q.precision, q.recall), (1.0, 1.0));

        // truth m3 = {c2,c3,c5}; map m1 = {c1,c2,c3,c4}: overlap {c2,c3}
        let q = evaluate_quality(&rs, 2);
        assert_abs_diff_eq!(q.precision, 2.0 / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.recall, 2.0 / 3.0, epsilon = 1e-12);

        // map strictly inside truth: precision 1, recall < 1
        let nested = crate::model::ResultSet::from_member_lists(
            vec![vec![0, 1], vec![0, 1, 2, 3]],
            vec![0.6, 0.4],
        )
        .unwrap();
        let q = evaluate_quality(&nested, 1);
        assert_eq!(q.map_matching, 0);
        assert_eq!(q.precision, 1.0);
        assert!(q.recall < 1.0);

        // disjoint map and truth
        let disjoint = crate::model::ResultSet::from_member_lists(
            vec![vec![0, 1], vec![2, 3]],
            vec![0.7, 0.3],
        )
        .unwrap();
        let q = evaluate_quality(&disjoint, 1);
        assert_eq!((q.precision, q.recall), (0.0, 0.0));
    }

    #[test]
    fn random_baseline_behaviour() {
        use rand::SeedableRng;
        let rs = crate::model::testutil::table1();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4);
        for _ in 0..50 {
            let pick = random_baseline_select(&rs, &mut rng).unwrap();
            // c3 has marginal 1 and may never be picked
            assert_ne!(pick.0, 2);
        }

        // reproducible per seed
        let seq = |seed| {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            (0..10)
                .map(|_| random_baseline_select(&rs, &mut rng).unwrap().0)
                .collect::<Vec<u32>>()
        };
        assert_eq!(seq(7), seq(7));

        // one informative candidate -> always that one
        let rs2 = crate::model::ResultSet::from_member_lists(
            vec![vec![0, 1], vec![0, 2]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        for _ in 0..10 {
            let pick = random_baseline_select(&rs2, &mut rng).unwrap();
            assert!(pick.0 == 1 || pick.0 == 2);
        }

        // none informative -> error
        let flat = crate::model::ResultSet::from_member_lists(vec![vec![0]], vec![1.0]).unwrap();
        assert!(matches!(
            random_baseline_select(&flat, &mut rng),
            Err(SelectError::NoInformativeCcq)
        ));
    }
}
