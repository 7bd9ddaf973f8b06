//! Result sets: possible matchings, correspondence marginals, incidence index
//! and Shannon-entropy uncertainty.
//!
//! A [`ResultSet`] is immutable after construction except for its probability
//! vector, which posterior updates replace wholesale (the structural part is
//! shared behind an `Arc`, so snapshotting beliefs along an experiment trace
//! is cheap).

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for "probabilities sum to one" on an already-built result set.
pub const PROB_SUM_TOL: f64 = 1e-9;
/// Tolerance accepted by the JSON loader before it refuses the input.
pub const LOAD_SUM_TOL: f64 = 1e-6;
/// Drift beyond which probability vectors are renormalized after updates.
pub(crate) const RENORM_DRIFT: f64 = 1e-12;
/// Marginals within this distance of 0 or 1 are treated as decided.
pub(crate) const MARGINAL_EPS: f64 = 1e-9;

/// Index of a correspondence within a result set's correspondence set.
///
/// Ids are dense `0..n` and assigned in first-appearance order over the
/// matching list; ties elsewhere break on the lower id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrespondenceId(pub u32);

impl CorrespondenceId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CorrespondenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Display payload of a correspondence. The attribute subsets are opaque to
/// the selection math (an n:m correspondence is still one yes/no question);
/// they only feed display and the optional disjointness validation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorrespondenceInfo {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub source: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub target: Vec<String>,
}

impl CorrespondenceInfo {
    pub fn labeled(label: impl Into<String>) -> Self {
        CorrespondenceInfo {
            label: label.into(),
            source: Vec::new(),
            target: Vec::new(),
        }
    }
}

/// A candidate matching: a non-empty set of correspondences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PossibleMatching {
    label: String,
    members: Vec<CorrespondenceId>, // sorted, unique
}

impl PossibleMatching {
    pub fn new(
        label: impl Into<String>,
        mut members: Vec<CorrespondenceId>,
    ) -> Result<Self, ModelError> {
        let label = label.into();
        if members.is_empty() {
            return Err(ModelError::EmptyMatching { label });
        }
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateMember { label });
        }
        Ok(PossibleMatching { label, members })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Members in ascending id order.
    pub fn members(&self) -> &[CorrespondenceId] {
        &self.members
    }

    pub fn contains(&self, c: CorrespondenceId) -> bool {
        self.members.binary_search(&c).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Binary incidence index `M_R`: one row per matching, one column per
/// correspondence, bit set iff the correspondence is in the matching.
///
/// The matrix depends only on the matchings, never on probabilities, so it is
/// built once per structure and shared by every posterior snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    rows: Vec<FixedBitSet>,
    n_cols: usize,
}

impl IncidenceMatrix {
    /// Builds the incidence bit-matrix. Pure in the matchings: repeated calls
    /// are bit-identical.
    pub fn build(matchings: &[PossibleMatching], n_correspondences: usize) -> IncidenceMatrix {
        let rows = matchings
            .iter()
            .map(|m| {
                let mut row = FixedBitSet::with_capacity(n_correspondences);
                for c in m.members() {
                    row.insert(c.index());
                }
                row
            })
            .collect();
        IncidenceMatrix {
            rows,
            n_cols: n_correspondences,
        }
    }

    pub fn contains(&self, matching: usize, c: CorrespondenceId) -> bool {
        self.rows[matching].contains(c.index())
    }

    pub fn row(&self, matching: usize) -> &FixedBitSet {
        &self.rows[matching]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
}

/// An ordered, duplicate-free set of correspondences to ask about jointly.
/// Order matters only for indexing answer/truth tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceSubset {
    members: Vec<CorrespondenceId>,
}

impl CorrespondenceSubset {
    pub fn new(members: Vec<CorrespondenceId>) -> Result<Self, ModelError> {
        if members.is_empty() {
            return Err(ModelError::EmptySubset);
        }
        let mut seen = members.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateSubsetMember);
        }
        Ok(CorrespondenceSubset { members })
    }

    pub fn members(&self) -> &[CorrespondenceId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("matching '{label}' has no members")]
    EmptyMatching { label: String },
    #[error("matching '{label}' repeats a correspondence")]
    DuplicateMember { label: String },
    #[error("correspondence subset is empty")]
    EmptySubset,
    #[error("correspondence subset repeats a member")]
    DuplicateSubsetMember,
    #[error("result set has no matchings")]
    NoMatchings,
    #[error("{probs} probabilities for {matchings} matchings")]
    LengthMismatch { matchings: usize, probs: usize },
    #[error("matching '{label}' references unknown correspondence id {id}")]
    UnknownMember { label: String, id: u32 },
    #[error("unknown correspondence id {0}")]
    UnknownCorrespondence(u32),
    #[error("correspondence ids are not dense 0..{expected} (got {got})")]
    NonDenseIds { expected: usize, got: u32 },
    #[error("probabilities sum to {sum}, outside tolerance {tol}")]
    ProbSum { sum: f64, tol: f64 },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
struct ResultSetCore {
    correspondences: Vec<CorrespondenceInfo>,
    matchings: Vec<PossibleMatching>,
    incidence: IncidenceMatrix,
}

/// Possible matchings with a probability vector and an incidence index.
///
/// The structural part (matchings, incidence, labels) is immutable and shared;
/// [`ResultSet::with_probs`] produces a new value reusing it. Cloning is cheap.
#[derive(Debug, Clone)]
pub struct ResultSet {
    core: Arc<ResultSetCore>,
    probs: Vec<f64>,
}

impl ResultSet {
    /// Assembles a result set, checking only structural consistency: at least
    /// one matching, one probability per matching, member ids within range.
    /// Probabilistic invariants are the business of [`validate`].
    pub fn new(
        correspondences: Vec<CorrespondenceInfo>,
        matchings: Vec<PossibleMatching>,
        probs: Vec<f64>,
    ) -> Result<ResultSet, ModelError> {
        if matchings.is_empty() {
            return Err(ModelError::NoMatchings);
        }
        if matchings.len() != probs.len() {
            return Err(ModelError::LengthMismatch {
                matchings: matchings.len(),
                probs: probs.len(),
            });
        }
        let n = correspondences.len();
        for m in &matchings {
            if let Some(c) = m.members().iter().find(|c| c.index() >= n) {
                return Err(ModelError::UnknownMember {
                    label: m.label().to_string(),
                    id: c.0,
                });
            }
        }
        let incidence = IncidenceMatrix::build(&matchings, n);
        Ok(ResultSet {
            core: Arc::new(ResultSetCore {
                correspondences,
                matchings,
                incidence,
            }),
            probs,
        })
    }

    /// Builds a result set from bare member lists, assigning ids in
    /// first-appearance order and generating `c{i}`/`m{i}` labels.
    pub fn from_member_lists(
        member_lists: Vec<Vec<u32>>,
        probs: Vec<f64>,
    ) -> Result<ResultSet, ModelError> {
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut matchings = Vec::with_capacity(member_lists.len());
        for (i, raw) in member_lists.into_iter().enumerate() {
            let members = raw
                .into_iter()
                .map(|orig| {
                    let next = remap.len() as u32;
                    CorrespondenceId(*remap.entry(orig).or_insert(next))
                })
                .collect();
            matchings.push(PossibleMatching::new(format!("m{}", i + 1), members)?);
        }
        let correspondences = (0..remap.len())
            .map(|j| CorrespondenceInfo::labeled(format!("c{}", j + 1)))
            .collect();
        ResultSet::new(correspondences, matchings, probs)
    }

    /// Same structure, new probability vector (posterior snapshot).
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<ResultSet, ModelError> {
        if probs.len() != self.core.matchings.len() {
            return Err(ModelError::LengthMismatch {
                matchings: self.core.matchings.len(),
                probs: probs.len(),
            });
        }
        Ok(ResultSet {
            core: Arc::clone(&self.core),
            probs,
        })
    }

    pub fn n_matchings(&self) -> usize {
        self.core.matchings.len()
    }

    pub fn n_correspondences(&self) -> usize {
        self.core.correspondences.len()
    }

    pub fn matchings(&self) -> &[PossibleMatching] {
        &self.core.matchings
    }

    pub fn matching(&self, i: usize) -> &PossibleMatching {
        &self.core.matchings[i]
    }

    pub fn correspondences(&self) -> &[CorrespondenceInfo] {
        &self.core.correspondences
    }

    pub fn correspondence_label(&self, c: CorrespondenceId) -> &str {
        &self.core.correspondences[c.index()].label
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, matching: usize) -> f64 {
        self.probs[matching]
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.core.incidence
    }

    pub fn ids(&self) -> impl Iterator<Item = CorrespondenceId> {
        (0..self.core.correspondences.len() as u32).map(CorrespondenceId)
    }

    fn check_id(&self, c: CorrespondenceId) -> Result<(), ModelError> {
        if c.index() >= self.core.correspondences.len() {
            Err(ModelError::UnknownCorrespondence(c.0))
        } else {
            Ok(())
        }
    }

    /// Marginal probability that `c` is in the correct matching: the sum of
    /// probabilities of matchings containing it.
    pub fn corr_probability(&self, c: CorrespondenceId) -> Result<f64, ModelError> {
        self.check_id(c)?;
        let mut p = 0.0;
        for (i, row) in self.core.incidence.rows.iter().enumerate() {
            if row.contains(c.index()) {
                p += self.probs[i];
            }
        }
        Ok(p)
    }

    /// Probability that every member of `u` is in the correct matching: the
    /// sum over matchings containing all of them.
    pub fn subset_probability(&self, u: &CorrespondenceSubset) -> Result<f64, ModelError> {
        for &c in u.members() {
            self.check_id(c)?;
        }
        let mut p = 0.0;
        'rows: for (i, row) in self.core.incidence.rows.iter().enumerate() {
            for &c in u.members() {
                if !row.contains(c.index()) {
                    continue 'rows;
                }
            }
            p += self.probs[i];
        }
        Ok(p)
    }

    /// All marginals at once; `marginals()[c.index()]` is `corr_probability(c)`.
    pub fn marginals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.core.correspondences.len()];
        for (i, m) in self.core.matchings.iter().enumerate() {
            let p = self.probs[i];
            for c in m.members() {
                out[c.index()] += p;
            }
        }
        out
    }

    /// Shannon entropy of the matching distribution, in bits. Zero-probability
    /// matchings contribute zero.
    pub fn uncertainty(&self) -> f64 {
        entropy_bits(self.probs.iter().copied())
    }

    /// `true` iff the marginal is strictly informative (neither decided-in nor
    /// decided-out, up to numeric noise).
    pub(crate) fn is_informative_marginal(p: f64) -> bool {
        p > MARGINAL_EPS && p < 1.0 - MARGINAL_EPS
    }
}

/// Entropy in bits of an arbitrary weight iterator, with `0·log 0 = 0`.
pub fn entropy_bits<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    let mut h = 0.0;
    for p in probs {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// One invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ProbOutOfRange { matching: usize, prob: f64 },
    ProbSumMismatch { sum: f64 },
    DuplicateMatching { first: usize, second: usize },
    UnusedCorrespondence { id: CorrespondenceId },
    AttributeOverlap { matching: usize, attribute: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ProbOutOfRange { matching, prob } => {
                write!(f, "matching {matching}: probability {prob} outside [0,1]")
            }
            Violation::ProbSumMismatch { sum } => write!(f, "probabilities sum to {sum}, not 1"),
            Violation::DuplicateMatching { first, second } => {
                write!(f, "matchings {first} and {second} are identical sets")
            }
            Violation::UnusedCorrespondence { id } => {
                write!(f, "correspondence {id} appears in no matching")
            }
            Violation::AttributeOverlap {
                matching,
                attribute,
            } => {
                write!(
                    f,
                    "matching {matching}: attribute '{attribute}' is in more than one correspondence"
                )
            }
        }
    }
}

/// Everything [`validate`] found wrong; empty iff all invariants hold.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

/// Checks every result-set invariant and reports all violations rather than
/// failing on the first: probabilities in `[0,1]` summing to one, matchings
/// pairwise distinct as sets, every correspondence used by some matching, and
/// attribute disjointness within each matching where attribute sets are known.
pub fn validate(rs: &ResultSet) -> ValidationReport {
    let mut violations = Vec::new();

    let mut sum = 0.0;
    for (i, &p) in rs.probs().iter().enumerate() {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            violations.push(Violation::ProbOutOfRange {
                matching: i,
                prob: p,
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        violations.push(Violation::ProbSumMismatch { sum });
    }

    // Members are kept sorted, so set equality is plain vector equality.
    for i in 0..rs.n_matchings() {
        for j in (i + 1)..rs.n_matchings() {
            if rs.matching(i).members() == rs.matching(j).members() {
                violations.push(Violation::DuplicateMatching {
                    first: i,
                    second: j,
                });
            }
        }
    }

    let mut used = vec![false; rs.n_correspondences()];
    for m in rs.matchings() {
        for c in m.members() {
            used[c.index()] = true;
        }
    }
    for (i, u) in used.iter().enumerate() {
        if !u {
            violations.push(Violation::UnusedCorrespondence {
                id: CorrespondenceId(i as u32),
            });
        }
    }

    let have_attrs = rs
        .correspondences()
        .iter()
        .any(|c| !c.source.is_empty() || !c.target.is_empty());
    if have_attrs {
        for (mi, m) in rs.matchings().iter().enumerate() {
            let mut seen: HashMap<String, ()> = HashMap::new();
            for c in m.members() {
                let info = &rs.correspondences()[c.index()];
                for attr in info
                    .source
                    .iter()
                    .map(|a| format!("s:{a}"))
                    .chain(info.target.iter().map(|a| format!("t:{a}")))
                {
                    if seen.insert(attr.clone(), ()).is_some() {
                        violations.push(Violation::AttributeOverlap {
                            matching: mi,
                            attribute: attr[2..].to_string(),
                        });
                    }
                }
            }
        }
    }

    ValidationReport { violations }
}

// --- JSON ingestion ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CorrespondenceJson {
    id: u32,
    label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    source: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    target: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MatchingJson {
    label: String,
    prob: f64,
    members: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct ResultSetJson {
    correspondences: Vec<CorrespondenceJson>,
    matchings: Vec<MatchingJson>,
}

/// A parsed result set plus any loader warnings (e.g. renormalization).
#[derive(Debug)]
pub struct LoadedResultSet {
    pub result_set: ResultSet,
    pub warnings: Vec<String>,
}

/// Parses the interchange format:
///
/// ```json
/// { "correspondences": [{"id": 0, "label": "c1"}],
///   "matchings": [{"label": "m1", "prob": 1.0, "members": [0]}] }
/// ```
///
/// Ids must be dense `0..n`. Probabilities must sum to one within `1e-6`; any
/// drift is renormalized away with a warning.
pub fn result_set_from_json(json: &str) -> Result<LoadedResultSet, ModelError> {
    let raw: ResultSetJson = serde_json::from_str(json)?;
    let mut warnings = Vec::new();

    let n = raw.correspondences.len();
    let mut infos = vec![None; n];
    for c in raw.correspondences {
        if c.id as usize >= n || infos[c.id as usize].is_some() {
            return Err(ModelError::NonDenseIds {
                expected: n,
                got: c.id,
            });
        }
        infos[c.id as usize] = Some(CorrespondenceInfo {
            label: c.label,
            source: c.source,
            target: c.target,
        });
    }
    let correspondences: Vec<CorrespondenceInfo> = infos.into_iter().flatten().collect();

    let mut matchings = Vec::with_capacity(raw.matchings.len());
    let mut probs = Vec::with_capacity(raw.matchings.len());
    for m in raw.matchings {
        let members = m.members.into_iter().map(CorrespondenceId).collect();
        matchings.push(PossibleMatching::new(m.label, members)?);
        probs.push(m.prob);
    }

    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > LOAD_SUM_TOL {
        return Err(ModelError::ProbSum {
            sum,
            tol: LOAD_SUM_TOL,
        });
    }
    if (sum - 1.0).abs() > RENORM_DRIFT && sum > 0.0 {
        warnings.push(format!(
            "probabilities summed to {sum:.12}; renormalized to 1"
        ));
        for p in &mut probs {
            *p /= sum;
        }
    }

    let result_set = ResultSet::new(correspondences, matchings, probs)?;
    Ok(LoadedResultSet {
        result_set,
        warnings,
    })
}

/// Serializes a result set to the interchange format (pretty-printed).
pub fn result_set_to_json(rs: &ResultSet) -> String {
    let doc = ResultSetJson {
        correspondences: rs
            .correspondences()
            .iter()
            .enumerate()
            .map(|(i, c)| CorrespondenceJson {
                id: i as u32,
                label: c.label.clone(),
                source: c.source.clone(),
                target: c.target.clone(),
            })
            .collect(),
        matchings: rs
            .matchings()
            .iter()
            .zip(rs.probs())
            .map(|(m, &p)| MatchingJson {
                label: m.label().to_string(),
                prob: p,
                members: m.members().iter().map(|c| c.0).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("result set serialization cannot fail")
}

pub fn load_result_set(path: &std::path::Path) -> Result<LoadedResultSet, ModelError> {
    let text = std::fs::read_to_string(path)?;
    result_set_from_json(&text)
}


#[cfg(test)]
mod tests {
    use super::testutil::{c, table1};
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Brute-force marginal: enumerate matchings and test membership directly,
    /// independent of the incidence index.
    fn oracle_marginal(rs: &ResultSet, id: CorrespondenceId) -> f64 {
        rs.matchings()
            .iter()
            .zip(rs.probs())
            .filter(|(m, _)| m.members().contains(&id))
            .map(|(_, p)| p)
            .sum()
    }

    fn oracle_subset(rs: &ResultSet, ids: &[CorrespondenceId]) -> f64 {
        rs.matchings()
            .iter()
            .zip(rs.probs())
            .filter(|(m, _)| ids.iter().all(|id| m.members().contains(id)))
            .map(|(_, p)| p)
            .sum()
    }

    #[test]
    fn table1_is_clean() {
        let rs = table1();
        assert!(validate(&rs).is_clean(), "{}", validate(&rs));
    }

    #[test]
    fn table1_marginals() {
        let rs = table1();
        assert_abs_diff_eq!(rs.corr_probability(c(0)).unwrap(), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(rs.corr_probability(c(1)).unwrap(), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(rs.corr_probability(c(2)).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rs.corr_probability(c(3)).unwrap(), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(rs.corr_probability(c(4)).unwrap(), 0.25, epsilon = 1e-12);
        for id in rs.ids() {
            assert_eq!(rs.corr_probability(id).unwrap(), oracle_marginal(&rs, id));
        }
        assert!(rs.corr_probability(CorrespondenceId(9)).is_err());
    }

    #[test]
    fn subset_probability_matches_enumeration() {
        let rs = table1();
        let u = CorrespondenceSubset::new(vec![c(0), c(1)]).unwrap();
        // only m1 contains both c1 and c2
        assert_abs_diff_eq!(rs.subset_probability(&u).unwrap(), 0.45, epsilon = 1e-12);
        assert_eq!(
            rs.subset_probability(&u).unwrap(),
            oracle_subset(&rs, &[c(0), c(1)])
        );

        let u = CorrespondenceSubset::new(vec![c(1), c(4)]).unwrap();
        // only m3 contains both c2 and c5
        assert_abs_diff_eq!(rs.subset_probability(&u).unwrap(), 0.25, epsilon = 1e-12);

        // singleton subset reduces to the marginal
        for id in rs.ids() {
            let u = CorrespondenceSubset::new(vec![id]).unwrap();
            assert_eq!(
                rs.subset_probability(&u).unwrap(),
                rs.corr_probability(id).unwrap()
            );
        }
    }

    #[test]
    fn uncertainty_examples() {
        let rs = table1();
        // -0.45 log .45 - 0.3 log .3 - 0.25 log .25, frozen from direct evaluation
        assert_abs_diff_eq!(rs.uncertainty(), 1.5394910703001345, epsilon = 1e-12);

        let single = ResultSet::from_member_lists(vec![vec![0]], vec![1.0]).unwrap();
        assert_eq!(single.uncertainty(), 0.0);

        for n in [2usize, 4, 7, 16] {
            let lists = (0..n).map(|i| vec![i as u32]).collect();
            let rs = ResultSet::from_member_lists(lists, vec![1.0 / n as f64; n]).unwrap();
            assert_abs_diff_eq!(rs.uncertainty(), (n as f64).log2(), epsilon = 1e-9);
        }
    }

    #[test]
    fn incidence_rows() {
        let rs = table1();
        let inc = rs.incidence();
        // m3 = {c2, c3, c5} -> columns 1, 2, 4
        let bits: Vec<usize> = inc.row(2).ones().collect();
        assert_eq!(bits, vec![1, 2, 4]);

        // rebuilt matrix is bit-identical
        let again = IncidenceMatrix::build(rs.matchings(), rs.n_correspondences());
        assert_eq!(&again, inc);

        // one matching with all correspondences -> all-ones row
        let all =
            ResultSet::from_member_lists(vec![vec![0, 1, 2], vec![0]], vec![0.6, 0.4]).unwrap();
        assert_eq!(all.incidence().row(0).count_ones(..), 3);

        // disjoint matchings -> disjoint rows
        let disj =
            ResultSet::from_member_lists(vec![vec![0, 1], vec![2, 3]], vec![0.5, 0.5]).unwrap();
        assert!(disj.incidence().row(0).is_disjoint(disj.incidence().row(1)));
    }

    #[test]
    fn validate_reports_violations() {
        // probabilities not summing to one
        let rs = ResultSet::from_member_lists(vec![vec![0], vec![1]], vec![0.5, 0.6]).unwrap();
        let report = validate(&rs);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ProbSumMismatch { .. })));

        // duplicate matching rows
        let rs =
            ResultSet::from_member_lists(vec![vec![0, 1], vec![1, 0]], vec![0.5, 0.5]).unwrap();
        let report = validate(&rs);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::DuplicateMatching {
                first: 0,
                second: 1
            }
        )));

        // out-of-range probability
        let rs = ResultSet::from_member_lists(vec![vec![0], vec![1]], vec![1.2, -0.2]).unwrap();
        assert!(validate(&rs)
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ProbOutOfRange { .. })));

        // unused correspondence id
        let rs = ResultSet::new(
            vec![
                CorrespondenceInfo::labeled("a"),
                CorrespondenceInfo::labeled("b"),
            ],
            vec![PossibleMatching::new("m", vec![CorrespondenceId(0)]).unwrap()],
            vec![1.0],
        )
        .unwrap();
        assert!(validate(&rs)
            .violations
            .iter()
            .any(|v| matches!(v, Violation::UnusedCorrespondence { id } if id.0 == 1)));
    }

    #[test]
    fn validate_attribute_overlap() {
        let mut c0 = CorrespondenceInfo::labeled("c0");
        c0.source = vec!["Name".into()];
        let mut c1 = CorrespondenceInfo::labeled("c1");
        c1.source = vec!["Name".into()];
        let m = PossibleMatching::new("m", vec![CorrespondenceId(0), CorrespondenceId(1)]).unwrap();
        let rs = ResultSet::new(vec![c0, c1], vec![m], vec![1.0]).unwrap();
        assert!(validate(&rs)
            .violations
            .iter()
            .any(|v| matches!(v, Violation::AttributeOverlap { .. })));
    }

    #[test]
    fn matching_construction_guards() {
        assert!(matches!(
            PossibleMatching::new("m", vec![]),
            Err(ModelError::EmptyMatching { .. })
        ));
        assert!(matches!(
            PossibleMatching::new("m", vec![c(0), c(0)]),
            Err(ModelError::DuplicateMember { .. })
        ));
        assert!(CorrespondenceSubset::new(vec![]).is_err());
        assert!(CorrespondenceSubset::new(vec![c(0), c(0)]).is_err());
    }

    #[test]
    fn json_round_trip_and_tolerances() {
        let rs = table1();
        let json = result_set_to_json(&rs);
        let loaded = result_set_from_json(&json).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.result_set.probs(), rs.probs());
        assert_eq!(loaded.result_set.n_correspondences(), 5);

        // small drift renormalizes with a warning
        let drifted = json.replace("0.45", "0.4500001");
        let loaded = result_set_from_json(&drifted).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        let sum: f64 = loaded.result_set.probs().iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-15);

        // large drift is refused
        let broken = json.replace("0.45", "0.75");
        assert!(matches!(
            result_set_from_json(&broken),
            Err(ModelError::ProbSum { .. })
        ));

        // non-dense ids are refused
        let bad = r#"{"correspondences":[{"id":1,"label":"x"}],"matchings":[{"label":"m","prob":1.0,"members":[1]}]}"#;
        assert!(matches!(
            result_set_from_json(bad),
            Err(ModelError::NonDenseIds { .. })
        ));
    }

    #[test]
    fn with_probs_shares_structure() {
        let rs = table1();
        let snap = rs.with_probs(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(snap.n_matchings(), 3);
        assert_eq!(rs.probs(), &[0.45, 0.3, 0.25]);
        assert!(std::ptr::eq(
            rs.matchings().as_ptr(),
            snap.matchings().as_ptr()
        ));
        assert!(rs.with_probs(vec![0.1]).is_err());
    }
}
