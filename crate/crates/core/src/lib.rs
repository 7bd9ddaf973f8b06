//! Uncertainty reduction for probabilistic schema matchings via crowd questions.
//!
//! A schema-matching tool emits a *result set*: a list of possible matchings,
//! each a set of attribute correspondences, with probabilities summing to one.
//! This crate selects *correspondence correctness questions* (CCQs), yes/no
//! questions about individual correspondences, so that the expected Shannon
//! entropy of the matching distribution drops as fast as possible per answer,
//! accounting for crowd workers that answer correctly only with probability
//! `P_W ∈ [0.5, 1]`.
//!
//! The crate is organised around the lifecycle of a crowdsourced matching job:
//!
//! * [`model`]: result sets, correspondence marginals, incidence index,
//!   entropy, validation and JSON ingestion.
//! * [`belief`]: noisy-answer model and Bayesian posterior updates.
//! * [`select`]: single-CCQ selection (closest-to-0.5 rule with a pruned
//!   scan), joint distributions over CCQ subsets, entropy bounds, greedy
//!   submodular selection with a partition index and pruning rules, and an
//!   exact brute-force oracle.
//! * [`crowd`]: backend abstraction with a deterministic discrete-event
//!   simulator, an interactive prompt backend, and an HTTP backend.
//! * [`frameworks`]: the budgeted Single-CCQ and Multiple-CCQ control loops.
//! * [`harness`]: synthetic corpus generation, experiment orchestration,
//!   quality metrics and CSV reporting.
//!
//! With the `parallel` feature (default) the hot loops (candidate scoring,
//! brute-force enumeration, experiment repetitions) run on rayon; the
//! sequential code path is kept and can be forced per call for comparison.

pub mod belief;
pub mod crowd;
pub mod frameworks;
pub mod harness;
pub mod model;
pub mod select;

pub use belief::{Answer, AnswerValue, BeliefError, WorkerAccuracy};
pub use model::{CorrespondenceId, CorrespondenceSubset, ModelError, PossibleMatching, ResultSet};
pub use select::{AccuracyModel, SelectError};
