//! Budgeted control loops tying selection, publication and belief updates
//! together.
//!
//! The single-CCQ loop keeps exactly one question in the crowd; whenever its
//! answer arrives the posterior is adjusted and the next question selected.
//! The multi-CCQ loop keeps up to `k` questions published: on every batch of
//! answers it withdraws whatever is still waiting, folds the answers in, and
//! refills with fresh greedy picks conditioned on the updated beliefs;
//! `min(k, B − answered)` questions stay in flight, so answered questions
//! never exceed the budget and withdrawn ones never consume it.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{posterior_update, AnswerRecord, BeliefError};
use crate::crowd::{CcqHandle, CrowdBackend, CrowdError, CrowdEventKind};
use crate::model::{CorrespondenceId, ResultSet};
use crate::select::{
    greedy_select, select_sccq_pruned, AccuracyModel, GreedyOptions, GreedyTrace, PruningFlags,
    SelectError,
};

/// Budget bookkeeping: `consumed` counts answered questions plus questions
/// currently committed to the crowd; it never exceeds `budget`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetState {
    pub budget: usize,
    pub consumed: usize,
    pub in_flight: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub answers_received: usize,
    pub uncertainty: f64,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RunOutcome {
    /// Budget exhausted and every published question resolved.
    Completed,
    /// Every marginal hit 0 or 1 before the budget ran out.
    NoInformativeCcqs,
    /// The tick deadline arrived first.
    DeadlineReached,
    /// The backend failed or closed; the trace holds everything up to that.
    Truncated { cause: String },
}

/// Everything observable about one run: the uncertainty after every answer,
/// the questions published (in order), the answers consumed, and the final
/// belief vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTrace {
    pub points: Vec<TracePoint>,
    pub selections: Vec<CorrespondenceId>,
    pub answers: Vec<AnswerRecord>,
    pub final_beliefs: Vec<f64>,
    pub outcome: RunOutcome,
    pub budget: BudgetState,
    /// Posterior anomalies (impossible answers) that were skipped; their
    /// budget stays consumed.
    pub anomalies: Vec<String>,
    /// Per-round greedy diagnostics, when requested.
    pub greedy_traces: Vec<GreedyTrace>,
}

impl RunTrace {
    pub fn final_uncertainty(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.uncertainty)
    }

    /// `answers_received,uncertainty,tick` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("answers_received,uncertainty,tick\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{:.6},{}\n",
                p.answers_received, p.uncertainty, p.tick
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization cannot fail")
    }
}

/// How the next question(s) are chosen.
#[derive(Debug, Clone)]
pub enum SelectionStrategy {
    /// Marginal closest to 0.5 (the single-CCQ query).
    Sccq,
    /// Conditional-entropy greedy over the partition index.
    Greedy,
    /// Uniformly random informative correspondence (baseline).
    Random { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub pruning: PruningFlags,
    pub parallel: bool,
    /// Stop once the backend clock reaches this tick.
    pub deadline_ticks: Option<u64>,
    /// Condition replacement picks on still-accepted questions (split the
    /// partition index on them) instead of merely excluding them.
    pub include_accepted_context: bool,
    pub collect_greedy_trace: bool,
    /// Abort a run that makes no progress for this many consecutive ticks.
    pub max_idle_ticks: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            pruning: PruningFlags::all(),
            parallel: cfg!(feature = "parallel"),
            deadline_ticks: None,
            include_accepted_context: false,
            collect_greedy_trace: false,
            max_idle_ticks: 100_000,
        }
    }
}

/// Framework of sequential single questions: publish the best CCQ, wait for
/// its answer, adjust, repeat while budget remains.
pub fn run_single_ccq(
    rs: &ResultSet,
    budget: usize,
    backend: &mut dyn CrowdBackend,
    acc_model: &AccuracyModel,
) -> RunTrace {
    run_with_strategy(
        rs,
        budget,
        1,
        backend,
        acc_model,
        SelectionStrategy::Sccq,
        &RunOptions::default(),
    )
}

/// Framework of `k` simultaneous questions with withdraw-and-replace.
pub fn run_multi_ccq(
    rs: &ResultSet,
    budget: usize,
    k: usize,
    backend: &mut dyn CrowdBackend,
    acc_model: &AccuracyModel,
) -> RunTrace {
    run_with_strategy(
        rs,
        budget,
        k,
        backend,
        acc_model,
        SelectionStrategy::Greedy,
        &RunOptions::default(),
    )
}

/// Picks a uniformly random correspondence with marginal strictly inside
/// (0, 1).
pub(crate) fn random_informative_pick<R: rand::Rng + ?Sized>(
    rs: &ResultSet,
    rng: &mut R,
) -> Result<CorrespondenceId, SelectError> {
    let informative: Vec<CorrespondenceId> = rs
        .marginals()
        .iter()
        .enumerate()
        .filter(|(_, &p)| ResultSet::is_informative_marginal(p))
        .map(|(i, _)| CorrespondenceId(i as u32))
        .collect();
    if informative.is_empty() {
        return Err(SelectError::NoInformativeCcq);
    }
    Ok(informative[rng.random_range(0..informative.len())])
}

struct LiveQuestion {
    ccq: CorrespondenceId,
    accepted: bool,
}

struct LoopState<'a> {
    beliefs: ResultSet,
    trace: RunTrace,
    answered: usize,
    live: BTreeMap<CcqHandle, LiveQuestion>,
    random_rng: Option<ChaCha12Rng>,
    acc_model: &'a AccuracyModel,
    options: &'a RunOptions,
}

impl LoopState<'_> {
    /// Chooses up to `want` fresh questions under the strategy. Questions in
    /// flight are excluded (they cannot be withdrawn), and optionally
    /// conditioned on.
    fn select(
        &mut self,
        strategy: &SelectionStrategy,
        want: usize,
    ) -> Result<Vec<CorrespondenceId>, SelectError> {
        let in_flight: Vec<CorrespondenceId> = self.live.values().map(|q| q.ccq).collect();
        // The single-pick strategies wait out a round rather than publish a
        // question that is already in the crowd.
        match strategy {
            SelectionStrategy::Sccq => match select_sccq_pruned(&self.beliefs, self.acc_model) {
                Ok(pick) if !in_flight.contains(&pick.ccq) => Ok(vec![pick.ccq]),
                Ok(_) | Err(SelectError::NoInformativeCcq) => Ok(vec![]),
                Err(e) => Err(e),
            },
            SelectionStrategy::Random { .. } => {
                let rng = self.random_rng.as_mut().expect("seeded at loop start");
                match random_informative_pick(&self.beliefs, rng) {
                    Ok(c) if !in_flight.contains(&c) => Ok(vec![c]),
                    Ok(_) | Err(SelectError::NoInformativeCcq) => Ok(vec![]),
                    Err(e) => Err(e),
                }
            }
            SelectionStrategy::Greedy => {
                let greedy_options = GreedyOptions {
                    flags: self.options.pruning,
                    parallel: self.options.parallel,
                    collect_trace: self.options.collect_greedy_trace,
                    exclude: in_flight.clone(),
                    precondition: if self.options.include_accepted_context {
                        in_flight
                    } else {
                        Vec::new()
                    },
                };
                let selection =
                    greedy_select(&self.beliefs, want, self.acc_model, &greedy_options)?;
                if self.options.collect_greedy_trace {
                    self.trace.greedy_traces.push(selection.trace.clone());
                }
                Ok(selection.ids())
            }
        }
    }
}

/// The shared event loop behind both frameworks (and the random baseline).
pub fn run_with_strategy(
    rs: &ResultSet,
    budget: usize,
    k: usize,
    backend: &mut dyn CrowdBackend,
    acc_model: &AccuracyModel,
    strategy: SelectionStrategy,
    options: &RunOptions,
) -> RunTrace {
    let mut state = LoopState {
        beliefs: rs.clone(),
        trace: RunTrace {
            points: vec![TracePoint {
                answers_received: 0,
                uncertainty: rs.uncertainty(),
                tick: backend.tick(),
            }],
            selections: Vec::new(),
            answers: Vec::new(),
            final_beliefs: rs.probs().to_vec(),
            outcome: RunOutcome::Completed,
            budget: BudgetState {
                budget,
                consumed: 0,
                in_flight: 0,
            },
            anomalies: Vec::new(),
            greedy_traces: Vec::new(),
        },
        answered: 0,
        live: BTreeMap::new(),
        random_rng: match &strategy {
            SelectionStrategy::Random { seed } => Some(ChaCha12Rng::seed_from_u64(*seed)),
            _ => None,
        },
        acc_model,
        options,
    };

    let outcome = drive(&mut state, budget, k.max(1), backend, &strategy);
    state.trace.outcome = outcome;
    state.trace.final_beliefs = state.beliefs.probs().to_vec();
    state.trace.budget = BudgetState {
        budget,
        consumed: state.answered + state.live.len(),
        in_flight: state.live.len(),
    };
    state.trace
}

fn drive(
    state: &mut LoopState<'_>,
    budget: usize,
    k: usize,
    backend: &mut dyn CrowdBackend,
    strategy: &SelectionStrategy,
) -> RunOutcome {
    let mut idle_ticks: u64 = 0;
    loop {
        let events = match backend.poll() {
            Ok(events) => events,
            Err(e) => return truncated(e),
        };

        let mut answered_batch = Vec::new();
        for event in events {
            match event.kind {
                CrowdEventKind::Accepted => {
                    if let Some(q) = state.live.get_mut(&event.handle) {
                        q.accepted = true;
                    }
                }
                CrowdEventKind::Answered { answer } => {
                    if state.live.remove(&event.handle).is_some() {
                        answered_batch.push((answer, event.tick));
                    }
                }
                CrowdEventKind::WithdrawConfirmed => {}
            }
        }

        if !answered_batch.is_empty() {
            idle_ticks = 0;

            // Withdraw whatever is still waiting; a question that got
            // accepted in the meantime stays committed.
            let waiting: Vec<CcqHandle> = state
                .live
                .iter()
                .filter(|(_, q)| !q.accepted)
                .map(|(h, _)| *h)
                .collect();
            for handle in waiting {
                match backend.withdraw(handle) {
                    Ok(true) => {
                        state.live.remove(&handle);
                    }
                    Ok(false) => {
                        if let Some(q) = state.live.get_mut(&handle) {
                            q.accepted = true;
                        }
                    }
                    Err(e) => return truncated(e),
                }
            }

            for (answer, tick) in answered_batch {
                state.answered += 1;
                match posterior_update(&state.beliefs, &answer) {
                    Ok(next) => state.beliefs = next,
                    Err(BeliefError::ImpossibleAnswer { ccq }) => {
                        // The worker was paid; budget stays consumed, the
                        // evidence is dropped.
                        state
                            .trace
                            .anomalies
                            .push(format!("impossible answer for {ccq} at tick {tick}"));
                    }
                    Err(e) => return truncated_belief(e),
                }
                state.trace.answers.push(AnswerRecord::new(&answer, tick));
                state.trace.points.push(TracePoint {
                    answers_received: state.answered,
                    uncertainty: state.beliefs.uncertainty(),
                    tick,
                });
            }
        }

        // Keep min(k, B − answered) questions committed.
        let target = k.min(budget.saturating_sub(state.answered));
        if state.live.len() < target {
            let want = target - state.live.len();
            let picks = match state.select(strategy, want) {
                Ok(picks) => picks,
                Err(e) => {
                    return RunOutcome::Truncated {
                        cause: format!("selection failed: {e}"),
                    }
                }
            };
            if picks.is_empty() && state.live.is_empty() {
                return if state.answered >= budget {
                    RunOutcome::Completed
                } else {
                    RunOutcome::NoInformativeCcqs
                };
            }
            for ccq in picks.into_iter().take(want) {
                let predicted = state.acc_model.predicted(ccq);
                match backend.publish(ccq, predicted) {
                    Ok(handle) => {
                        state.live.insert(
                            handle,
                            LiveQuestion {
                                ccq,
                                accepted: false,
                            },
                        );
                        state.trace.selections.push(ccq);
                    }
                    Err(e) => return truncated(e),
                }
            }
        }

        if state.live.is_empty() && state.answered >= budget {
            return RunOutcome::Completed;
        }

        if let Some(deadline) = state.options.deadline_ticks {
            if backend.tick() >= deadline {
                return RunOutcome::DeadlineReached;
            }
        }

        if let Err(e) = backend.advance() {
            return truncated(e);
        }
        idle_ticks += 1;
        if idle_ticks > state.options.max_idle_ticks {
            return RunOutcome::Truncated {
                cause: format!("no progress for {idle_ticks} ticks"),
            };
        }
    }
}

fn truncated(e: CrowdError) -> RunOutcome {
    RunOutcome::Truncated {
        cause: format!("backend: {e}"),
    }
}

fn truncated_belief(e: BeliefError) -> RunOutcome {
    RunOutcome::Truncated {
        cause: format!("belief update: {e}"),
    }
}
