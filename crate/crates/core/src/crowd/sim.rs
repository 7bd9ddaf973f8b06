//! Deterministic discrete-event crowd simulator.
//!
//! Each published question draws an acceptance probability `P_0` once, from
//! `Uniform(0, 0.5)` (overridable). Every tick, a `Waiting` question flips a
//! `P_0` coin to become `Accepted`; on acceptance it draws a Poisson(λ) delay
//! in ticks until its answer appears (λ ≤ 0 answers immediately). The answer
//! agrees with the configured ground-truth matching with probability equal to
//! a realized accuracy drawn from the accuracy distribution, and carries that
//! accuracy. Identical seed and config replay an identical event stream.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{Answer, AnswerValue, WorkerAccuracy};
use crate::model::CorrespondenceId;

use super::{
    AccuracyDistribution, CcqHandle, CcqState, CrowdBackend, CrowdError, CrowdEvent,
    CrowdEventKind, PublishedCcq,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Mean of the Poisson accept-to-answer delay, in ticks. Non-positive
    /// means answers arrive in the accepting tick.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub accuracy_dist: AccuracyDistribution,
    /// Correspondence ids of the designated correct matching.
    #[serde(rename = "ground_truth_matching")]
    pub ground_truth: Vec<u32>,
    /// Fixed acceptance probability; defaults to a per-question draw from
    /// `Uniform(0, 0.5)`.
    #[serde(default)]
    pub accept_prob: Option<f64>,
    /// Permit accuracy distributions reaching below 0.5.
    #[serde(default)]
    pub allow_subhalf: bool,
}

fn default_lambda() -> f64 {
    3.0
}

impl SimConfig {
    pub fn new(seed: u64, accuracy_dist: AccuracyDistribution, ground_truth: Vec<u32>) -> Self {
        SimConfig {
            seed,
            lambda: default_lambda(),
            accuracy_dist,
            ground_truth,
            accept_prob: None,
            allow_subhalf: false,
        }
    }

    pub fn from_json(json: &str) -> Result<Self, CrowdError> {
        serde_json::from_str(json).map_err(|e| CrowdError::Protocol(e.to_string()))
    }
}

#[derive(Debug)]
struct SimRecord {
    question: PublishedCcq,
    p_accept: f64,
    answer_due: Option<u64>,
}

/// The simulated crowd. Strictly single-threaded; all randomness flows from
/// the config seed in a fixed draw order (records iterate by handle).
#[derive(Debug)]
pub struct SimCrowd {
    config: SimConfig,
    rng: ChaCha12Rng,
    tick: u64,
    next_handle: u64,
    records: BTreeMap<CcqHandle, SimRecord>,
    pending: VecDeque<CrowdEvent>,
    open: bool,
}

impl SimCrowd {
    pub fn new(config: SimConfig) -> Result<SimCrowd, CrowdError> {
        config.accuracy_dist.validate(config.allow_subhalf)?;
        if let Some(p) = config.accept_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(CrowdError::BadDistribution(format!(
                    "accept probability {p} outside [0, 1]"
                )));
            }
        }
        let rng = ChaCha12Rng::seed_from_u64(config.seed);
        Ok(SimCrowd {
            config,
            rng,
            tick: 0,
            next_handle: 0,
            records: BTreeMap::new(),
            pending: VecDeque::new(),
            open: true,
        })
    }

    /// Advances one tick and returns exactly the events that became
    /// available, i.e. `advance()` followed by `poll()`.
    pub fn step(&mut self) -> Vec<CrowdEvent> {
        self.tick_once();
        self.pending.drain(..).collect()
    }

    pub fn question(&self, handle: CcqHandle) -> Option<&PublishedCcq> {
        self.records.get(&handle).map(|r| &r.question)
    }

    fn poisson_delay(&mut self) -> u64 {
        if self.config.lambda <= 0.0 {
            return 0;
        }
        let dist = rand_distr::Poisson::new(self.config.lambda)
            .expect("positive lambda is a valid Poisson parameter");
        self.rng.sample(dist) as u64
    }

    fn answer_for(&mut self, ccq: CorrespondenceId) -> Result<Answer, CrowdError> {
        let accuracy = self
            .config
            .accuracy_dist
            .sample_accuracy(&mut self.rng, self.config.allow_subhalf)?;
        let correct = self.rng.random_bool(accuracy.get().min(1.0));
        let in_truth = self.config.ground_truth.contains(&ccq.0);
        let truthful = if in_truth {
            AnswerValue::Yes
        } else {
            AnswerValue::No
        };
        let value = if correct {
            truthful
        } else {
            truthful.negated()
        };
        Ok(Answer {
            ccq,
            value,
            accuracy,
        })
    }

    fn tick_once(&mut self) {
        self.tick += 1;
        let handles: Vec<CcqHandle> = self.records.keys().copied().collect();
        for handle in handles {
            let state = self.records[&handle].question.state;
            match state {
                CcqState::Waiting => {
                    let p = self.records[&handle].p_accept;
                    if self.rng.random_bool(p) {
                        let delay = self.poisson_delay();
                        let rec = self.records.get_mut(&handle).expect("record exists");
                        rec.question.state = CcqState::Accepted;
                        rec.answer_due = Some(self.tick + delay);
                        self.pending.push_back(CrowdEvent {
                            handle,
                            ccq: rec.question.ccq,
                            tick: self.tick,
                            kind: CrowdEventKind::Accepted,
                        });
                        if delay == 0 {
                            self.emit_answer(handle);
                        }
                    }
                }
                CcqState::Accepted => {
                    if self.records[&handle]
                        .answer_due
                        .expect("accepted implies due")
                        <= self.tick
                    {
                        self.emit_answer(handle);
                    }
                }
                CcqState::Answered | CcqState::Withdrawn => {}
            }
        }
    }

    fn emit_answer(&mut self, handle: CcqHandle) {
        let ccq = self.records[&handle].question.ccq;
        let answer = self
            .answer_for(ccq)
            .expect("validated distribution cannot produce invalid accuracies");
        let rec = self.records.get_mut(&handle).expect("record exists");
        rec.question.state = CcqState::Answered;
        self.pending.push_back(CrowdEvent {
            handle,
            ccq,
            tick: self.tick,
            kind: CrowdEventKind::Answered { answer },
        });
    }
}

impl CrowdBackend for SimCrowd {
    fn publish(
        &mut self,
        ccq: CorrespondenceId,
        predicted_acc: WorkerAccuracy,
    ) -> Result<CcqHandle, CrowdError> {
        if !self.open {
            return Err(CrowdError::Closed);
        }
        let handle = CcqHandle(self.next_handle);
        self.next_handle += 1;
        let p_accept = match self.config.accept_prob {
            Some(p) => p,
            None => self.rng.random_range(0.0..0.5),
        };
        self.records.insert(
            handle,
            SimRecord {
                question: PublishedCcq {
                    handle,
                    ccq,
                    state: CcqState::Waiting,
                    predicted_acc,
                    published_tick: self.tick,
                },
                p_accept,
                answer_due: None,
            },
        );
        Ok(handle)
    }

    fn withdraw(&mut self, handle: CcqHandle) -> Result<bool, CrowdError> {
        let rec = self
            .records
            .get_mut(&handle)
            .ok_or(CrowdError::UnknownHandle(handle))?;
        match rec.question.state {
            CcqState::Waiting => {
                rec.question.state = CcqState::Withdrawn;
                let ccq = rec.question.ccq;
                self.pending.push_back(CrowdEvent {
                    handle,
                    ccq,
                    tick: self.tick,
                    kind: CrowdEventKind::WithdrawConfirmed,
                });
                Ok(true)
            }
            CcqState::Accepted | CcqState::Answered => Ok(false),
            CcqState::Withdrawn => Err(CrowdError::AlreadyWithdrawn(handle)),
        }
    }

    fn poll(&mut self) -> Result<Vec<CrowdEvent>, CrowdError> {
        Ok(self.pending.drain(..).collect())
    }

    fn advance(&mut self) -> Result<(), CrowdError> {
        self.tick_once();
        Ok(())
    }

    fn tick(&self) -> u64 {
        self.tick
    }

    fn close(&mut self) {
        self.open = false;
    }
}
