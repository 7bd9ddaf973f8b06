//! Human-in-the-loop backend: publishes render as terminal prompts.
//!
//! Each [`advance`](super::CrowdBackend::advance) takes the oldest waiting
//! question, prints its correspondence label, and reads a `y`/`n` line.
//! Invalid input re-prompts; end of input closes the backend. Answers carry a
//! single configured self-reported accuracy.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::belief::{Answer, AnswerValue, WorkerAccuracy};
use crate::model::CorrespondenceId;

use super::{
    CcqHandle, CcqState, CrowdBackend, CrowdError, CrowdEvent, CrowdEventKind, PublishedCcq,
};

pub struct InteractiveBackend<R, W> {
    input: R,
    output: W,
    labels: Vec<String>,
    self_accuracy: WorkerAccuracy,
    records: BTreeMap<CcqHandle, PublishedCcq>,
    waiting: VecDeque<CcqHandle>,
    pending: VecDeque<CrowdEvent>,
    next_handle: u64,
    tick: u64,
    open: bool,
}

impl InteractiveBackend<std::io::StdinLock<'static>, std::io::Stderr> {
    /// Prompts on stderr and reads stdin, so traces on stdout stay clean.
    pub fn stdio(
        labels: Vec<String>,
        self_accuracy: WorkerAccuracy,
    ) -> InteractiveBackend<std::io::StdinLock<'static>, std::io::Stderr> {
        InteractiveBackend::new(
            std::io::stdin().lock(),
            std::io::stderr(),
            labels,
            self_accuracy,
        )
    }
}

impl<R: BufRead, W: Write> InteractiveBackend<R, W> {
    pub fn new(
        input: R,
        output: W,
        labels: Vec<String>,
        self_accuracy: WorkerAccuracy,
    ) -> InteractiveBackend<R, W> {
        InteractiveBackend {
            input,
            output,
            labels,
            self_accuracy,
            records: BTreeMap::new(),
            waiting: VecDeque::new(),
            pending: VecDeque::new(),
            next_handle: 0,
            tick: 0,
            open: true,
        }
    }

    fn label(&self, ccq: CorrespondenceId) -> String {
        self.labels
            .get(ccq.index())
            .cloned()
            .unwrap_or_else(|| ccq.to_string())
    }

    /// Renders the question and reads a yes/no line, re-prompting on
    /// anything else. End of input closes the backend.
    pub fn answer_prompt(&mut self, ccq: CorrespondenceId) -> Result<Answer, CrowdError> {
        if !self.open {
            return Err(CrowdError::Closed);
        }
        loop {
            write!(
                self.output,
                "Is correspondence '{}' part of the correct matching? [y/n]: ",
                self.label(ccq)
            )?;
            self.output.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                self.open = false;
                return Err(CrowdError::Closed);
            }
            let value = match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" => AnswerValue::Yes,
                "n" | "no" => AnswerValue::No,
                other => {
                    writeln!(self.output, "please answer 'y' or 'n' (got '{other}')")?;
                    continue;
                }
            };
            return Ok(Answer {
                ccq,
                value,
                accuracy: self.self_accuracy,
            });
        }
    }
}

impl<R: BufRead, W: Write> CrowdBackend for InteractiveBackend<R, W> {
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
        self.records.insert(
            handle,
            PublishedCcq {
                handle,
                ccq,
                state: CcqState::Waiting,
                predicted_acc,
                published_tick: self.tick,
            },
        );
        self.waiting.push_back(handle);
        Ok(handle)
    }

    fn withdraw(&mut self, handle: CcqHandle) -> Result<bool, CrowdError> {
        let rec = self
            .records
            .get_mut(&handle)
            .ok_or(CrowdError::UnknownHandle(handle))?;
        match rec.state {
            CcqState::Waiting => {
                rec.state = CcqState::Withdrawn;
                self.waiting.retain(|h| *h != handle);
                let ccq = rec.ccq;
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

    /// One prompt/answer exchange for the oldest waiting question.
    fn advance(&mut self) -> Result<(), CrowdError> {
        let Some(handle) = self.waiting.pop_front() else {
            return Ok(()); // nothing published; nothing to ask
        };
        let ccq = self.records[&handle].ccq;
        self.tick += 1;
        let answer = match self.answer_prompt(ccq) {
            Ok(a) => a,
            Err(e) => {
                self.waiting.push_front(handle);
                return Err(e);
            }
        };
        let rec = self.records.get_mut(&handle).expect("record exists");
        rec.state = CcqState::Answered;
        self.pending.push_back(CrowdEvent {
            handle,
            ccq,
            tick: self.tick,
            kind: CrowdEventKind::Accepted,
        });
        self.pending.push_back(CrowdEvent {
            handle,
            ccq,
            tick: self.tick,
            kind: CrowdEventKind::Answered { answer },
        });
        Ok(())
    }

    fn tick(&self) -> u64 {
        self.tick
    }

    fn close(&mut self) {
        self.open = false;
    }
}
