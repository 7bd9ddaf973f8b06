//! HTTP crowd backend speaking a small JSON protocol:
//!
//! * `POST /ccqs {ccq, labels, predicted_acc}` → `{"handle": n}`
//! * `GET /events?since=<tick>` → `[CrowdEvent]` (events with tick > since)
//! * `DELETE /ccqs/<handle>` → `{"withdrawn": bool}` (404 for unknown handles)
//!
//! Servers must only expose events of completed ticks; the client keeps a
//! tick cursor and treats each poll as "everything after the last tick seen".
//! Transport failures retry with linear backoff before surfacing. Advancing
//! either sleeps for the poll interval (real deployments) or hits an optional
//! `POST /step` endpoint (test servers wrapping a simulator, so runs stay
//! deterministic).

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::belief::WorkerAccuracy;
use crate::model::CorrespondenceId;

use super::{CcqHandle, CrowdBackend, CrowdError, CrowdEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    /// Additional attempts after the first failure.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// How long `advance` sleeps when the server owns time.
    #[serde(default = "default_poll_interval_ms")]
    pub poll_interval_ms: u64,
    /// Advance by POSTing `/step` instead of sleeping.
    #[serde(default)]
    pub advance_via_step: bool,
}

fn default_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    100
}
fn default_timeout_ms() -> u64 {
    5_000
}
fn default_poll_interval_ms() -> u64 {
    1_000
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> HttpConfig {
        HttpConfig {
            base_url: base_url.into(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_ms: default_timeout_ms(),
            poll_interval_ms: default_poll_interval_ms(),
            advance_via_step: false,
        }
    }
}

#[derive(Serialize)]
struct PublishRequest<'a> {
    ccq: u32,
    labels: Vec<&'a str>,
    predicted_acc: f64,
}

#[derive(Deserialize)]
struct PublishResponse {
    handle: u64,
}

#[derive(Deserialize)]
struct WithdrawResponse {
    withdrawn: bool,
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    labels: Vec<String>,
    /// Last tick whose events have been consumed; the `?since=` cursor.
    cursor: u64,
    /// Local clock estimate: steps taken plus event ticks observed.
    clock: u64,
    open: bool,
}

enum Op<'a> {
    Get,
    Delete,
    PostJson(&'a serde_json::Value),
}

impl HttpBackend {
    pub fn new(config: HttpConfig, labels: Vec<String>) -> HttpBackend {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build();
        HttpBackend {
            agent: agent_config.new_agent(),
            config,
            labels,
            cursor: 0,
            clock: 0,
            open: true,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    /// Runs one request with retries; 4xx/5xx are not retried (the server
    /// heard us), transport errors are.
    fn request(&self, path: &str, op: Op<'_>) -> Result<serde_json::Value, CrowdError> {
        let url = self.url(path);
        let mut last_error = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms * attempt as u64,
                ));
            }
            let sent = match &op {
                Op::Get => self.agent.get(&url).call(),
                Op::Delete => self.agent.delete(&url).call(),
                Op::PostJson(body) => self.agent.post(&url).send_json(body),
            };
            match sent {
                Ok(mut response) => {
                    return response
                        .body_mut()
                        .read_json::<serde_json::Value>()
                        .map_err(|e| CrowdError::Protocol(format!("bad response body: {e}")));
                }
                Err(ureq::Error::StatusCode(404)) => {
                    return Err(CrowdError::Protocol("404".into()));
                }
                Err(ureq::Error::StatusCode(code)) => {
                    return Err(CrowdError::Protocol(format!("http status {code}")));
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(CrowdError::Transport {
            attempts: self.config.retries + 1,
            message: last_error,
        })
    }
}

impl CrowdBackend for HttpBackend {
    fn publish(
        &mut self,
        ccq: CorrespondenceId,
        predicted_acc: WorkerAccuracy,
    ) -> Result<CcqHandle, CrowdError> {
        if !self.open {
            return Err(CrowdError::Closed);
        }
        let labels = self
            .labels
            .get(ccq.index())
            .map(|l| vec![l.as_str()])
            .unwrap_or_default();
        let body = serde_json::to_value(PublishRequest {
            ccq: ccq.0,
            labels,
            predicted_acc: predicted_acc.get(),
        })
        .expect("publish request serialization cannot fail");
        let value = self.request("/ccqs", Op::PostJson(&body))?;
        let parsed: PublishResponse = serde_json::from_value(value)
            .map_err(|e| CrowdError::Protocol(format!("bad publish response: {e}")))?;
        Ok(CcqHandle(parsed.handle))
    }

    fn withdraw(&mut self, handle: CcqHandle) -> Result<bool, CrowdError> {
        let path = format!("/ccqs/{}", handle.0);
        match self.request(&path, Op::Delete) {
            Ok(value) => {
                let parsed: WithdrawResponse = serde_json::from_value(value)
                    .map_err(|e| CrowdError::Protocol(format!("bad withdraw response: {e}")))?;
                Ok(parsed.withdrawn)
            }
            Err(CrowdError::Protocol(msg)) if msg == "404" => {
                Err(CrowdError::UnknownHandle(handle))
            }
            Err(e) => Err(e),
        }
    }

    fn poll(&mut self) -> Result<Vec<CrowdEvent>, CrowdError> {
        let path = format!("/events?since={}", self.cursor);
        let value = self.request(&path, Op::Get)?;
        let events: Vec<CrowdEvent> = serde_json::from_value(value)
            .map_err(|e| CrowdError::Protocol(format!("bad event payload: {e}")))?;
        for e in &events {
            self.cursor = self.cursor.max(e.tick);
        }
        self.clock = self.clock.max(self.cursor);
        Ok(events)
    }

    fn advance(&mut self) -> Result<(), CrowdError> {
        if self.config.advance_via_step {
            self.request("/step", Op::PostJson(&serde_json::Value::Null))?;
            self.clock += 1;
        } else {
            std::thread::sleep(Duration::from_millis(self.config.poll_interval_ms));
        }
        Ok(())
    }

    fn tick(&self) -> u64 {
        self.clock
    }

    fn close(&mut self) {
        self.open = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_server_surfaces_transport_error_after_retries() {
        // a port nothing listens on; connection refused immediately
        let mut config = HttpConfig::new("http://127.0.0.1:9");
        config.retries = 1;
        config.backoff_ms = 1;
        config.timeout_ms = 200;
        let mut backend = HttpBackend::new(config, vec![]);
        let err = backend
            .publish(CorrespondenceId(0), WorkerAccuracy::new(0.8).unwrap())
            .unwrap_err();
        match err {
            CrowdError::Transport { attempts, .. } => assert_eq!(attempts, 2),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    #[test]
    fn closed_backend_refuses_publish() {
        let mut backend = HttpBackend::new(HttpConfig::new("http://127.0.0.1:9"), vec![]);
        backend.close();
        assert!(matches!(
            backend.publish(CorrespondenceId(0), WorkerAccuracy::new(0.8).unwrap()),
            Err(CrowdError::Closed)
        ));
    }
}
