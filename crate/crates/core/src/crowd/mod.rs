//! Crowd backends: where published questions go and answers come from.
//!
//! All backends share one lifecycle: a published question starts `Waiting`,
//! may move to `Accepted` once a worker picks it up, and ends `Answered`.
//! Only `Waiting` questions can be withdrawn; a withdrawn question never
//! consumes budget. Time is a backend-defined tick counter; [`poll`] never
//! blocks and never advances it, [`advance`] lets one unit pass (a simulator
//! step, a prompt, or a wait on a remote server).
//!
//! [`poll`]: CrowdBackend::poll
//! [`advance`]: CrowdBackend::advance

mod http;
mod interactive;
mod sim;

pub use http::{HttpBackend, HttpConfig};
pub use interactive::InteractiveBackend;
pub use sim::{SimConfig, SimCrowd};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{Answer, WorkerAccuracy};
use crate::model::CorrespondenceId;

/// Opaque identity of a published question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CcqHandle(pub u64);

impl std::fmt::Display for CcqHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "h{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CcqState {
    Waiting,
    Accepted,
    Answered,
    Withdrawn,
}

/// A question as the backend sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedCcq {
    pub handle: CcqHandle,
    pub ccq: CorrespondenceId,
    pub state: CcqState,
    pub predicted_acc: WorkerAccuracy,
    pub published_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrowdEventKind {
    Accepted,
    Answered { answer: Answer },
    WithdrawConfirmed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdEvent {
    pub handle: CcqHandle,
    pub ccq: CorrespondenceId,
    pub tick: u64,
    #[serde(flatten)]
    pub kind: CrowdEventKind,
}

#[derive(Debug, Error)]
pub enum CrowdError {
    #[error("backend is closed")]
    Closed,
    #[error("unknown handle {0}")]
    UnknownHandle(CcqHandle),
    #[error("handle {0} was already withdrawn")]
    AlreadyWithdrawn(CcqHandle),
    #[error("accuracy distribution invalid: {0}")]
    BadDistribution(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Belief(#[from] crate::belief::BeliefError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The surface the control loops drive. One owner per backend instance;
/// events are delivered exactly once, in tick order, through [`poll`].
///
/// [`poll`]: CrowdBackend::poll
pub trait CrowdBackend {
    /// Registers a question in `Waiting` state and returns its handle.
    /// Publishing the same correspondence twice yields distinct handles.
    fn publish(
        &mut self,
        ccq: CorrespondenceId,
        predicted_acc: WorkerAccuracy,
    ) -> Result<CcqHandle, CrowdError>;

    /// Withdraws a question iff it is still `Waiting`; returns whether it was.
    /// An `Accepted` or `Answered` question stays (and will consume budget).
    fn withdraw(&mut self, handle: CcqHandle) -> Result<bool, CrowdError>;

    /// Drains events produced since the last poll, oldest first. Never blocks
    /// and never advances time.
    fn poll(&mut self) -> Result<Vec<CrowdEvent>, CrowdError>;

    /// Lets one unit of time pass.
    fn advance(&mut self) -> Result<(), CrowdError>;

    /// Current tick of the backend clock.
    fn tick(&self) -> u64;

    /// Stops accepting publishes; pending events remain pollable.
    fn close(&mut self);
}

/// How realized worker accuracies are drawn.
///
/// `ScaledBeta { alpha, beta, scale, shift }` samples `scale·X + shift` with
/// `X ~ Beta(alpha, beta)`; `ScaledBeta(2, 2, 0.5, 0.5)` has mean 0.75 and
/// variance 1/80, `(2, 2, 0.4, 0.6)` mean 0.8 and variance 1/125, and the
/// deliberately sub-half `(2, 2, 0.6, 0.4)` mean 0.7 and variance 9/500.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccuracyDistribution {
    Uniform {
        lo: f64,
        hi: f64,
    },
    ScaledBeta {
        alpha: f64,
        beta: f64,
        scale: f64,
        shift: f64,
    },
    Constant {
        p: f64,
    },
}

impl AccuracyDistribution {
    pub fn uniform_half_one() -> AccuracyDistribution {
        AccuracyDistribution::Uniform { lo: 0.5, hi: 1.0 }
    }

    /// `(min, max)` of attainable values.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            AccuracyDistribution::Uniform { lo, hi } => (lo, hi),
            AccuracyDistribution::ScaledBeta { scale, shift, .. } => {
                (shift.min(scale + shift), shift.max(scale + shift))
            }
            AccuracyDistribution::Constant { p } => (p, p),
        }
    }

    /// Rejects distributions that could produce accuracies outside `[0.5, 1]`
    /// unless `allow_subhalf` is set, and outside `(0, 1]` always.
    pub fn validate(&self, allow_subhalf: bool) -> Result<(), CrowdError> {
        let (lo, hi) = self.support();
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi > 1.0 {
            return Err(CrowdError::BadDistribution(format!(
                "support [{lo}, {hi}] outside (0, 1]"
            )));
        }
        if lo < 0.5 && !allow_subhalf {
            return Err(CrowdError::BadDistribution(format!(
                "support [{lo}, {hi}] goes below 0.5; enable allow_subhalf to permit it"
            )));
        }
        if let AccuracyDistribution::ScaledBeta { alpha, beta, .. } = *self {
            if alpha <= 0.0 || beta <= 0.0 {
                return Err(CrowdError::BadDistribution(
                    "beta shape parameters must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Draws a raw accuracy value within the declared support.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AccuracyDistribution::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
            AccuracyDistribution::ScaledBeta {
                alpha,
                beta,
                scale,
                shift,
            } => {
                let dist = rand_distr::Beta::new(alpha, beta)
                    .expect("validated shape parameters are positive");
                scale * rng.sample(dist) + shift
            }
            AccuracyDistribution::Constant { p } => p,
        }
    }

    /// Draws a [`WorkerAccuracy`], relaxing the half-bound only when asked.
    pub fn sample_accuracy<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        allow_subhalf: bool,
    ) -> Result<WorkerAccuracy, CrowdError> {
        let p = self.sample(rng).clamp(f64::MIN_POSITIVE, 1.0);
        let acc = if allow_subhalf {
            WorkerAccuracy::new_relaxed(p)?
        } else {
            WorkerAccuracy::new(p)?
        };
        Ok(acc)
    }
}

impl std::str::FromStr for AccuracyDistribution {
    type Err = String;

    /// Parses `uniform:<lo>,<hi>`, `beta:<alpha>,<beta>,<scale>,<shift>` or
    /// `const:<p>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("expected '<kind>:<params>', got '{s}'"))?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x}: {e}")))
            .collect::<Result<_, _>>()?;
        match (kind, nums.as_slice()) {
            ("uniform", [lo, hi]) => Ok(AccuracyDistribution::Uniform { lo: *lo, hi: *hi }),
            ("beta", [alpha, beta, scale, shift]) => Ok(AccuracyDistribution::ScaledBeta {
                alpha: *alpha,
                beta: *beta,
                scale: *scale,
                shift: *shift,
            }),
            ("const", [p]) => Ok(AccuracyDistribution::Constant { p: *p }),
            _ => Err(format!("unrecognized accuracy distribution '{s}'")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn moments(dist: &AccuracyDistribution, n: usize) -> (f64, f64) {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, var)
    }

    #[test]
    fn constant_is_constant() {
        let d = AccuracyDistribution::Constant { p: 0.8 };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(d.sample(&mut rng), 0.8);
        }
    }

    #[test]
    fn uniform_moments() {
        let (mean, var) = moments(&AccuracyDistribution::uniform_half_one(), 100_000);
        assert!((mean - 0.75).abs() < 0.01, "mean {mean}");
        assert!((var - 1.0 / 48.0).abs() / (1.0 / 48.0) < 0.05, "var {var}");
    }

    #[test]
    fn scaled_beta_moments() {
        let d = AccuracyDistribution::ScaledBeta {
            alpha: 2.0,
            beta: 2.0,
            scale: 0.4,
            shift: 0.6,
        };
        let (mean, var) = moments(&d, 100_000);
        assert!((mean - 0.8).abs() < 0.01, "mean {mean}");
        assert!(
            (var - 1.0 / 125.0).abs() / (1.0 / 125.0) < 0.05,
            "var {var}"
        );
        let (lo, hi) = d.support();
        assert_eq!((lo, hi), (0.6, 1.0));
    }

    #[test]
    fn validation_guards_support() {
        let subhalf = AccuracyDistribution::ScaledBeta {
            alpha: 2.0,
            beta: 2.0,
            scale: 0.6,
            shift: 0.4,
        };
        assert!(subhalf.validate(false).is_err());
        assert!(subhalf.validate(true).is_ok());

        let bad = AccuracyDistribution::Uniform { lo: 0.5, hi: 1.5 };
        assert!(bad.validate(true).is_err());

        assert!(AccuracyDistribution::uniform_half_one()
            .validate(false)
            .is_ok());
    }

    #[test]
    fn parses_cli_syntax() {
        let u: AccuracyDistribution = "uniform:0.5,1".parse().unwrap();
        assert_eq!(u, AccuracyDistribution::Uniform { lo: 0.5, hi: 1.0 });
        let b: AccuracyDistribution = "beta:2,2,0.5,0.5".parse().unwrap();
        assert_eq!(
            b,
            AccuracyDistribution::ScaledBeta {
                alpha: 2.0,
                beta: 2.0,
                scale: 0.5,
                shift: 0.5
            }
        );
        let c: AccuracyDistribution = "const:0.8".parse().unwrap();
        assert_eq!(c, AccuracyDistribution::Constant { p: 0.8 });
        assert!("triangle:1".parse::<AccuracyDistribution>().is_err());
        assert!("uniform:0.5".parse::<AccuracyDistribution>().is_err());
    }

    #[test]
    fn event_serialization_shape() {
        let ev = CrowdEvent {
            handle: CcqHandle(3),
            ccq: CorrespondenceId(1),
            tick: 9,
            kind: CrowdEventKind::Accepted,
        };
        let json = serde_json::to_string(&ev).unwrap();
        assert!(json.contains("\"kind\":\"accepted\""));
        let back: CrowdEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ev);
    }
}
