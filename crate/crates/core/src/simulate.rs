//! Synthetic sessions at the event level: each step takes a sampled rub
//! time and passes, or times out when the sample exceeds the step timeout.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{aggregate, collect_metrics, AggregateReport, SessionMetrics};
use crate::session::{
    advance, new_session, FeedbackRecord, Phase, RubStep, SessionConfig, SessionEvent, SessionState, TimedEvent,
};

/// Normal distribution truncated to `[min_s, max_s]`. `sigma_s == 0` is a
/// fixed duration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    pub mean_s: f64,
    #[serde(default)]
    pub sigma_s: f64,
    #[serde(default = "default_min_s")]
    pub min_s: f64,
    #[serde(default = "default_max_s")]
    pub max_s: f64,
}

fn default_min_s() -> f64 {
    0.5
}

fn default_max_s() -> f64 {
    60.0
}

impl DurationModel {
    pub fn fixed(seconds: f64) -> Self {
        Self {
            mean_s: seconds,
            sigma_s: 0.0,
            min_s: seconds,
            max_s: seconds,
        }
    }

    pub fn normal(mean_s: f64, sigma_s: f64) -> Self {
        Self {
            mean_s,
            sigma_s,
            min_s: default_min_s(),
            max_s: default_max_s(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mean_s.is_finite()
            && self.sigma_s.is_finite()
            && self.sigma_s >= 0.0
            && self.min_s >= 0.0
            && self.min_s <= self.mean_s
            && self.mean_s <= self.max_s;
        if !ok {
            return Err(Error::Config(format!("invalid duration model {self:?}")));
        }
        Ok(())
    }

    /// Rejection sampling; falls back to clamping the mean if the window
    /// is too far in the tail to hit.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.sigma_s == 0.0 {
            return self.mean_s;
        }
        let normal = Normal::new(self.mean_s, self.sigma_s).expect("validated sigma");
        for _ in 0..1000 {
            let x = normal.sample(rng);
            if (self.min_s..=self.max_s).contains(&x) {
                return x;
            }
        }
        self.mean_s.clamp(self.min_s, self.max_s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub steps: BTreeMap<RubStep, DurationModel>,
    pub dispense: DurationModel,
    #[serde(default)]
    pub session: SessionConfig,
}

impl Default for SimulationConfig {
    /// Step means of 3.9 s, 3.3 s and 5.3 s for steps 2, 5 and 8, and
    /// 3.675 s for the rest.
    fn default() -> Self {
        let steps = RubStep::all()
            .map(|s| {
                let mean = match s.index() {
                    2 => 3.9,
                    5 => 3.3,
                    8 => 5.3,
                    _ => 3.675,
                };
                (s, DurationModel::normal(mean, 0.8))
            })
            .collect();
        Self {
            steps,
            dispense: DurationModel::normal(2.0, 0.5),
            session: SessionConfig::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.session.validate()?;
        self.dispense.validate()?;
        for step in RubStep::all() {
            self.steps
                .get(&step)
                .ok_or_else(|| Error::Config(format!("no duration for step {step}")))?
                .validate()?;
        }
        Ok(())
    }

    /// Reads `{"steps": {"2": 3.9, ...}, "dispense_s": 2.0}`.
    pub fn from_fixed_durations(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Fixed {
            steps: BTreeMap<RubStep, f64>,
            #[serde(default)]
            dispense_s: f64,
        }
        let fixed: Fixed = serde_json::from_str(text)?;
        let config = Self {
            steps: fixed.steps.into_iter().map(|(s, d)| (s, DurationModel::fixed(d))).collect(),
            dispense: DurationModel::fixed(fixed.dispense_s),
            session: SessionConfig::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load_fixed_durations(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_fixed_durations(&text).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

fn to_ms(seconds: f64) -> u64 {
    (seconds * 1000.0).round() as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedSession {
    pub events: Vec<TimedEvent>,
    pub feedback: Vec<FeedbackRecord>,
    pub metrics: SessionMetrics,
}

/// Runs one session to completion.
pub fn simulate_session(id: &str, config: &SimulationConfig, rng: &mut impl Rng) -> Result<SimulatedSession> {
    let session = &config.session;
    let timeout_ms = session.step_timeout_ms();
    let mut state: SessionState = new_session(session)?;
    let mut events = Vec::new();
    let mut feedback = Vec::new();
    let mut t = 0u64;
    let mut push = |state: &mut SessionState, event: TimedEvent| -> Result<()> {
        let (next, out) = advance(state, &event, session).map_err(|e| Error::Input(e.to_string()))?;
        feedback.extend(out.into_iter().map(|e| FeedbackRecord { t_ms: event.t_ms, event: e }));
        events.push(event);
        *state = next;
        Ok(())
    };
    push(&mut state, TimedEvent::new(t, SessionEvent::HandsDetected))?;
    while !state.is_complete() {
        match state.phase.clone() {
            Phase::AwaitDispense => {
                t += to_ms(config.dispense.sample(rng));
                push(&mut state, TimedEvent::new(t, SessionEvent::DispenseConfirmed))?;
            }
            phase => {
                let step = phase
                    .target()
                    .ok_or_else(|| Error::Input(format!("simulation stuck in {}", phase.name())))?;
                let d = to_ms(config.steps[&step].sample(rng));
                if d > timeout_ms {
                    t = state.step_entered_at + timeout_ms + 1;
                    push(&mut state, TimedEvent::new(t, SessionEvent::Tick))?;
                } else {
                    t += d;
                    push(&mut state, TimedEvent::new(t, SessionEvent::StepDecision { step, passed: true }))?;
                }
            }
        }
    }
    let metrics = collect_metrics(id, &feedback);
    Ok(SimulatedSession {
        events,
        feedback,
        metrics,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOutcome {
    pub sessions: Vec<SimulatedSession>,
    pub report: AggregateReport,
}

pub fn simulate(config: &SimulationConfig, n_sessions: usize, seed: u64) -> Result<SimulationOutcome> {
    config.validate()?;
    if n_sessions == 0 {
        return Err(Error::Input("need at least one session".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sessions = (0..n_sessions)
        .map(|i| simulate_session(&format!("sim-{:04}", i + 1), config, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<_> = sessions.iter().map(|s| s.metrics.clone()).collect();
    let report = aggregate(&metrics)?;
    Ok(SimulationOutcome { sessions, report })
}
