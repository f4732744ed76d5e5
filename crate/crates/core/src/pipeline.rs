//! Drives a session from raw inputs: frames go through presence detection
//! and the classifier, distance readings through the dispense gate, and the
//! resulting events through [`advance`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{collect_metrics, SessionMetrics};
use crate::sensors::{DispenseConfig, DispenseGate, DistanceReading};
use crate::session::{
    advance, new_session, FeedbackRecord, Phase, RubStep, SessionConfig, SessionEvent, SessionState, TimedEvent,
};
use crate::vision::{decide_step, ClassScores, FrameSample, FrameThrottle, GestureClassifier, PresenceConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub session: SessionConfig,
    pub presence: PresenceConfig,
    pub dispense: DispenseConfig,
    /// Frames closer together than 1/max_fps are skipped.
    pub max_fps: f64,
    /// Consecutive hand-free frames before a rub step is interrupted.
    pub hands_lost_frames: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            presence: PresenceConfig::default(),
            dispense: DispenseConfig::default(),
            max_fps: 10.0,
            hands_lost_frames: 5,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.session.validate()?;
        self.dispense.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Frame(FrameSample),
    Distance(DistanceReading),
}

impl Input {
    pub fn t_ms(&self) -> u64 {
        match self {
            Input::Frame(f) => f.t_ms,
            Input::Distance(r) => r.t_ms,
        }
    }
}

/// Merges two time-ordered streams. At equal timestamps the reading goes
/// first.
pub fn merge_inputs(frames: Vec<FrameSample>, readings: Vec<DistanceReading>) -> Vec<Input> {
    let mut out: Vec<Input> = Vec::with_capacity(frames.len() + readings.len());
    out.extend(readings.into_iter().map(Input::Distance));
    out.extend(frames.into_iter().map(Input::Frame));
    // stable: readings were pushed first
    out.sort_by_key(Input::t_ms);
    out
}

/// What one input produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DriverStep {
    pub feedback: Vec<FeedbackRecord>,
    /// Classifier output for the frame, when it was classified.
    pub scores: Option<ClassScores>,
    /// The frame was skipped by the rate limiter.
    pub throttled: bool,
    pub diagnostics: Vec<String>,
}

pub struct SessionDriver {
    config: EngineConfig,
    state: SessionState,
    classifier: Box<dyn GestureClassifier>,
    gate: DispenseGate,
    throttle: FrameThrottle,
    window: VecDeque<ClassScores>,
    window_target: Option<RubStep>,
    absent_streak: usize,
    feedback: Vec<FeedbackRecord>,
    events: Vec<TimedEvent>,
}

impl SessionDriver {
    pub fn new(config: EngineConfig, classifier: Box<dyn GestureClassifier>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: new_session(&config.session)?,
            gate: DispenseGate::new(config.dispense)?,
            throttle: FrameThrottle::from_fps(config.max_fps),
            classifier,
            window: VecDeque::new(),
            window_target: None,
            absent_streak: 0,
            feedback: Vec::new(),
            events: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn classifier(&self) -> &dyn GestureClassifier {
        self.classifier.as_ref()
    }

    pub fn is_complete(&self) -> bool {
        self.state.is_complete()
    }

    /// Every feedback record emitted so far.
    pub fn feedback_log(&self) -> &[FeedbackRecord] {
        &self.feedback
    }

    /// Accepted events that changed the session; replaying them through a
    /// fresh session reproduces [`Self::feedback_log`].
    pub fn event_log(&self) -> &[TimedEvent] {
        &self.events
    }

    pub fn metrics(&self, session_id: &str) -> SessionMetrics {
        collect_metrics(session_id, &self.feedback)
    }

    pub fn apply(&mut self, event: TimedEvent, step: &mut DriverStep) {
        match advance(&self.state, &event, &self.config.session) {
            Ok((next, out)) => {
                let changed = next.phase != self.state.phase || !out.is_empty();
                self.state = next;
                if changed || !matches!(event.event, SessionEvent::Tick) {
                    self.events.push(event.clone());
                }
                let records: Vec<_> = out
                    .into_iter()
                    .map(|e| FeedbackRecord { t_ms: event.t_ms, event: e })
                    .collect();
                self.feedback.extend(records.iter().cloned());
                step.feedback.extend(records);
            }
            Err(e) => step.diagnostics.push(e.to_string()),
        }
        if self.state.phase.target() != self.window_target {
            self.window.clear();
            self.window_target = self.state.phase.target();
        }
    }

    pub fn on_tick(&mut self, t_ms: u64) -> DriverStep {
        let mut step = DriverStep::default();
        self.apply(TimedEvent::new(t_ms, SessionEvent::Tick), &mut step);
        step
    }

    pub fn on_frame(&mut self, frame: &FrameSample) -> DriverStep {
        let mut step = DriverStep::default();
        if self.is_complete() {
            return step;
        }
        if !self.throttle.admit(frame.t_ms) {
            step.throttled = true;
            return step;
        }
        let t = frame.t_ms;
        self.apply(TimedEvent::new(t, SessionEvent::Tick), &mut step);

        let presence = match self.config.presence.detect(frame) {
            Ok(p) => p,
            Err(e) => {
                step.diagnostics.push(e.to_string());
                return step;
            }
        };
        match self.state.phase.clone() {
            Phase::AwaitHands if presence.present => {
                self.apply(TimedEvent::new(t, SessionEvent::HandsDetected), &mut step);
            }
            phase if phase.is_rubbing() => {
                if !presence.present {
                    self.absent_streak += 1;
                    if self.absent_streak >= self.config.hands_lost_frames {
                        self.absent_streak = 0;
                        self.apply(TimedEvent::new(t, SessionEvent::HandsLost), &mut step);
                    }
                    return step;
                }
                self.absent_streak = 0;
                let target = phase.target().expect("rubbing phase has a target");
                let scores = self.classifier.classify(frame);
                step.scores = Some(scores);
                self.window.push_back(scores);
                let policy = self.config.session.decision_policy;
                if self.window.len() >= policy.window_n {
                    let window = self.window.make_contiguous();
                    let verdict = decide_step(window, target.into(), &policy).expect("window sized to policy");
                    if verdict.passed {
                        self.apply(
                            TimedEvent::new(t, SessionEvent::StepDecision { step: target, passed: true }),
                            &mut step,
                        );
                    } else {
                        self.window.pop_front();
                    }
                }
            }
            _ => {}
        }
        if !self.state.phase.is_rubbing() {
            self.absent_streak = 0;
        }
        step
    }

    pub fn feed(&mut self, input: &Input) -> DriverStep {
        match input {
            Input::Frame(f) => self.on_frame(f),
            Input::Distance(r) => self.on_distance(*r),
        }
    }

    pub fn on_distance(&mut self, reading: DistanceReading) -> DriverStep {
        let mut step = DriverStep::default();
        if self.is_complete() {
            return step;
        }
        match self.gate.push(reading) {
            Ok(confirmed) => {
                self.apply(TimedEvent::new(reading.t_ms, SessionEvent::Tick), &mut step);
                if let (Some(t), Phase::AwaitDispense) = (confirmed, &self.state.phase) {
                    self.apply(TimedEvent::new(t, SessionEvent::DispenseConfirmed), &mut step);
                }
            }
            Err(e) => step.diagnostics.push(e.to_string()),
        }
        step
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{replay, FeedbackEvent};
    use crate::vision::{ClassIndex, Roi, ScriptedClassifier};

    fn hands_frame(t: u64) -> FrameSample {
        let mut f = FrameSample::uniform(t, 40, 30, [240; 3]).unwrap();
        f.fill_rect(Roi::new(10, 8, 20, 14), [90, 70, 60]);
        f
    }

    fn empty_frame(t: u64) -> FrameSample {
        FrameSample::uniform(t, 40, 30, [240; 3]).unwrap()
    }

    /// Target class scores 0.95 from each `(t, step)` onwards.
    fn script(changes: &[(u64, u8)]) -> ScriptedClassifier {
        let entries = changes
            .iter()
            .map(|&(t, s)| ClassScores::one_hot(t, ClassIndex::new(s).unwrap()))
            .collect();
        ScriptedClassifier::new(entries).unwrap()
    }

    #[test]
    fn hands_then_dispense_then_first_step() {
        let mut d = SessionDriver::new(EngineConfig::default(), Box::new(script(&[(0, 1)]))).unwrap();
        assert!(d.on_frame(&empty_frame(0)).feedback.is_empty());
        let step = d.on_frame(&hands_frame(100));
        assert_eq!(step.feedback[0].event, FeedbackEvent::PromptDispense);
        for i in 0..5 {
            d.on_distance(DistanceReading::new(200 + i * 100, 12.0).unwrap());
        }
        assert!(matches!(d.state().phase, Phase::RubStep { .. }));
        assert_eq!(d.feedback_log().last().unwrap().t_ms, 500);
    }

    #[test]
    fn classifier_passes_step_and_replay_matches() {
        let mut d = SessionDriver::new(EngineConfig::default(), Box::new(script(&[(0, 1), (1000, 2)]))).unwrap();
        d.on_frame(&hands_frame(0));
        for i in 0..4 {
            d.on_distance(DistanceReading::new(100 + i * 100, 12.0).unwrap());
        }
        for i in 0..20 {
            d.on_frame(&hands_frame(500 + i * 100));
        }
        assert!(d.state().passed.contains(&RubStep::new(2).unwrap()));
        // window of 5 starting at t=1000 needs frames up to t=1200 for k=3
        let passed_at = d
            .feedback_log()
            .iter()
            .find(|r| matches!(r.event, FeedbackEvent::MarkPassed(_)))
            .unwrap()
            .t_ms;
        assert_eq!(passed_at, 1200);

        let r = replay(d.event_log(), &d.config().session).unwrap();
        assert_eq!(r.feedback, d.feedback_log());
    }

    #[test]
    fn hands_leaving_interrupts_step() {
        let config = EngineConfig {
            hands_lost_frames: 2,
            ..Default::default()
        };
        let mut d = SessionDriver::new(config, Box::new(script(&[(0, 1)]))).unwrap();
        d.on_frame(&hands_frame(0));
        for i in 0..4 {
            d.on_distance(DistanceReading::new(100 + i * 100, 12.0).unwrap());
        }
        d.on_frame(&empty_frame(600));
        let step = d.on_frame(&empty_frame(700));
        assert_eq!(step.feedback[0].event, FeedbackEvent::PromptHands);
        let step = d.on_frame(&hands_frame(800));
        assert_eq!(
            step.feedback[0].event,
            FeedbackEvent::ShowInstruction(RubStep::new(2).unwrap())
        );
    }

    #[test]
    fn throttled_and_regressed_inputs() {
        let mut d = SessionDriver::new(EngineConfig::default(), Box::new(script(&[]))).unwrap();
        d.on_frame(&empty_frame(1000));
        assert!(d.on_frame(&empty_frame(1050)).throttled);
        let step = d.on_distance(DistanceReading::new(500, 50.0).unwrap());
        assert_eq!(step.diagnostics.len(), 1);
    }
}
