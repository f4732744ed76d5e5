//! The guided hand-rub protocol as a pure state machine.
//!
//! A session walks through hand detection, sanitizer dispensing and the
//! seven rub steps (WHO steps 2 to 8). Passed steps are counted in groups;
//! once a group is complete the user is sent back to the dispenser before
//! the next group starts. Steps that time out are deferred to a repeat
//! cycle at the end of the pass.
//!
//! [`advance`] never reads a clock: time enters only through the
//! timestamps carried by [`TimedEvent`], and step timeouts are synthesized
//! from [`SessionEvent::Tick`].

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::vision::DecisionPolicy;

/// A WHO hand-rub step number. Only steps 2 through 8 are rub steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "StepRepr", into = "u8")]
pub struct RubStep(u8);

/// Steps are numbers, but map keys arrive as strings.
#[derive(Deserialize)]
#[serde(untagged)]
enum StepRepr {
    Number(u8),
    Text(String),
}

impl RubStep {
    pub const FIRST: u8 = 2;
    pub const LAST: u8 = 8;
    pub const COUNT: usize = 7;

    pub fn new(index: u8) -> Result<Self> {
        if (Self::FIRST..=Self::LAST).contains(&index) {
            Ok(Self(index))
        } else {
            Err(Error::Input(format!(
                "rub step {index} outside {}..={}",
                Self::FIRST,
                Self::LAST
            )))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// All rub steps in guideline order.
    pub fn all() -> impl Iterator<Item = RubStep> + Clone {
        (Self::FIRST..=Self::LAST).map(RubStep)
    }
}

impl TryFrom<u8> for RubStep {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        RubStep::new(value)
    }
}

impl TryFrom<StepRepr> for RubStep {
    type Error = Error;

    fn try_from(value: StepRepr) -> Result<Self> {
        match value {
            StepRepr::Number(n) => RubStep::new(n),
            StepRepr::Text(s) => {
                let n = s.parse().map_err(|_| Error::Input(format!("rub step {s:?} is not a number")))?;
                RubStep::new(n)
            }
        }
    }
}

impl From<RubStep> for u8 {
    fn from(step: RubStep) -> u8 {
        step.0
    }
}

impl fmt::Display for RubStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phase {
    AwaitHands,
    AwaitDispense,
    RubStep { target: RubStep },
    /// End-of-pass repeat of deferred steps. `queue` holds the steps still to
    /// be attempted in this cycle; its head is the current target.
    RepeatCycle { queue: Vec<RubStep> },
    Complete,
}

impl Phase {
    /// The step currently being rubbed, if any.
    pub fn target(&self) -> Option<RubStep> {
        match self {
            Phase::RubStep { target } => Some(*target),
            Phase::RepeatCycle { queue } => queue.first().copied(),
            _ => None,
        }
    }

    pub fn is_rubbing(&self) -> bool {
        self.target().is_some()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Phase::AwaitHands => "await_hands",
            Phase::AwaitDispense => "await_dispense",
            Phase::RubStep { .. } => "rub_step",
            Phase::RepeatCycle { .. } => "repeat_cycle",
            Phase::Complete => "complete",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub step_timeout_s: f64,
    pub group_size: u32,
    pub dispense_before_first_group: bool,
    pub max_repeat_cycles: u32,
    pub decision_policy: DecisionPolicy,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            step_timeout_s: 10.0,
            group_size: 3,
            dispense_before_first_group: true,
            max_repeat_cycles: 3,
            decision_policy: DecisionPolicy::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_timeout_s.is_finite() && self.step_timeout_s > 0.0) {
            return Err(Error::Config(format!(
                "step_timeout_s must be positive, got {}",
                self.step_timeout_s
            )));
        }
        if self.group_size == 0 {
            return Err(Error::Config("group_size must be at least 1".into()));
        }
        self.decision_policy.validate()
    }

    pub fn step_timeout_ms(&self) -> u64 {
        (self.step_timeout_s * 1000.0).round() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionEvent {
    HandsDetected,
    HandsLost,
    DispenseConfirmed,
    StepDecision { step: RubStep, passed: bool },
    Timeout { step: RubStep },
    /// Clock tick; the current time is the timestamp of the enclosing [`TimedEvent`].
    Tick,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t_ms: u64,
    pub event: SessionEvent,
}

impl TimedEvent {
    pub fn new(t_ms: u64, event: SessionEvent) -> Self {
        Self { t_ms, event }
    }
}

/// Summary attached to the final feedback event of a session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    /// All seven steps were marked passed. False when the session ended
    /// because the repeat-cycle budget ran out.
    pub all_passed: bool,
    pub cycles: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedbackEvent {
    ShowInstruction(RubStep),
    MarkPassed(RubStep),
    PromptDispense,
    PromptHands,
    AnnounceRepeat(Vec<RubStep>),
    AnnounceComplete(Completion),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub t_ms: u64,
    pub event: FeedbackEvent,
}

/// Rejected events. The state is left untouched when one of these is returned.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("event at t={got}ms precedes previous event at t={last}ms")]
    TimeRegression { last: u64, got: u64 },
    #[error("decision for step {got} but current target is {}", display_target(.expected))]
    NotTarget { expected: Option<RubStep>, got: RubStep },
    #[error("timeout for step {got} but current target is {}", display_target(.expected))]
    UnexpectedTimeout { expected: Option<RubStep>, got: RubStep },
}

fn display_target(target: &Option<RubStep>) -> String {
    match target {
        Some(step) => step.to_string(),
        None => "none".into(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub phase: Phase,
    pub passed: BTreeSet<RubStep>,
    /// Steps deferred by a timeout, to be attempted in the next repeat cycle.
    pub repeat_queue: Vec<RubStep>,
    pub steps_since_dispense: u32,
    pub step_entered_at: u64,
    pub cycle: u32,
    /// Steps still to be attempted in the current pass, head first.
    agenda: VecDeque<RubStep>,
    last_t_ms: u64,
    started: bool,
}

impl SessionState {
    pub fn agenda(&self) -> impl Iterator<Item = RubStep> + '_ {
        self.agenda.iter().copied()
    }

    pub fn last_t_ms(&self) -> u64 {
        self.last_t_ms
    }

    pub fn is_complete(&self) -> bool {
        self.phase == Phase::Complete
    }

    fn rub_phase(&self, head: RubStep) -> Phase {
        if self.cycle == 0 {
            Phase::RubStep { target: head }
        } else {
            Phase::RepeatCycle {
                queue: self.agenda.iter().copied().collect(),
            }
        }
    }

    fn has_more_work(&self, config: &SessionConfig) -> bool {
        !self.agenda.is_empty()
            || (!self.repeat_queue.is_empty() && self.cycle < config.max_repeat_cycles)
    }

    fn show_head(&mut self, t_ms: u64, out: &mut Vec<FeedbackEvent>) {
        let head = *self.agenda.front().expect("agenda checked non-empty");
        self.phase = self.rub_phase(head);
        self.step_entered_at = t_ms;
        out.push(FeedbackEvent::ShowInstruction(head));
    }

    fn present_next(&mut self, t_ms: u64, config: &SessionConfig, out: &mut Vec<FeedbackEvent>) {
        if !self.agenda.is_empty() {
            self.show_head(t_ms, out);
        } else if !self.repeat_queue.is_empty() && self.cycle < config.max_repeat_cycles {
            self.cycle += 1;
            self.agenda = std::mem::take(&mut self.repeat_queue).into();
            out.push(FeedbackEvent::AnnounceRepeat(self.agenda.iter().copied().collect()));
            self.show_head(t_ms, out);
        } else {
            self.phase = Phase::Complete;
            out.push(FeedbackEvent::AnnounceComplete(Completion {
                all_passed: self.passed.len() == RubStep::COUNT,
                cycles: self.cycle,
            }));
        }
    }

    fn pass(&mut self, step: RubStep, t_ms: u64, config: &SessionConfig, out: &mut Vec<FeedbackEvent>) {
        self.agenda.pop_front();
        self.passed.insert(step);
        out.push(FeedbackEvent::MarkPassed(step));
        self.steps_since_dispense += 1;
        if self.steps_since_dispense >= config.group_size {
            self.steps_since_dispense = 0;
            if self.has_more_work(config) {
                self.phase = Phase::AwaitDispense;
                out.push(FeedbackEvent::PromptDispense);
                return;
            }
        }
        self.present_next(t_ms, config, out);
    }

    fn time_out(&mut self, step: RubStep, t_ms: u64, config: &SessionConfig, out: &mut Vec<FeedbackEvent>) {
        self.agenda.pop_front();
        if !self.repeat_queue.contains(&step) {
            self.repeat_queue.push(step);
        }
        self.present_next(t_ms, config, out);
    }
}

pub fn new_session(config: &SessionConfig) -> Result<SessionState> {
    config.validate()?;
    Ok(SessionState {
        phase: Phase::AwaitHands,
        passed: BTreeSet::new(),
        repeat_queue: Vec::new(),
        steps_since_dispense: 0,
        step_entered_at: 0,
        cycle: 0,
        agenda: RubStep::all().collect(),
        last_t_ms: 0,
        started: false,
    })
}

/// Steps not yet passed, in guideline order. Deferred steps are included;
/// the repeat queue itself is reported separately on the state.
pub fn pending_steps(state: &SessionState) -> Vec<RubStep> {
    RubStep::all().filter(|s| !state.passed.contains(s)).collect()
}

/// Applies one event. Identical inputs always produce identical outputs.
///
/// Advancing a completed session is a no-op. On error the caller keeps the
/// previous state; the error is a diagnostic, not a session failure.
pub fn advance(
    state: &SessionState,
    event: &TimedEvent,
    config: &SessionConfig,
) -> std::result::Result<(SessionState, Vec<FeedbackEvent>), ProtocolError> {
    if state.is_complete() {
        return Ok((state.clone(), Vec::new()));
    }
    let t = event.t_ms;
    if t < state.last_t_ms {
        return Err(ProtocolError::TimeRegression {
            last: state.last_t_ms,
            got: t,
        });
    }

    let mut next = state.clone();
    next.last_t_ms = t;
    let mut out = Vec::new();
    let target = state.phase.target();

    match (&state.phase, &event.event) {
        (Phase::AwaitHands, SessionEvent::HandsDetected) => {
            if next.started && !next.agenda.is_empty() {
                // resume the interrupted step with a fresh timer
                next.show_head(t, &mut out);
            } else if !next.started && config.dispense_before_first_group {
                next.started = true;
                next.phase = Phase::AwaitDispense;
                out.push(FeedbackEvent::PromptDispense);
            } else {
                next.started = true;
                next.present_next(t, config, &mut out);
            }
        }
        (Phase::AwaitDispense, SessionEvent::DispenseConfirmed) => {
            next.present_next(t, config, &mut out);
        }
        (_, SessionEvent::StepDecision { step, passed }) => {
            if target != Some(*step) {
                return Err(ProtocolError::NotTarget {
                    expected: target,
                    got: *step,
                });
            }
            if *passed {
                next.pass(*step, t, config, &mut out);
            }
        }
        (_, SessionEvent::Timeout { step }) => {
            if target != Some(*step) {
                return Err(ProtocolError::UnexpectedTimeout {
                    expected: target,
                    got: *step,
                });
            }
            next.time_out(*step, t, config, &mut out);
        }
        (phase, SessionEvent::HandsLost) if phase.is_rubbing() => {
            next.phase = Phase::AwaitHands;
            out.push(FeedbackEvent::PromptHands);
        }
        (phase, SessionEvent::Tick) if phase.is_rubbing() => {
            if t.saturating_sub(state.step_entered_at) > config.step_timeout_ms() {
                let step = target.expect("rubbing phase has a target");
                next.time_out(step, t, config, &mut out);
            }
        }
        _ => {}
    }
    Ok((next, out))
}

/// Result of feeding a whole event log through a fresh session.
#[derive(Clone, Debug)]
pub struct Replay {
    pub state: SessionState,
    pub feedback: Vec<FeedbackRecord>,
    /// Rejected events, by position in the input log.
    pub rejected: Vec<(usize, ProtocolError)>,
}

pub fn replay<'a>(
    events: impl IntoIterator<Item = &'a TimedEvent>,
    config: &SessionConfig,
) -> Result<Replay> {
    let mut state = new_session(config)?;
    let mut feedback = Vec::new();
    let mut rejected = Vec::new();
    for (i, event) in events.into_iter().enumerate() {
        match advance(&state, event, config) {
            Ok((next, out)) => {
                state = next;
                let t_ms = event.t_ms;
                feedback.extend(out.into_iter().map(|fb| FeedbackRecord { t_ms, event: fb }));
            }
            Err(e) => rejected.push((i, e)),
        }
    }
    Ok(Replay {
        state,
        feedback,
        rejected,
    })
}
