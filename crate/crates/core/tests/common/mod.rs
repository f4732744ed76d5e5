//! Independent reference implementations used by the property tests and
//! the acceptance harness. Each one is written straight from the rule it
//! checks, without reusing the code under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

use handrub_core::dataset::{BaselineModel, TrainingSet};
use handrub_core::sensors::{DispenseConfig, DistanceReading};
use handrub_core::session::{
    advance, new_session, Completion, FeedbackEvent, FeedbackRecord, Phase, RubStep, SessionConfig, SessionEvent,
    SessionState, TimedEvent,
};
use handrub_core::vision::{ClassIndex, ClassScores, FrameSample, NUM_CLASSES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn step(i: u8) -> RubStep {
    RubStep::new(i).unwrap()
}

// ---------------------------------------------------------------- session

/// How one attempt at the current target ends, plus optional distractions.
#[derive(Clone, Copy, Debug)]
pub struct Attempt {
    pub pass: bool,
    /// A failed attempt ends through a late `Tick` instead of an explicit `Timeout`.
    pub via_tick: bool,
    pub rub_ms: u64,
    /// Inserts events that must not change anything.
    pub noise: bool,
    /// Hands leave and come back before the attempt ends.
    pub interrupt: bool,
}

impl Attempt {
    pub const PASS: Attempt = Attempt {
        pass: true,
        via_tick: false,
        rub_ms: 1000,
        noise: false,
        interrupt: false,
    };
}

pub struct Driven {
    pub events: Vec<TimedEvent>,
    pub feedback: Vec<FeedbackRecord>,
    pub states: Vec<SessionState>,
    pub final_state: SessionState,
}

/// Drives a fresh session with the attempts in order; once they run out,
/// every further attempt passes.
pub fn drive(attempts: &[Attempt], config: &SessionConfig) -> Driven {
    let timeout = config.step_timeout_ms();
    let mut state = new_session(config).unwrap();
    let mut events = Vec::new();
    let mut feedback = Vec::new();
    let mut states = vec![state.clone()];
    let mut t = 0u64;
    let mut used = 0usize;

    let mut apply = |state: &mut SessionState, ev: TimedEvent| {
        let (next, out) = advance(state, &ev, config).expect("driver only sends valid events");
        feedback.extend(out.into_iter().map(|e| FeedbackRecord { t_ms: ev.t_ms, event: e }));
        events.push(ev);
        *state = next;
        states.push(state.clone());
    };

    apply(&mut state, TimedEvent::new(t, SessionEvent::HandsDetected));
    for _ in 0..10_000 {
        match state.phase.clone() {
            Phase::Complete => break,
            Phase::AwaitDispense => {
                t += 500;
                apply(&mut state, TimedEvent::new(t, SessionEvent::DispenseConfirmed));
            }
            Phase::AwaitHands => unreachable!("driver always returns hands"),
            phase => {
                let target = phase.target().unwrap();
                let a = attempts.get(used).copied().unwrap_or(Attempt::PASS);
                used += 1;
                if a.noise {
                    t += 1;
                    apply(&mut state, TimedEvent::new(t, SessionEvent::StepDecision { step: target, passed: false }));
                    apply(&mut state, TimedEvent::new(t, SessionEvent::DispenseConfirmed));
                    apply(&mut state, TimedEvent::new(t, SessionEvent::HandsDetected));
                }
                if a.interrupt {
                    t += 1;
                    apply(&mut state, TimedEvent::new(t, SessionEvent::HandsLost));
                    t += 1;
                    apply(&mut state, TimedEvent::new(t, SessionEvent::DispenseConfirmed));
                    apply(&mut state, TimedEvent::new(t, SessionEvent::HandsDetected));
                }
                if a.pass {
                    t = state.step_entered_at + a.rub_ms.min(timeout);
                    apply(&mut state, TimedEvent::new(t, SessionEvent::Tick));
                    apply(&mut state, TimedEvent::new(t, SessionEvent::StepDecision { step: target, passed: true }));
                } else if a.via_tick {
                    t = state.step_entered_at + timeout + 1;
                    apply(&mut state, TimedEvent::new(t, SessionEvent::Tick));
                } else {
                    t = state.step_entered_at + a.rub_ms.min(timeout);
                    apply(&mut state, TimedEvent::new(t, SessionEvent::Timeout { step: target }));
                }
            }
        }
    }
    Driven {
        events,
        feedback,
        states,
        final_state: state,
    }
}

/// Straight-line reading of the protocol: walk the agenda, defer failures,
/// prompt a dispense before the first group and after every completed group
/// that still has work behind it, then run repeat cycles over the deferred
/// steps until they are exhausted or the cycle budget is spent.
pub fn reference_feedback(attempts: &[Attempt], config: &SessionConfig) -> Vec<FeedbackEvent> {
    let mut outcomes = attempts.iter().map(|a| a.pass).chain(std::iter::repeat(true));
    let group = config.group_size;
    let max_cycles = config.max_repeat_cycles;
    let mut out = Vec::new();
    if config.dispense_before_first_group {
        out.push(FeedbackEvent::PromptDispense);
    }
    let mut passed = BTreeSet::new();
    let mut since = 0;
    let mut agenda: Vec<RubStep> = (2..=8).map(step).collect();
    let mut cycle = 0;
    loop {
        let mut deferred: Vec<RubStep> = Vec::new();
        for i in 0..agenda.len() {
            let s = agenda[i];
            out.push(FeedbackEvent::ShowInstruction(s));
            if outcomes.next().unwrap() {
                out.push(FeedbackEvent::MarkPassed(s));
                passed.insert(s);
                since += 1;
                if since == group {
                    since = 0;
                    let more_here = i + 1 < agenda.len();
                    let more_later = !deferred.is_empty() && cycle < max_cycles;
                    if more_here || more_later {
                        out.push(FeedbackEvent::PromptDispense);
                    }
                }
            } else {
                deferred.push(s);
            }
        }
        if deferred.is_empty() || cycle == max_cycles {
            out.push(FeedbackEvent::AnnounceComplete(Completion {
                all_passed: passed.len() == 7,
                cycles: cycle,
            }));
            return out;
        }
        cycle += 1;
        out.push(FeedbackEvent::AnnounceRepeat(deferred.clone()));
        agenda = deferred;
    }
}

/// Removes hand-loss prompts together with the instruction re-shown on return.
pub fn without_interruptions(feedback: &[FeedbackRecord]) -> Vec<FeedbackEvent> {
    let mut out = Vec::new();
    let mut skip_show = false;
    for r in feedback {
        match &r.event {
            FeedbackEvent::PromptHands => skip_show = true,
            FeedbackEvent::ShowInstruction(_) if skip_show => skip_show = false,
            e => out.push(e.clone()),
        }
    }
    out
}

/// Checks the re-dispense cadence of a feedback log: the k-th dispense
/// prompt comes after exactly (k-1) complete groups of passes, and every
/// instruction is shown under the dispense of its own group.
pub fn cadence_violations(feedback: &[FeedbackEvent], group: u32) -> Vec<String> {
    let group = group as usize;
    let mut violations = Vec::new();
    let mut marks = 0usize;
    let mut dispenses = 0usize;
    for (i, e) in feedback.iter().enumerate() {
        match e {
            FeedbackEvent::PromptDispense => {
                dispenses += 1;
                if marks != (dispenses - 1) * group {
                    violations.push(format!("#{i}: dispense {dispenses} after {marks} passes"));
                }
                if i > 0 && dispenses > 1 && !matches!(feedback[i - 1], FeedbackEvent::MarkPassed(_)) {
                    violations.push(format!("#{i}: dispense not directly after a pass"));
                }
            }
            FeedbackEvent::MarkPassed(_) => marks += 1,
            FeedbackEvent::ShowInstruction(_) => {
                if dispenses != marks / group + 1 {
                    violations.push(format!("#{i}: instruction with {dispenses} dispenses after {marks} passes"));
                }
            }
            _ => {}
        }
    }
    violations
}

/// Steps 2..=8 minus `passed`, by filtering the full list.
pub fn pending_oracle(passed: &BTreeSet<RubStep>) -> Vec<RubStep> {
    let mut out = Vec::new();
    for i in 2..=8u8 {
        if !passed.iter().any(|p| p.index() == i) {
            out.push(step(i));
        }
    }
    out
}

// ----------------------------------------------------------------- vision

/// Luma by search: the integer L with 1000 L - 500 <= 299 R + 587 G + 114 B < 1000 L + 500.
pub fn luma_oracle(rgb: [u8; 3]) -> u8 {
    let w = 299 * rgb[0] as i64 + 587 * rgb[1] as i64 + 114 * rgb[2] as i64;
    (0..=255i64)
        .find(|l| 1000 * l - 500 <= w && w < 1000 * l + 500)
        .expect("weighted sum within range") as u8
}

pub fn mask_oracle(frame: &FrameSample, reference: u8, tolerance: u8) -> Vec<bool> {
    let mut out = Vec::new();
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            let l = luma_oracle(frame.pixel(x, y)) as i32;
            out.push((l - reference as i32).abs() > tolerance as i32);
        }
    }
    out
}

pub fn decide_oracle(window: &[ClassScores], target: usize, tau: f64, k: usize) -> (bool, usize) {
    let mut hits = 0;
    for s in window {
        if s.scores()[target] >= tau {
            hits += 1;
        }
    }
    (hits >= k, hits)
}

// ---------------------------------------------------------------- sensors

/// A reading at `t` confirms when some reading at or before `t - hold` starts
/// an unbroken in-range stretch through `t`; confirmations closer than the
/// debounce to the previous one are dropped.
pub fn gate_oracle(readings: &[DistanceReading], config: &DispenseConfig) -> Vec<u64> {
    let in_range = |r: &DistanceReading| config.min_cm <= r.distance_cm && r.distance_cm <= config.max_cm;
    let mut out: Vec<u64> = Vec::new();
    for (j, r) in readings.iter().enumerate() {
        let t = r.t_ms;
        let candidate = (0..=j).any(|i| {
            readings[i].t_ms + config.hold_ms <= t && readings[i..=j].iter().all(in_range)
        });
        if candidate && out.last().is_none_or(|&c| t - c >= config.debounce_ms) {
            out.push(t);
        }
    }
    out
}

// ---------------------------------------------------------------- dataset

pub struct EvalOracle {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

pub fn eval_oracle(truth: &[usize], scores: &[ClassScores]) -> EvalOracle {
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let mut total = 0.0;
    let mut correct = 0usize;
    for (f, s) in scores.iter().enumerate() {
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if s.scores()[c] > s.scores()[best] {
                best = c;
            }
        }
        confusion[truth[f]][best] += 1;
        if best == truth[f] {
            correct += 1;
        }
        let mut frame_loss = 0.0;
        for c in 0..NUM_CLASSES {
            let p = s.scores()[c].max(1e-7).min(1.0 - 1e-7);
            let y = if c == truth[f] { 1.0 } else { 0.0 };
            frame_loss += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        }
        total += frame_loss / NUM_CLASSES as f64;
    }
    EvalOracle {
        loss: total / scores.len() as f64,
        accuracy: correct as f64 / scores.len() as f64,
        confusion,
    }
}

/// Mean one-vs-rest BCE through probabilities, computed directly.
pub fn training_loss_oracle(model: &BaselineModel, set: &TrainingSet) -> f64 {
    let mut total = 0.0;
    for (x, label) in set.features.iter().zip(&set.labels) {
        for c in 0..model.class_count {
            let mut z = model.biases[c];
            for j in 0..model.feature_dim {
                z += model.weights[c][j] * x[j];
            }
            let p = 1.0 / (1.0 + (-z).exp());
            let y = if c == label.get() { 1.0 } else { 0.0 };
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
    }
    total / (set.len() * model.class_count) as f64
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> TrainingSet {
    let mut set = TrainingSet::default();
    for _ in 0..n {
        let x: Vec<f64> = (0..1024).map(|_| rng.random_range(0.0..1.0)).collect();
        set.push(x, ClassIndex::new(rng.random_range(0..9)).unwrap());
    }
    set
}

/// Central differences on the training loss at a handful of random
/// coordinates of a random, non-trivial model.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = random_set(&mut rng, 12);
    let mut model = BaselineModel::zeros("g");
    for row in &mut model.weights {
        for w in row.iter_mut() {
            *w = rng.random_range(-0.02..0.02);
        }
    }
    for b in &mut model.biases {
        *b = rng.random_range(-1.0..1.0);
    }
    let all: Vec<usize> = (0..set.len()).collect();
    let (loss, grad) = model.loss_and_gradient(&set, &all);
    assert!((loss - training_loss_oracle(&model, &set)).abs() < 1e-9);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let c = rng.random_range(0..9);
        let j = rng.random_range(0..=1024);
        let mut plus = model.clone();
        let mut minus = model.clone();
        let analytic = if j == 1024 {
            plus.biases[c] += h;
            minus.biases[c] -= h;
            grad.biases[c]
        } else {
            plus.weights[c][j] += h;
            minus.weights[c][j] -= h;
            grad.weights[c][j]
        };
        let numeric = (training_loss_oracle(&plus, &set) - training_loss_oracle(&minus, &set)) / (2.0 * h);
        worst = worst.max(relative_error(analytic, numeric));
    }
    worst
}
