use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::RubStep;

pub const NUM_CLASSES: usize = 9;

/// Classifier output position. 0 is "no hands", 1 is "hands idle", and
/// 2..=8 are the rub steps with the same numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ClassIndex(u8);

impl ClassIndex {
    pub const NO_HANDS: ClassIndex = ClassIndex(0);
    pub const HANDS_IDLE: ClassIndex = ClassIndex(1);

    pub fn new(index: u8) -> Result<Self> {
        if (index as usize) < NUM_CLASSES {
            Ok(Self(index))
        } else {
            Err(Error::Input(format!("class index {index} outside 0..{NUM_CLASSES}")))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ClassIndex> {
        (0..NUM_CLASSES as u8).map(ClassIndex)
    }

    pub fn rub_step(self) -> Option<RubStep> {
        RubStep::new(self.0).ok()
    }

    pub fn name(self) -> String {
        match self.0 {
            0 => "no-hands".into(),
            1 => "hands-idle".into(),
            n => format!("step-{n}"),
        }
    }
}

impl From<RubStep> for ClassIndex {
    fn from(step: RubStep) -> Self {
        ClassIndex(step.index())
    }
}

impl TryFrom<u8> for ClassIndex {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        ClassIndex::new(value)
    }
}

impl From<ClassIndex> for u8 {
    fn from(c: ClassIndex) -> u8 {
        c.0
    }
}

/// Per-class sigmoid outputs for one frame. Every entry lies in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub t_ms: u64,
    scores: [f64; NUM_CLASSES],
}

impl ClassScores {
    pub fn new(t_ms: u64, scores: [f64; NUM_CLASSES]) -> Result<Self> {
        match scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            Some(i) => Err(Error::Input(format!("score[{i}] = {} outside [0,1]", scores[i]))),
            None => Ok(Self { t_ms, scores }),
        }
    }

    /// Clamps into [0, 1]; NaN becomes 0. The flag reports whether anything changed.
    pub fn clamped(t_ms: u64, raw: [f64; NUM_CLASSES]) -> (Self, bool) {
        let mut changed = false;
        let scores = raw.map(|s| {
            let c = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
            changed |= c.to_bits() != s.to_bits();
            c
        });
        (Self { t_ms, scores }, changed)
    }

    pub fn zeros(t_ms: u64) -> Self {
        Self {
            t_ms,
            scores: [0.0; NUM_CLASSES],
        }
    }

    pub fn one_hot(t_ms: u64, class: ClassIndex) -> Self {
        let mut scores = [0.0; NUM_CLASSES];
        scores[class.get()] = 1.0;
        Self { t_ms, scores }
    }

    pub fn scores(&self) -> &[f64; NUM_CLASSES] {
        &self.scores
    }

    pub fn get(&self, class: ClassIndex) -> f64 {
        self.scores[class.get()]
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn argmax(&self) -> ClassIndex {
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if self.scores[i] > self.scores[best] {
                best = i;
            }
        }
        ClassIndex(best as u8)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecisionPolicy {
    pub tau: f64,
    pub window_n: usize,
    pub k_required: usize,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        Self {
            tau: 0.8,
            window_n: 5,
            k_required: 3,
        }
    }
}

impl DecisionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0,1), got {}", self.tau)));
        }
        if self.k_required == 0 || self.k_required > self.window_n {
            return Err(Error::Config(format!(
                "need 1 <= k_required <= window_n, got k={} n={}",
                self.k_required, self.window_n
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub passed: bool,
    pub hits: usize,
}

/// Counts frames whose target-class score reaches `tau`. Only the target
/// score is consulted since the expected step is always known.
pub fn decide_step(window: &[ClassScores], target: ClassIndex, policy: &DecisionPolicy) -> Result<StepVerdict> {
    if window.len() != policy.window_n {
        return Err(Error::Input(format!(
            "decision window has {} frames, policy expects {}",
            window.len(),
            policy.window_n
        )));
    }
    let hits = window.iter().filter(|s| s.get(target) >= policy.tau).count();
    Ok(StepVerdict {
        passed: hits >= policy.k_required,
        hits,
    })
}
