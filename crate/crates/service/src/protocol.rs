//! Message types of the hh/1 wire contract.
//!
//! Every message is one JSON text frame with a `type` field naming the
//! variant. Field names are part of the contract.

use handrub_core::eventlog::LogLine;
use handrub_core::metrics::SessionMetrics;
use handrub_core::vision::NUM_CLASSES;
use handrub_core::{EngineConfig, FeedbackRecord, RubStep, SessionState};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: &str = "hh/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameEncoding {
    Jpeg,
    /// Tightly packed RGB rows; `width` and `height` are required.
    RawRgb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlAction {
    Start,
    Abort,
    ConfigOverride,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Inbound {
    Hello {
        version: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        debug_scores: Option<bool>,
    },
    Frame {
        seq: u64,
        t_ms: u64,
        encoding: FrameEncoding,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        height: Option<u32>,
        data: String,
    },
    SensorDistance {
        t_ms: u64,
        cm: f64,
    },
    Control {
        action: ControlAction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<EngineConfig>,
    },
}

impl Inbound {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("inbound message serializes")
    }

    pub fn is_frame(&self) -> bool {
        matches!(self, Inbound::Frame { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub phase: String,
    pub target_step: Option<RubStep>,
    pub passed: Vec<RubStep>,
    pub repeat_queue: Vec<RubStep>,
    pub steps_since_dispense: u32,
    pub cycle: u32,
}

impl From<&SessionState> for StateView {
    fn from(s: &SessionState) -> Self {
        Self {
            phase: s.phase.name().into(),
            target_step: s.phase.target(),
            passed: s.passed.iter().copied().collect(),
            repeat_queue: s.repeat_queue.clone(),
            steps_since_dispense: s.steps_since_dispense,
            cycle: s.cycle,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    State(StateView),
    /// Same shape as a feedback log line: `t_ms`, `event`, `args`.
    Feedback(LogLine),
    Scores {
        t_ms: u64,
        scores: [f64; NUM_CLASSES],
        /// Frames dropped under load since the previous Scores message.
        dropped_frames: u64,
    },
    Metrics {
        metrics: SessionMetrics,
    },
    Error {
        code: String,
        message: String,
    },
}

impl Outbound {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Outbound::Error {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn feedback(record: &FeedbackRecord) -> Self {
        Outbound::Feedback(record.into())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("outbound message serializes")
    }
}

/// Error codes sent in [`Outbound::Error`].
pub mod codes {
    pub const MALFORMED: &str = "malformed";
    pub const HANDSHAKE: &str = "handshake";
    pub const VERSION: &str = "version";
    pub const SEQ_ORDER: &str = "seq-order";
    pub const DECODE: &str = "decode";
    pub const INVALID: &str = "invalid";
    pub const STATE: &str = "state";
    pub const ENGINE: &str = "engine";
}
