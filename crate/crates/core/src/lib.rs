//! Engine for guided alcohol-based hand-rub training.
//!
//! The session protocol in [`session`] is a pure state machine; [`pipeline`]
//! feeds it from camera frames and distance readings. [`metrics`] measures
//! feedback logs, [`dataset`] evaluates and trains gesture classifiers, and
//! [`simulate`] produces synthetic timing studies.

pub mod dataset;
pub mod error;
pub mod eventlog;
pub mod metrics;
pub mod pipeline;
pub mod scenario;
pub mod sensors;
pub mod session;
pub mod simulate;
pub mod vision;

pub use error::{Error, Result};
pub use pipeline::{merge_inputs, DriverStep, EngineConfig, Input, SessionDriver};
pub use session::{
    advance, new_session, replay, FeedbackEvent, FeedbackRecord, Phase, RubStep, SessionConfig, SessionEvent,
    SessionState, TimedEvent,
};
