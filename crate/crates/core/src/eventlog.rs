//! JSON-lines logs of session events and feedback.
//!
//! Every line is `{"t_ms": int, "event": string, "args": object}`. Keys in
//! `args` are written in sorted order so identical logs are byte-identical.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::session::{Completion, FeedbackEvent, FeedbackRecord, RubStep, SessionEvent, TimedEvent};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub t_ms: u64,
    pub event: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

impl LogLine {
    fn new(t_ms: u64, event: &str, args: Value) -> Self {
        let args = match args {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        Self {
            t_ms,
            event: event.into(),
            args,
        }
    }

    fn arg<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .args
            .get(key)
            .ok_or_else(|| Error::Input(format!("{}: missing argument {key:?}", self.event)))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Input(format!("{}: argument {key:?}: {e}", self.event)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log line serializes")
    }
}

impl From<&TimedEvent> for LogLine {
    fn from(e: &TimedEvent) -> Self {
        let (name, args) = match &e.event {
            SessionEvent::HandsDetected => ("hands_detected", json!({})),
            SessionEvent::HandsLost => ("hands_lost", json!({})),
            SessionEvent::DispenseConfirmed => ("dispense_confirmed", json!({})),
            SessionEvent::StepDecision { step, passed } => ("step_decision", json!({"step": step, "passed": passed})),
            SessionEvent::Timeout { step } => ("timeout", json!({"step": step})),
            SessionEvent::Tick => ("tick", json!({})),
        };
        LogLine::new(e.t_ms, name, args)
    }
}

impl TryFrom<&LogLine> for TimedEvent {
    type Error = Error;

    fn try_from(line: &LogLine) -> Result<Self> {
        let event = match line.event.as_str() {
            "hands_detected" => SessionEvent::HandsDetected,
            "hands_lost" => SessionEvent::HandsLost,
            "dispense_confirmed" => SessionEvent::DispenseConfirmed,
            "step_decision" => SessionEvent::StepDecision {
                step: line.arg("step")?,
                passed: line.arg("passed")?,
            },
            "timeout" => SessionEvent::Timeout { step: line.arg("step")? },
            "tick" => SessionEvent::Tick,
            other => return Err(Error::Input(format!("unknown session event {other:?}"))),
        };
        Ok(TimedEvent::new(line.t_ms, event))
    }
}

impl From<&FeedbackRecord> for LogLine {
    fn from(r: &FeedbackRecord) -> Self {
        let (name, args) = match &r.event {
            FeedbackEvent::ShowInstruction(s) => ("show_instruction", json!({"step": s})),
            FeedbackEvent::MarkPassed(s) => ("mark_passed", json!({"step": s})),
            FeedbackEvent::PromptDispense => ("prompt_dispense", json!({})),
            FeedbackEvent::PromptHands => ("prompt_hands", json!({})),
            FeedbackEvent::AnnounceRepeat(q) => ("announce_repeat", json!({"queue": q})),
            FeedbackEvent::AnnounceComplete(c) => (
                "announce_complete",
                json!({"all_passed": c.all_passed, "cycles": c.cycles}),
            ),
        };
        LogLine::new(r.t_ms, name, args)
    }
}

impl TryFrom<&LogLine> for FeedbackRecord {
    type Error = Error;

    fn try_from(line: &LogLine) -> Result<Self> {
        let event = match line.event.as_str() {
            "show_instruction" => FeedbackEvent::ShowInstruction(line.arg("step")?),
            "mark_passed" => FeedbackEvent::MarkPassed(line.arg("step")?),
            "prompt_dispense" => FeedbackEvent::PromptDispense,
            "prompt_hands" => FeedbackEvent::PromptHands,
            "announce_repeat" => FeedbackEvent::AnnounceRepeat(line.arg::<Vec<RubStep>>("queue")?),
            "announce_complete" => FeedbackEvent::AnnounceComplete(Completion {
                all_passed: line.arg("all_passed")?,
                cycles: line.arg("cycles")?,
            }),
            other => return Err(Error::Input(format!("unknown feedback event {other:?}"))),
        };
        Ok(FeedbackRecord { t_ms: line.t_ms, event })
    }
}

pub fn read_lines(reader: impl BufRead) -> Result<Vec<LogLine>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Input(format!("log line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn read_event_log(reader: impl BufRead) -> Result<Vec<TimedEvent>> {
    read_lines(reader)?.iter().map(TimedEvent::try_from).collect()
}

pub fn read_feedback_log(reader: impl BufRead) -> Result<Vec<FeedbackRecord>> {
    read_lines(reader)?.iter().map(FeedbackRecord::try_from).collect()
}

pub fn write_event_log<'a>(mut w: impl Write, events: impl IntoIterator<Item = &'a TimedEvent>) -> Result<()> {
    for e in events {
        writeln!(w, "{}", LogLine::from(e).to_json())?;
    }
    Ok(())
}

pub fn write_feedback_log<'a>(mut w: impl Write, records: impl IntoIterator<Item = &'a FeedbackRecord>) -> Result<()> {
    for r in records {
        writeln!(w, "{}", LogLine::from(r).to_json())?;
    }
    Ok(())
}

pub fn feedback_log_string(records: &[FeedbackRecord]) -> String {
    let mut buf = Vec::new();
    write_feedback_log(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}
