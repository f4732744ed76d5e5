//! Sanitizer dispense gate.
//!
//! The distance sensor reports one ASCII integer (centimeters) per line.
//! A dispense is confirmed once readings have stayed inside the configured
//! range for `hold_ms`; further confirmations are suppressed for
//! `debounce_ms`.

use std::io::BufRead;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

pub const MAX_DISTANCE_CM: u32 = 500;
pub const DEFAULT_BAUD: u32 = 9600;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LineError {
    #[error("empty line")]
    Empty,
    #[error("not a decimal integer")]
    NonNumeric,
    #[error("negative distance")]
    Negative,
    #[error("distance above {MAX_DISTANCE_CM} cm")]
    OutOfRange,
}

/// Parses `[0-9]+` optionally followed by `\r`, `\n` or `\r\n`.
pub fn parse_distance_line(line: &[u8]) -> std::result::Result<u32, LineError> {
    let body = line.strip_suffix(b"\n").unwrap_or(line);
    let body = body.strip_suffix(b"\r").unwrap_or(body);
    if body.is_empty() {
        return Err(LineError::Empty);
    }
    if let Some(rest) = body.strip_prefix(b"-") {
        if !rest.is_empty() && rest.iter().all(u8::is_ascii_digit) {
            return Err(LineError::Negative);
        }
        return Err(LineError::NonNumeric);
    }
    let mut value: u32 = 0;
    for &b in body {
        if !b.is_ascii_digit() {
            return Err(LineError::NonNumeric);
        }
        value = value.saturating_mul(10).saturating_add((b - b'0') as u32);
    }
    if value > MAX_DISTANCE_CM {
        return Err(LineError::OutOfRange);
    }
    Ok(value)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReading {
    pub t_ms: u64,
    pub distance_cm: f64,
}

impl DistanceReading {
    pub fn new(t_ms: u64, distance_cm: f64) -> Result<Self> {
        if !(distance_cm >= 0.0 && distance_cm.is_finite()) {
            return Err(Error::Input(format!("invalid distance {distance_cm} cm")));
        }
        Ok(Self { t_ms, distance_cm })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DispenseConfig {
    pub min_cm: f64,
    pub max_cm: f64,
    pub hold_ms: u64,
    pub debounce_ms: u64,
}

impl Default for DispenseConfig {
    fn default() -> Self {
        Self {
            min_cm: 5.0,
            max_cm: 30.0,
            hold_ms: 300,
            debounce_ms: 2000,
        }
    }
}

impl DispenseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_cm >= 0.0 && self.min_cm < self.max_cm) {
            return Err(Error::Config(format!(
                "dispense range needs 0 <= min_cm < max_cm, got [{}, {}]",
                self.min_cm, self.max_cm
            )));
        }
        Ok(())
    }

    pub fn in_range(&self, cm: f64) -> bool {
        self.min_cm <= cm && cm <= self.max_cm
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("reading at t={got}ms arrived after t={last}ms; dropped")]
pub struct OutOfOrder {
    pub last: u64,
    pub got: u64,
}

/// Streaming dispense gate: a fold over time-ordered readings.
#[derive(Clone, Debug)]
pub struct DispenseGate {
    config: DispenseConfig,
    run_start: Option<u64>,
    last_t: Option<u64>,
    last_confirm: Option<u64>,
}

impl DispenseGate {
    pub fn new(config: DispenseConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            run_start: None,
            last_t: None,
            last_confirm: None,
        })
    }

    pub fn config(&self) -> &DispenseConfig {
        &self.config
    }

    /// Returns the confirmation instant when this reading completes a hold.
    pub fn push(&mut self, reading: DistanceReading) -> std::result::Result<Option<u64>, OutOfOrder> {
        let t = reading.t_ms;
        if let Some(last) = self.last_t {
            if t < last {
                return Err(OutOfOrder { last, got: t });
            }
        }
        self.last_t = Some(t);
        if !self.config.in_range(reading.distance_cm) {
            self.run_start = None;
            return Ok(None);
        }
        let start = *self.run_start.get_or_insert(t);
        let held = t - start >= self.config.hold_ms;
        let rested = self
            .last_confirm
            .is_none_or(|c| t - c >= self.config.debounce_ms);
        if held && rested {
            self.last_confirm = Some(t);
            Ok(Some(t))
        } else {
            Ok(None)
        }
    }
}

/// Runs a whole stream through a fresh gate. Out-of-order readings are
/// dropped and logged.
pub fn evaluate_dispense_gate(readings: &[DistanceReading], config: &DispenseConfig) -> Result<Vec<u64>> {
    let mut gate = DispenseGate::new(*config)?;
    let mut confirmations = Vec::new();
    for r in readings {
        match gate.push(*r) {
            Ok(Some(t)) => confirmations.push(t),
            Ok(None) => {}
            Err(e) => log::warn!("{e}"),
        }
    }
    Ok(confirmations)
}

/// Scripted distance source for tests and demos.
#[derive(Clone, Debug, Default)]
pub struct ScriptedSensor {
    readings: Vec<DistanceReading>,
}

#[derive(Deserialize)]
struct ScriptLine {
    t_ms: u64,
    cm: f64,
}

impl ScriptedSensor {
    pub fn new(readings: Vec<DistanceReading>) -> Result<Self> {
        if let Some(w) = readings.windows(2).find(|w| w[1].t_ms <= w[0].t_ms) {
            return Err(Error::Config(format!(
                "sensor script timestamps must increase: {} then {}",
                w[0].t_ms, w[1].t_ms
            )));
        }
        Ok(Self { readings })
    }

    /// Reads JSON lines of `{"t_ms": int, "cm": number}`.
    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut readings = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine = serde_json::from_str(&line)
                .map_err(|e| Error::Config(format!("sensor script line {}: {e}", n + 1)))?;
            readings.push(
                DistanceReading::new(parsed.t_ms, parsed.cm)
                    .map_err(|e| Error::Config(format!("sensor script line {}: {e}", n + 1)))?,
            );
        }
        Self::new(readings)
    }

    /// As fast as possible.
    pub fn readings(&self) -> impl Iterator<Item = DistanceReading> + '_ {
        self.readings.iter().copied()
    }

    /// Delivers readings at their scripted offsets from the first one.
    pub fn replay_paced(&self, mut sink: impl FnMut(DistanceReading)) {
        let Some(first) = self.readings.first() else {
            return;
        };
        let origin = Instant::now();
        for r in &self.readings {
            let due = Duration::from_millis(r.t_ms - first.t_ms);
            if let Some(wait) = due.checked_sub(origin.elapsed()) {
                std::thread::sleep(wait);
            }
            sink(*r);
        }
    }
}

/// Reads distance lines from a serial device (or any byte stream), stamping
/// each with `clock()` at receive time. Lines longer than 64 bytes are
/// rejected as non-numeric.
pub struct LineReader<R> {
    inner: R,
    buf: Vec<u8>,
}

impl<R: BufRead> LineReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: Vec::with_capacity(64),
        }
    }

    /// `None` at end of stream.
    pub fn next_reading(
        &mut self,
        clock: impl FnOnce() -> u64,
    ) -> Option<std::io::Result<std::result::Result<DistanceReading, LineError>>> {
        self.buf.clear();
        match self.inner.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                let t_ms = clock();
                if self.buf.len() > 64 {
                    return Some(Ok(Err(LineError::NonNumeric)));
                }
                Some(Ok(parse_distance_line(&self.buf).map(|cm| DistanceReading {
                    t_ms,
                    distance_cm: cm as f64,
                })))
            }
            Err(e) => Some(Err(e)),
        }
    }
}
