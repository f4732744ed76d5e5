//! Rub timing per step and per session, aggregation across sessions and the
//! WHO 20-30 s duration check.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{FeedbackEvent, FeedbackRecord, RubStep};

pub const WHO_MIN_RUB_S: f64 = 20.0;
pub const WHO_MAX_RUB_S: f64 = 30.0;

/// Inclusive on both ends.
pub fn who_compliance_check(total_rub_s: f64) -> bool {
    (WHO_MIN_RUB_S..=WHO_MAX_RUB_S).contains(&total_rub_s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    /// Rub time per step, summed over every attempt at that step.
    pub step_timings: BTreeMap<RubStep, f64>,
    pub dispense_durations_s: Vec<f64>,
    /// Sum of `step_timings`; dispensing is excluded.
    pub total_rub_s: f64,
    pub compliant: bool,
    /// False when the log ends without an `AnnounceComplete`.
    pub complete: bool,
    pub all_passed: bool,
}

/// Measures a feedback log.
///
/// An attempt at step `s` runs from `ShowInstruction(s)` to the next
/// feedback entry, whichever it is: `MarkPassed(s)` for a pass, otherwise
/// the entry produced by the timeout or hand loss that ended it. A dispense
/// runs from `PromptDispense` to the next entry, which is emitted when the
/// dispense is confirmed.
pub fn collect_metrics(session_id: impl Into<String>, log: &[FeedbackRecord]) -> SessionMetrics {
    let mut step_ms: BTreeMap<RubStep, u64> = BTreeMap::new();
    let mut dispense_ms = Vec::new();
    let mut attempt: Option<(RubStep, u64)> = None;
    let mut dispense: Option<u64> = None;
    let mut complete = false;
    let mut all_passed = false;

    for record in log {
        let t = record.t_ms;
        if let Some((step, start)) = attempt.take() {
            *step_ms.entry(step).or_default() += t.saturating_sub(start);
        }
        if let Some(start) = dispense.take() {
            dispense_ms.push(t.saturating_sub(start));
        }
        match &record.event {
            FeedbackEvent::ShowInstruction(step) => attempt = Some((*step, t)),
            FeedbackEvent::PromptDispense => dispense = Some(t),
            FeedbackEvent::AnnounceComplete(c) => {
                complete = true;
                all_passed = c.all_passed;
            }
            _ => {}
        }
    }

    let step_timings: BTreeMap<RubStep, f64> =
        step_ms.into_iter().map(|(s, ms)| (s, ms as f64 / 1000.0)).collect();
    let total_rub_s = step_timings.values().sum();
    SessionMetrics {
        session_id: session_id.into(),
        step_timings,
        dispense_durations_s: dispense_ms.into_iter().map(|ms| ms as f64 / 1000.0).collect(),
        total_rub_s,
        compliant: who_compliance_check(total_rub_s),
        complete,
        all_passed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// Mean over the sessions that contain the step.
    pub per_step_mean_s: BTreeMap<RubStep, f64>,
    pub mean_total_s: f64,
    pub n_sessions: usize,
    pub compliance_rate: f64,
}

pub fn aggregate(sessions: &[SessionMetrics]) -> Result<AggregateReport> {
    if sessions.is_empty() {
        return Err(Error::Input("cannot aggregate zero sessions".into()));
    }
    let mut sums: BTreeMap<RubStep, (f64, usize)> = BTreeMap::new();
    for m in sessions {
        for (&step, &d) in &m.step_timings {
            let e = sums.entry(step).or_default();
            e.0 += d;
            e.1 += 1;
        }
    }
    let n = sessions.len();
    Ok(AggregateReport {
        per_step_mean_s: sums.into_iter().map(|(s, (sum, k))| (s, sum / k as f64)).collect(),
        mean_total_s: sessions.iter().map(|m| m.total_rub_s).sum::<f64>() / n as f64,
        n_sessions: n,
        compliance_rate: sessions.iter().filter(|m| m.compliant).count() as f64 / n as f64,
    })
}

/// `step,mean_s`, one row per step, then a `total` row.
pub fn report_csv(report: &AggregateReport) -> String {
    let mut out = String::from("step,mean_s\n");
    for (step, mean) in &report.per_step_mean_s {
        let _ = writeln!(out, "{step},{mean}");
    }
    let _ = writeln!(out, "total,{}", report.mean_total_s);
    out
}

/// `session_id,step,duration_s`, one row per session and step.
pub fn sessions_csv(sessions: &[SessionMetrics]) -> String {
    let mut out = String::from("session_id,step,duration_s\n");
    for m in sessions {
        for (step, d) in &m.step_timings {
            let _ = writeln!(out, "{},{step},{d}", m.session_id);
        }
    }
    out
}
