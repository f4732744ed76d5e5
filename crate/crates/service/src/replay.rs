//! Recorded inbound logs: building them from engine inputs and replaying
//! them through a [`Connection`].

use std::io::BufRead;

use handrub_core::metrics::SessionMetrics;
use handrub_core::{EngineConfig, FeedbackRecord, Input};

use crate::connection::{encode_jpeg, encode_raw, ClassifierFactory, Connection};
use crate::protocol::{FrameEncoding, Inbound, Outbound, PROTOCOL_VERSION};

/// A hello followed by one message per input; frames are numbered from 1.
pub fn inbound_log(inputs: &[Input], encoding: FrameEncoding) -> Vec<Inbound> {
    let mut out = vec![Inbound::Hello {
        version: PROTOCOL_VERSION.into(),
        debug_scores: None,
    }];
    let mut seq = 0;
    for input in inputs {
        out.push(match input {
            Input::Frame(f) => {
                seq += 1;
                let data = match encoding {
                    FrameEncoding::RawRgb => encode_raw(f),
                    FrameEncoding::Jpeg => encode_jpeg(f, 90),
                };
                Inbound::Frame {
                    seq,
                    t_ms: f.t_ms,
                    encoding,
                    width: Some(f.width()),
                    height: Some(f.height()),
                    data,
                }
            }
            Input::Distance(r) => Inbound::SensorDistance { t_ms: r.t_ms, cm: r.distance_cm },
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutcome {
    pub outbound: Vec<Outbound>,
    pub feedback: Vec<FeedbackRecord>,
    pub metrics: SessionMetrics,
    /// Inbound lines left unread because the connection closed first.
    pub unread: usize,
}

impl ReplayOutcome {
    pub fn outbound_jsonl(&self) -> String {
        self.outbound.iter().map(|m| m.to_json() + "\n").collect()
    }
}

/// Feeds every line of an inbound log to a fresh connection. Blank lines are
/// skipped; malformed lines produce Error messages like on a live socket.
pub fn replay_lines<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    session_id: &str,
    factory: ClassifierFactory,
    config: EngineConfig,
    debug_scores: bool,
) -> ReplayOutcome {
    let mut conn = Connection::new(session_id, factory, config, debug_scores);
    let mut outbound = Vec::new();
    let mut unread = 0;
    for line in lines.into_iter().filter(|l| !l.trim().is_empty()) {
        if conn.is_closed() {
            unread += 1;
            continue;
        }
        outbound.extend(conn.handle_text(line).messages);
    }
    let (feedback, metrics) = match conn.driver() {
        Some(d) => (d.feedback_log().to_vec(), d.metrics(session_id)),
        None => (Vec::new(), handrub_core::metrics::collect_metrics(session_id, &[])),
    };
    ReplayOutcome {
        outbound,
        feedback,
        metrics,
        unread,
    }
}

pub fn replay_reader(
    reader: impl BufRead,
    session_id: &str,
    factory: ClassifierFactory,
    config: EngineConfig,
    debug_scores: bool,
) -> std::io::Result<ReplayOutcome> {
    let lines = reader.lines().collect::<std::io::Result<Vec<_>>>()?;
    Ok(replay_lines(lines.iter().map(String::as_str), session_id, factory, config, debug_scores))
}
