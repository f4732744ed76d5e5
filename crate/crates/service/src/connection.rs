//! Per-connection protocol engine without any I/O.
//!
//! The transport hands each text message to [`Connection::handle_text`] and
//! writes back whatever it returns, so a recorded inbound log replays to the
//! same outbound log with no server involved.

use std::sync::Arc;

use base64::Engine as _;
use handrub_core::sensors::DistanceReading;
use handrub_core::vision::{FrameSample, GestureClassifier};
use handrub_core::{DriverStep, EngineConfig, FeedbackEvent, SessionDriver};

use crate::protocol::{codes, ControlAction, FrameEncoding, Inbound, Outbound, StateView, PROTOCOL_VERSION};

pub type ClassifierFactory = Arc<dyn Fn() -> Box<dyn GestureClassifier> + Send + Sync>;

/// Messages to send, in order, and whether to close afterwards.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Reply {
    pub messages: Vec<Outbound>,
    pub close: bool,
}

impl Reply {
    fn push(&mut self, m: Outbound) {
        self.messages.push(m);
    }

    fn error(code: &str, message: impl Into<String>) -> Self {
        Self {
            messages: vec![Outbound::error(code, message)],
            close: false,
        }
    }
}

pub struct Connection {
    session_id: String,
    factory: ClassifierFactory,
    config: EngineConfig,
    debug_scores: bool,
    driver: Option<SessionDriver>,
    last_seq: Option<u64>,
    inputs_seen: bool,
    dropped_frames: u64,
    closed: bool,
}

impl Connection {
    pub fn new(session_id: impl Into<String>, factory: ClassifierFactory, config: EngineConfig, debug_scores: bool) -> Self {
        Self {
            session_id: session_id.into(),
            factory,
            config,
            debug_scores,
            driver: None,
            last_seq: None,
            inputs_seen: false,
            dropped_frames: 0,
            closed: false,
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn driver(&self) -> Option<&SessionDriver> {
        self.driver.as_ref()
    }

    /// Records frames discarded by the transport before they reached the
    /// engine. The count is reported with the next Scores message.
    pub fn note_dropped_frames(&mut self, n: u64) {
        self.dropped_frames += n;
    }

    pub fn handle_text(&mut self, text: &str) -> Reply {
        match Inbound::parse(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => self.handle_malformed(e),
        }
    }

    pub fn handle_malformed(&mut self, reason: String) -> Reply {
        if self.closed {
            return Reply::default();
        }
        if self.driver.is_none() {
            return self.close_with(Outbound::error(codes::HANDSHAKE, format!("expected hello: {reason}")));
        }
        Reply::error(codes::MALFORMED, reason)
    }

    pub fn handle(&mut self, msg: Inbound) -> Reply {
        if self.closed {
            return Reply::default();
        }
        let Some(driver) = self.driver.as_mut() else {
            return self.greet(msg);
        };
        match msg {
            Inbound::Hello { .. } => Reply::error(codes::HANDSHAKE, "hello already received"),
            Inbound::Frame {
                seq,
                t_ms,
                encoding,
                width,
                height,
                data,
            } => {
                if let Some(last) = self.last_seq.filter(|&last| seq <= last) {
                    return Reply::error(codes::SEQ_ORDER, format!("frame seq {seq} after {last}; dropped"));
                }
                self.last_seq = Some(seq);
                let frame = match decode_frame(t_ms, encoding, width, height, &data) {
                    Ok(f) => f,
                    Err(e) => return Reply::error(codes::DECODE, format!("frame seq {seq}: {e}; dropped")),
                };
                self.inputs_seen = true;
                let step = driver.on_frame(&frame);
                self.finish_step(step)
            }
            Inbound::SensorDistance { t_ms, cm } => {
                let reading = match DistanceReading::new(t_ms, cm) {
                    Ok(r) => r,
                    Err(e) => return Reply::error(codes::INVALID, e.to_string()),
                };
                self.inputs_seen = true;
                let step = driver.on_distance(reading);
                self.finish_step(step)
            }
            Inbound::Control { action, config } => self.control(action, config),
        }
    }

    fn greet(&mut self, msg: Inbound) -> Reply {
        let Inbound::Hello { version, debug_scores } = msg else {
            return self.close_with(Outbound::error(codes::HANDSHAKE, "first message must be hello"));
        };
        if version != PROTOCOL_VERSION {
            return self.close_with(Outbound::error(
                codes::VERSION,
                format!("unsupported protocol {version:?}, server speaks {PROTOCOL_VERSION}"),
            ));
        }
        if let Some(on) = debug_scores {
            self.debug_scores = on;
        }
        self.restart()
    }

    fn restart(&mut self) -> Reply {
        match SessionDriver::new(self.config.clone(), (self.factory)()) {
            Ok(d) => {
                let state = Outbound::State(StateView::from(d.state()));
                self.driver = Some(d);
                self.inputs_seen = false;
                Reply {
                    messages: vec![state],
                    close: false,
                }
            }
            Err(e) => self.close_with(Outbound::error(codes::INVALID, e.to_string())),
        }
    }

    fn control(&mut self, action: ControlAction, config: Option<EngineConfig>) -> Reply {
        match (action, config) {
            (ControlAction::Start, None) => self.restart(),
            (ControlAction::Abort, None) => {
                let metrics = self.current_metrics();
                self.close_with(metrics)
            }
            (ControlAction::ConfigOverride, Some(config)) => {
                if self.inputs_seen {
                    return Reply::error(codes::STATE, "config-override is only accepted before the first input");
                }
                if let Err(e) = config.validate() {
                    return Reply::error(codes::INVALID, e.to_string());
                }
                self.config = config;
                self.restart()
            }
            (ControlAction::ConfigOverride, None) => Reply::error(codes::MALFORMED, "config-override needs a config"),
            (_, Some(_)) => Reply::error(codes::MALFORMED, "only config-override takes a config"),
        }
    }

    fn current_metrics(&self) -> Outbound {
        let driver = self.driver.as_ref().expect("session started");
        Outbound::Metrics {
            metrics: driver.metrics(&self.session_id),
        }
    }

    fn finish_step(&mut self, step: DriverStep) -> Reply {
        let mut reply = Reply::default();
        for d in step.diagnostics {
            reply.push(Outbound::error(codes::ENGINE, d));
        }
        if let (Some(s), true) = (step.scores, self.debug_scores) {
            reply.push(Outbound::Scores {
                t_ms: s.t_ms,
                scores: *s.scores(),
                dropped_frames: std::mem::take(&mut self.dropped_frames),
            });
        }
        if step.feedback.is_empty() {
            return reply;
        }
        let done = step
            .feedback
            .iter()
            .any(|r| matches!(r.event, FeedbackEvent::AnnounceComplete(_)));
        reply.messages.extend(step.feedback.iter().map(Outbound::feedback));
        let driver = self.driver.as_ref().expect("session started");
        reply.push(Outbound::State(StateView::from(driver.state())));
        if done {
            reply.push(self.current_metrics());
            reply.close = true;
            self.closed = true;
        }
        reply
    }

    fn close_with(&mut self, m: Outbound) -> Reply {
        self.closed = true;
        Reply {
            messages: vec![m],
            close: true,
        }
    }
}

/// Keeps the newest `backlog` frames (at least one) of a batch of pending
/// messages; every other message keeps its place. Returns the survivors and
/// the number of frames removed.
pub fn coalesce_frames(batch: Vec<Result<Inbound, String>>, backlog: usize) -> (Vec<Result<Inbound, String>>, u64) {
    let is_frame = |m: &Result<Inbound, String>| matches!(m, Ok(f) if f.is_frame());
    let frames = batch.iter().filter(|m| is_frame(m)).count();
    let mut excess = frames.saturating_sub(backlog.max(1));
    let dropped = excess as u64;
    let kept = batch
        .into_iter()
        .filter(|m| {
            if excess > 0 && is_frame(m) {
                excess -= 1;
                return false;
            }
            true
        })
        .collect();
    (kept, dropped)
}

pub fn decode_frame(
    t_ms: u64,
    encoding: FrameEncoding,
    width: Option<u32>,
    height: Option<u32>,
    data: &str,
) -> Result<FrameSample, String> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| format!("base64: {e}"))?;
    match encoding {
        FrameEncoding::RawRgb => {
            let (Some(w), Some(h)) = (width, height) else {
                return Err("raw-rgb frames need width and height".into());
            };
            FrameSample::new(t_ms, w, h, bytes).map_err(|e| e.to_string())
        }
        FrameEncoding::Jpeg => {
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Jpeg)
                .map_err(|e| format!("jpeg: {e}"))?
                .to_rgb8();
            if width.is_some_and(|w| w != img.width()) || height.is_some_and(|h| h != img.height()) {
                return Err(format!(
                    "declared size {width:?}x{height:?} differs from decoded {}x{}",
                    img.width(),
                    img.height()
                ));
            }
            let (w, h) = img.dimensions();
            FrameSample::new(t_ms, w, h, img.into_raw()).map_err(|e| e.to_string())
        }
    }
}

/// Base64 text of raw RGB pixels, as sent in a `raw-rgb` frame.
pub fn encode_raw(frame: &FrameSample) -> String {
    base64::engine::general_purpose::STANDARD.encode(frame.pixels())
}

/// Base64 JPEG of a frame, as sent in a `jpeg` frame.
pub fn encode_jpeg(frame: &FrameSample, quality: u8) -> String {
    let mut buf = Vec::new();
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, quality)
        .encode(frame.pixels(), frame.width(), frame.height(), image::ExtendedColorType::Rgb8)
        .expect("in-memory jpeg encoding");
    base64::engine::general_purpose::STANDARD.encode(buf)
}
