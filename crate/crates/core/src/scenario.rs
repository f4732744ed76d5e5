//! A fixed scripted session used by golden tests and demos.
//!
//! Frames arrive every 100 ms. The user shows hands at 0.5 s, withdraws
//! them briefly during step 4, idles through step 6 until it times out and
//! passes it in the repeat cycle. Three dispenses are confirmed by the
//! scripted distance sensor.

use crate::pipeline::{merge_inputs, Input};
use crate::sensors::DistanceReading;
use crate::vision::{ClassScores, FrameSample, Roi, ScriptedClassifier};

pub const FRAME_WIDTH: u32 = 40;
pub const FRAME_HEIGHT: u32 = 30;
pub const FRAME_PERIOD_MS: u64 = 100;
pub const END_MS: u64 = 16_500;

/// Classifier script: from `t_ms` on, the frame shows class `class`.
pub const GESTURES: &[(u64, u8)] = &[
    (0, 1),
    (1000, 2),
    (1450, 1),
    (2000, 3),
    (2250, 1),
    (3000, 4),
    (3550, 1),
    (3900, 5),
    (4350, 1),
    (14_400, 7),
    (14_850, 8),
    (15_350, 1),
    (15_700, 6),
    (16_150, 1),
];

/// Intervals with the hands in view.
pub const HANDS: &[(u64, u64)] = &[(500, 2500), (3000, END_MS + 1)];

/// Intervals with the hands under the dispenser.
pub const DISPENSER: &[(u64, u64)] = &[(700, 1000), (3600, 3900), (15_400, 15_700)];

fn within(t: u64, spans: &[(u64, u64)], inclusive_end: bool) -> bool {
    spans
        .iter()
        .any(|&(a, b)| t >= a && (t < b || (inclusive_end && t == b)))
}

pub fn classifier() -> ScriptedClassifier {
    let entries = GESTURES
        .iter()
        .map(|&(t, c)| {
            let mut s = [0.02; 9];
            s[c as usize] = 0.93;
            ClassScores::new(t, s).expect("scores in range")
        })
        .collect();
    ScriptedClassifier::new(entries).expect("script is increasing")
}

/// Dark hands on the bright background, or just the background.
pub fn frame(t_ms: u64, hands: bool) -> FrameSample {
    let mut f = FrameSample::uniform(t_ms, FRAME_WIDTH, FRAME_HEIGHT, [240, 240, 240]).expect("non-empty frame");
    if hands {
        f.fill_rect(Roi::new(12, 9, 16, 12), [150, 110, 90]);
    }
    f
}

pub fn frames() -> Vec<FrameSample> {
    (0..=END_MS / FRAME_PERIOD_MS)
        .map(|i| {
            let t = i * FRAME_PERIOD_MS;
            frame(t, within(t, HANDS, false))
        })
        .collect()
}

pub fn readings() -> Vec<DistanceReading> {
    (0..=END_MS / FRAME_PERIOD_MS)
        .map(|i| {
            let t = i * FRAME_PERIOD_MS;
            let cm = if within(t, DISPENSER, true) { 12.0 } else { 45.0 };
            DistanceReading::new(t, cm).expect("valid distance")
        })
        .collect()
}

pub fn inputs() -> Vec<Input> {
    merge_inputs(frames(), readings())
}
