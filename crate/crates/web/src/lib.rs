//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and slices and returns bytes or a JSON
//! string, so the same functions run in native tests. Failures come back as
//! `{"error": "..."}`.

use handrub_core::dataset::synth::{gesture_frame, SubjectStyle, SynthSpec};
use handrub_core::metrics::who_compliance_check;
use handrub_core::simulate::{simulate, DurationModel, SimulationConfig};
use handrub_core::vision::{
    compute_foreground_mask, decide_step, hand_presence, BackgroundModel, ClassIndex, ClassScores, DecisionPolicy,
    FrameSample, PresenceConfig, NUM_CLASSES,
};
use handrub_core::RubStep;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn error(message: impl ToString) -> String {
    json!({ "error": message.to_string() }).to_string()
}

fn from_rgba(rgba: &[u8], width: u32, height: u32) -> Result<FrameSample, String> {
    if rgba.len() != width as usize * height as usize * 4 {
        return Err(format!("expected {width}x{height} RGBA pixels, got {} bytes", rgba.len()));
    }
    let rgb = rgba.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
    FrameSample::new(0, width, height, rgb).map_err(|e| e.to_string())
}

/// RGBA image of a generated gesture frame of class `class`.
#[wasm_bindgen]
pub fn synthetic_frame(class: u8, seed: u32, width: u32, height: u32) -> Vec<u8> {
    let Ok(class) = ClassIndex::new(class) else {
        return Vec::new();
    };
    if width < 8 || height < 8 {
        return Vec::new();
    }
    let spec = SynthSpec {
        width,
        height,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let style = SubjectStyle::sample(&mut rng);
    let frame = gesture_frame(class, style, &spec, 0, &mut rng);
    frame.pixels().chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// The input with foreground pixels tinted red and background dimmed.
/// Empty when the input size does not match.
#[wasm_bindgen]
pub fn segment_overlay(rgba: &[u8], width: u32, height: u32, reference_luma: u8, tolerance: u8) -> Vec<u8> {
    let Ok(frame) = from_rgba(rgba, width, height) else {
        return Vec::new();
    };
    let mask = compute_foreground_mask(&frame, &BackgroundModel { reference_luma, tolerance });
    rgba.chunks_exact(4)
        .zip(mask.bits())
        .flat_map(|(p, &fg)| {
            if fg {
                [255, p[1] / 3, p[2] / 3, 255]
            } else {
                [p[0] / 3, p[1] / 3, p[2] / 3, 255]
            }
        })
        .collect()
}

/// `{"present", "coverage", "foreground", "roi"}` for the frame.
#[wasm_bindgen]
pub fn presence_json(
    rgba: &[u8],
    width: u32,
    height: u32,
    reference_luma: u8,
    tolerance: u8,
    roi_fraction: f64,
    min_coverage: f64,
) -> String {
    let frame = match from_rgba(rgba, width, height) {
        Ok(f) => f,
        Err(e) => return error(e),
    };
    let config = PresenceConfig {
        background: BackgroundModel { reference_luma, tolerance },
        roi_fraction: Some(roi_fraction),
        min_coverage,
    };
    let mask = compute_foreground_mask(&frame, &config.background);
    let roi = config.roi_for(width, height);
    match hand_presence(&mask, roi, min_coverage) {
        Ok(p) => json!({
            "present": p.present,
            "coverage": p.coverage,
            "foreground": mask.count(),
            "roi": roi,
        })
        .to_string(),
        Err(e) => error(e),
    }
}

/// Applies the k-of-n rule to a window given as consecutive rows of nine
/// scores.
#[wasm_bindgen]
pub fn decide_json(scores: &[f64], target: u8, tau: f64, k_required: usize) -> String {
    if scores.is_empty() || scores.len() % NUM_CLASSES != 0 {
        return error(format!("{} scores do not form rows of {NUM_CLASSES}", scores.len()));
    }
    let target = match ClassIndex::new(target) {
        Ok(t) => t,
        Err(e) => return error(e),
    };
    let window: Result<Vec<ClassScores>, String> = scores
        .chunks_exact(NUM_CLASSES)
        .enumerate()
        .map(|(i, row)| {
            ClassScores::new(i as u64, row.try_into().expect("row of nine")).map_err(|e| format!("row {}: {e}", i + 1))
        })
        .collect();
    let window = match window {
        Ok(w) => w,
        Err(e) => return error(e),
    };
    let policy = DecisionPolicy {
        tau,
        window_n: window.len(),
        k_required,
    };
    if let Err(e) = policy.validate() {
        return error(e);
    }
    match decide_step(&window, target, &policy) {
        Ok(v) => {
            let hit_rows: Vec<bool> = window.iter().map(|s| s.get(target) >= tau).collect();
            json!({ "passed": v.passed, "hits": v.hits, "hit_rows": hit_rows }).to_string()
        }
        Err(e) => error(e),
    }
}

/// Simulates sessions with normally distributed step durations; `means` has
/// one entry per step, 2 through 8.
#[wasm_bindgen]
pub fn simulate_json(means: &[f64], sigma: f64, sessions: usize, seed: u32) -> String {
    if means.len() != RubStep::COUNT {
        return error(format!("need {} step means, got {}", RubStep::COUNT, means.len()));
    }
    let mut config = SimulationConfig::default();
    for (step, &mean) in RubStep::all().zip(means) {
        config.steps.insert(step, DurationModel::normal(mean, sigma));
    }
    match simulate(&config, sessions, seed as u64) {
        Ok(out) => {
            let totals: Vec<f64> = out.sessions.iter().map(|s| s.metrics.total_rub_s).collect();
            let mut report = serde_json::to_value(&out.report).expect("report serializes");
            report["totals"] = Value::from(totals);
            report["mean_compliant"] = Value::from(who_compliance_check(out.report.mean_total_s));
            report.to_string()
        }
        Err(e) => error(e),
    }
}
