use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::decision::{ClassScores, NUM_CLASSES};
use super::FrameSample;
use crate::dataset::BaselineModel;
use crate::error::{Error, Result};

/// Side length of the square grayscale grid fed to the baseline model.
pub const FEATURE_SIDE: u32 = 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

pub trait GestureClassifier: Send {
    /// Unchecked backend output, one value per class.
    fn raw_scores(&self, frame: &FrameSample) -> [f64; NUM_CLASSES];

    fn descriptor(&self) -> BackendDescriptor;

    /// Scores clamped into [0, 1]; out-of-range backend output is logged.
    fn classify(&self, frame: &FrameSample) -> ClassScores {
        let (scores, clamped) = ClassScores::clamped(frame.t_ms, self.raw_scores(frame));
        if clamped {
            log::warn!(
                "{} produced scores outside [0,1] at t={}ms; clamped",
                self.descriptor().name,
                frame.t_ms
            );
        }
        scores
    }
}

/// Replays a fixed score timeline, ignoring pixel content.
#[derive(Clone, Debug)]
pub struct ScriptedClassifier {
    entries: Vec<ClassScores>,
}

#[derive(Deserialize)]
struct ScriptLine {
    t_ms: u64,
    scores: [f64; NUM_CLASSES],
}

impl ScriptedClassifier {
    pub fn new(entries: Vec<ClassScores>) -> Result<Self> {
        if let Some(w) = entries.windows(2).find(|w| w[1].t_ms <= w[0].t_ms) {
            return Err(Error::Config(format!(
                "classifier script timestamps must increase: {} then {}",
                w[0].t_ms, w[1].t_ms
            )));
        }
        Ok(Self { entries })
    }

    /// Reads JSON lines of `{"t_ms": int, "scores": [9 floats]}`.
    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine = serde_json::from_str(&line)
                .map_err(|e| Error::Config(format!("script line {}: {e}", n + 1)))?;
            let scores = ClassScores::new(parsed.t_ms, parsed.scores)
                .map_err(|e| Error::Config(format!("script line {}: {e}", n + 1)))?;
            entries.push(scores);
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[ClassScores] {
        &self.entries
    }

    /// The entry with the greatest timestamp not after `t_ms`, or zeros.
    pub fn lookup(&self, t_ms: u64) -> ClassScores {
        let idx = self.entries.partition_point(|e| e.t_ms <= t_ms);
        if idx == 0 {
            ClassScores::zeros(t_ms)
        } else {
            let mut found = self.entries[idx - 1];
            found.t_ms = t_ms;
            found
        }
    }
}

impl GestureClassifier for ScriptedClassifier {
    fn raw_scores(&self, frame: &FrameSample) -> [f64; NUM_CLASSES] {
        *self.lookup(frame.t_ms).scores()
    }

    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "scripted".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            digest: None,
        }
    }
}

/// Box-averages the frame luma onto a 32x32 grid, scaled to [0, 1].
pub fn downsample_features(frame: &FrameSample) -> Vec<f64> {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let side = FEATURE_SIDE as usize;
    let lumas: Vec<u8> = frame.lumas().collect();
    let span = |cell: usize, len: usize| {
        let start = cell * len / side;
        let end = ((cell + 1) * len / side).max(start + 1).min(len);
        (start.min(len - 1), end)
    };
    let mut out = Vec::with_capacity(side * side);
    for gy in 0..side {
        let (y0, y1) = span(gy, h);
        for gx in 0..side {
            let (x0, x1) = span(gx, w);
            let mut sum = 0u64;
            for y in y0..y1 {
                sum += lumas[y * w + x0..y * w + x1].iter().map(|&l| l as u64).sum::<u64>();
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            out.push(sum as f64 / n / 255.0);
        }
    }
    out
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One-vs-rest linear model over downsampled grayscale features.
#[derive(Clone, Debug)]
pub struct BaselineClassifier {
    model: BaselineModel,
    digest: String,
}

impl BaselineClassifier {
    pub fn new(model: BaselineModel) -> Result<Self> {
        model.validate()?;
        let expected = (FEATURE_SIDE * FEATURE_SIDE) as usize;
        if model.feature_dim != expected {
            return Err(Error::Config(format!(
                "model feature_dim {} does not match {expected} extracted features",
                model.feature_dim
            )));
        }
        if model.class_count != NUM_CLASSES {
            return Err(Error::Config(format!(
                "model has {} classes, expected {NUM_CLASSES}",
                model.class_count
            )));
        }
        let digest = model.digest();
        Ok(Self { model, digest })
    }

    pub fn model(&self) -> &BaselineModel {
        &self.model
    }
}

impl GestureClassifier for BaselineClassifier {
    fn raw_scores(&self, frame: &FrameSample) -> [f64; NUM_CLASSES] {
        let features = downsample_features(frame);
        let logits = self.model.logits(&features);
        let mut out = [0.0; NUM_CLASSES];
        for (o, z) in out.iter_mut().zip(logits) {
            *o = sigmoid(z);
        }
        out
    }

    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "baseline-linear".into(),
            version: self.model.format.clone(),
            digest: Some(self.digest.clone()),
        }
    }
}
