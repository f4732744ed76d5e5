use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{ClipEntry, DatasetManifest, FrameSource};
use crate::error::{Error, Result};
use crate::vision::{ClassIndex, ClassScores, GestureClassifier, NUM_CLASSES};

/// Probabilities are clamped to [EPS, 1 - EPS] before taking logs.
pub const LOSS_EPS: f64 = 1e-7;

/// Rows are true classes, columns argmax predictions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; NUM_CLASSES]; NUM_CLASSES]);

impl ConfusionMatrix {
    pub fn add(&mut self, truth: ClassIndex, predicted: ClassIndex) {
        self.0[truth.get()][predicted.get()] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.0[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.0[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        self.0.map(|row| row.iter().sum())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.0.iter_mut().flatten().zip(other.0.iter().flatten()) {
            *a += b;
        }
    }

    /// Header row of predicted class names, one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in ClassIndex::all() {
            let _ = write!(out, ",{}", c.name());
        }
        out.push('\n');
        for (c, row) in ClassIndex::all().zip(self.0.iter()) {
            out.push_str(&c.name());
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipError {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean binary cross-entropy over frames and classes.
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub n_frames: u64,
    /// Fraction of clips that decoded.
    pub completeness: f64,
    pub clip_errors: Vec<ClipError>,
}

fn frame_bce(truth: ClassIndex, scores: &ClassScores) -> f64 {
    let sum: f64 = scores
        .scores()
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
            if c == truth.get() {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    sum / NUM_CLASSES as f64
}

/// Streaming reduction behind [`EvalReport`]. `merge` combines partial
/// results from independent workers.
#[derive(Clone, Debug, Default)]
pub struct EvalAccumulator {
    loss_sum: f64,
    confusion: ConfusionMatrix,
}

impl EvalAccumulator {
    pub fn add(&mut self, truth: ClassIndex, scores: &ClassScores) {
        self.loss_sum += frame_bce(truth, scores);
        self.confusion.add(truth, scores.argmax());
    }

    pub fn merge(&mut self, other: &EvalAccumulator) {
        self.loss_sum += other.loss_sum;
        self.confusion.merge(&other.confusion);
    }

    pub fn n_frames(&self) -> u64 {
        self.confusion.total()
    }

    pub fn finish(self, completeness: f64, clip_errors: Vec<ClipError>) -> Result<EvalReport> {
        let n = self.confusion.total();
        if n == 0 {
            return Err(Error::Input("no frames were evaluated".into()));
        }
        Ok(EvalReport {
            loss: self.loss_sum / n as f64,
            accuracy: self.confusion.trace() as f64 / n as f64,
            confusion: self.confusion,
            n_frames: n,
            completeness,
            clip_errors,
        })
    }
}

/// Scores already computed, paired with their true labels.
pub fn evaluate_scores<'a>(items: impl IntoIterator<Item = (ClassIndex, &'a ClassScores)>) -> Result<EvalReport> {
    let mut acc = EvalAccumulator::default();
    for (truth, scores) in items {
        acc.add(truth, scores);
    }
    acc.finish(1.0, Vec::new())
}

/// Classifies every sampled frame of every clip. Clips that fail to decode
/// are recorded and skipped.
pub fn evaluate_classifier(
    classifier: &dyn GestureClassifier,
    eval_set: &DatasetManifest,
    source: &dyn FrameSource,
    stride: usize,
) -> Result<EvalReport> {
    evaluate_clips(eval_set, source, stride, |_| classifier)
}

/// Like [`evaluate_classifier`], with the classifier chosen per clip.
pub fn evaluate_clips<'c>(
    eval_set: &DatasetManifest,
    source: &dyn FrameSource,
    stride: usize,
    classifier_for: impl Fn(&ClipEntry) -> &'c dyn GestureClassifier,
) -> Result<EvalReport> {
    if eval_set.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    let mut acc = EvalAccumulator::default();
    let mut clip_errors = Vec::new();
    for clip in &eval_set.clips {
        match source.frames(eval_set, clip, stride) {
            Ok(frames) => {
                let classifier = classifier_for(clip);
                for frame in &frames {
                    acc.add(clip.label, &classifier.classify(frame));
                }
            }
            Err(e) => clip_errors.push(ClipError {
                path: clip.path.clone(),
                message: e.to_string(),
            }),
        }
    }
    let completeness = 1.0 - clip_errors.len() as f64 / eval_set.len() as f64;
    acc.finish(completeness, clip_errors)
}
