use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatasetManifest, FrameSource};
use crate::error::{Error, Result};
use crate::vision::{downsample_features, sigmoid, ClassIndex, FEATURE_SIDE, NUM_CLASSES};

pub const MODEL_FORMAT: &str = "handrub-baseline/1";

/// Per-class linear scorer. Stored as JSON; see the README for the schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub format: String,
    pub feature_dim: usize,
    pub class_count: usize,
    /// `class_count` rows of `feature_dim` weights.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    /// Digest of the manifest the model was trained on.
    pub trained_on: String,
}

impl BaselineModel {
    pub fn zeros(trained_on: impl Into<String>) -> Self {
        let feature_dim = (FEATURE_SIDE * FEATURE_SIDE) as usize;
        Self {
            format: MODEL_FORMAT.into(),
            feature_dim,
            class_count: NUM_CLASSES,
            weights: vec![vec![0.0; feature_dim]; NUM_CLASSES],
            biases: vec![0.0; NUM_CLASSES],
            trained_on: trained_on.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Config(format!(
                "unsupported model format {:?}, expected {MODEL_FORMAT:?}",
                self.format
            )));
        }
        if self.weights.len() != self.class_count || self.biases.len() != self.class_count {
            return Err(Error::Config(format!(
                "model has {} weight rows and {} biases for {} classes",
                self.weights.len(),
                self.biases.len(),
                self.class_count
            )));
        }
        if let Some((i, row)) = self.weights.iter().enumerate().find(|(_, r)| r.len() != self.feature_dim) {
            return Err(Error::Config(format!(
                "weight row {i} has {} entries, feature_dim is {}",
                row.len(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    /// SHA-256 over dimensions, little-endian parameter bits and the
    /// training digest.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.format.as_bytes());
        h.update((self.feature_dim as u64).to_le_bytes());
        h.update((self.class_count as u64).to_le_bytes());
        for row in &self.weights {
            for w in row {
                h.update(w.to_le_bytes());
            }
        }
        for b in &self.biases {
            h.update(b.to_le_bytes());
        }
        h.update(self.trained_on.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }
}

/// Feature vectors with their labels.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<ClassIndex>,
}

impl TrainingSet {
    pub fn push(&mut self, features: Vec<f64>, label: ClassIndex) {
        self.features.push(features);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn extract_training_set(manifest: &DatasetManifest, source: &dyn FrameSource, stride: usize) -> Result<TrainingSet> {
    let mut set = TrainingSet::default();
    for clip in &manifest.clips {
        for frame in source.frames(manifest, clip, stride)? {
            set.push(downsample_features(&frame), clip.label);
        }
    }
    Ok(set)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Seeds the per-epoch shuffle of mini-batches.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            lr: 0.5,
            batch_size: Some(32),
            seed: 0,
        }
    }
}

/// Loss gradient with respect to the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

/// Numerically stable BCE on a logit: max(z,0) - z y + ln(1 + e^-|z|).
fn bce_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl BaselineModel {
    /// Mean one-vs-rest cross-entropy over the samples at `indices` and all classes.
    pub fn loss(&self, set: &TrainingSet, indices: &[usize]) -> f64 {
        let mut total = 0.0;
        for &i in indices {
            let logits = self.logits(&set.features[i]);
            for (c, z) in logits.into_iter().enumerate() {
                let y = if c == set.labels[i].get() { 1.0 } else { 0.0 };
                total += bce_logit(z, y);
            }
        }
        total / (indices.len() * self.class_count) as f64
    }

    pub fn loss_and_gradient(&self, set: &TrainingSet, indices: &[usize]) -> (f64, Gradient) {
        let scale = 1.0 / (indices.len() * self.class_count) as f64;
        let mut grad = Gradient {
            weights: vec![vec![0.0; self.feature_dim]; self.class_count],
            biases: vec![0.0; self.class_count],
        };
        let mut total = 0.0;
        for &i in indices {
            let x = &set.features[i];
            let logits = self.logits(x);
            for (c, z) in logits.into_iter().enumerate() {
                let y = if c == set.labels[i].get() { 1.0 } else { 0.0 };
                total += bce_logit(z, y);
                let dz = (sigmoid(z) - y) * scale;
                grad.biases[c] += dz;
                for (g, xj) in grad.weights[c].iter_mut().zip(x) {
                    *g += dz * xj;
                }
            }
        }
        (total * scale, grad)
    }

    fn step(&mut self, grad: &Gradient, lr: f64) {
        for (row, grow) in self.weights.iter_mut().zip(&grad.weights) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= lr * g;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            *b -= lr * g;
        }
    }
}

/// Gradient descent from zero weights. Returns the model and the full-set
/// loss after each epoch.
pub fn train_baseline(
    set: &TrainingSet,
    config: &TrainConfig,
    trained_on: impl Into<String>,
) -> Result<(BaselineModel, Vec<f64>)> {
    if set.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let dim = (FEATURE_SIDE * FEATURE_SIDE) as usize;
    if let Some(bad) = set.features.iter().find(|f| f.len() != dim) {
        return Err(Error::Input(format!("feature vector of length {}, expected {dim}", bad.len())));
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", config.lr)));
    }
    let mut model = BaselineModel::zeros(trained_on);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let all: Vec<usize> = order.clone();
    let batch = config.batch_size.unwrap_or(set.len()).clamp(1, set.len());
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        if batch < set.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (_, grad) = model.loss_and_gradient(set, chunk);
            model.step(&grad, config.lr);
        }
        history.push(model.loss(set, &all));
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::{BaselineClassifier, FrameSample, GestureClassifier};

    fn toy_set() -> TrainingSet {
        let mut set = TrainingSet::default();
        for i in 0..10u8 {
            let dark = FrameSample::uniform(0, 32, 32, [10 + i; 3]).unwrap();
            let light = FrameSample::uniform(0, 32, 32, [230 + i; 3]).unwrap();
            set.push(downsample_features(&dark), ClassIndex::NO_HANDS);
            set.push(downsample_features(&light), ClassIndex::HANDS_IDLE);
        }
        set
    }

    #[test]
    fn zero_epochs_keeps_zero_weights() {
        let config = TrainConfig { epochs: 0, ..Default::default() };
        let (model, history) = train_baseline(&toy_set(), &config, "toy").unwrap();
        assert_eq!(model, BaselineModel::zeros("toy"));
        assert!(history.is_empty());
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(train_baseline(&TrainingSet::default(), &TrainConfig::default(), "x").is_err());
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let set = toy_set();
        let config = TrainConfig {
            epochs: 50,
            lr: 0.5,
            batch_size: None,
            seed: 1,
        };
        let (model, history) = train_baseline(&set, &config, "toy").unwrap();
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "loss rose: {} -> {}", w[0], w[1]);
        }
        let classifier = BaselineClassifier::new(model).unwrap();
        for (i, label) in set.labels.iter().enumerate() {
            let v = if label.get() == 0 { 10 + (i / 2) as u8 } else { 230 + (i / 2) as u8 };
            let frame = FrameSample::uniform(0, 32, 32, [v; 3]).unwrap();
            let scores = classifier.classify(&frame);
            let other = if label.get() == 0 { 1 } else { 0 };
            assert!(scores.scores()[label.get()] > scores.scores()[other]);
        }
    }

    #[test]
    fn save_load_keeps_digest() {
        let (model, _) = train_baseline(&toy_set(), &TrainConfig { epochs: 3, ..Default::default() }, "toy").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        model.save(&p).unwrap();
        let back = BaselineModel::load(&p).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.digest(), model.digest());
    }

    #[test]
    fn malformed_model_is_rejected() {
        let mut model = BaselineModel::zeros("x");
        model.biases.pop();
        assert!(model.validate().is_err());
        let mut model = BaselineModel::zeros("x");
        model.format = "other".into();
        assert!(model.validate().is_err());
    }
}
