//! Dataset manifests, train/validation/test splits, classifier evaluation
//! and the linear baseline classifier.

mod clips;
mod eval;
mod model;
pub mod synth;

pub use clips::{decode_mjpeg, FileClipDecoder, FrameSource, MemoryClips};
pub use eval::{evaluate_classifier, evaluate_clips, evaluate_scores, ClipError, ConfusionMatrix, EvalAccumulator, EvalReport};
pub use model::{
    extract_training_set, train_baseline, BaselineModel, Gradient, TrainConfig, TrainingSet, MODEL_FORMAT,
};

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::vision::ClassIndex;

/// Frames are sampled from clips at this stride unless configured otherwise.
pub const DEFAULT_FRAME_STRIDE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    Green,
    Wooden,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub subject_id: String,
    pub background: Background,
    pub label: ClassIndex,
    pub frame_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub clips: Vec<ClipEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(clips: Vec<ClipEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let manifest = Self {
            clips,
            base_dir: base_dir.into(),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, clip) in self.clips.iter().enumerate() {
            if clip.subject_id.trim().is_empty() {
                return Err(Error::Input(format!("clips[{i}]: empty subject_id")));
            }
            if !seen.insert(&clip.path) {
                return Err(Error::Input(format!(
                    "clips[{i}]: duplicate path {}",
                    clip.path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn resolve(&self, clip: &ClipEntry) -> PathBuf {
        self.base_dir.join(&clip.path)
    }

    fn subset(&self, clips: Vec<ClipEntry>) -> Self {
        Self {
            clips,
            base_dir: self.base_dir.clone(),
        }
    }

    /// SHA-256 over the canonical JSON of the clip list.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(&self.clips).expect("manifest serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Loads and validates a manifest. Errors name the file and, for schema
/// problems, the line and column.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let load_err = |message: String| Error::Load {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| load_err(format!("schema error: {e}")))?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate().map_err(|e| load_err(e.to_string()))?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
    pub seed: u64,
    pub group_by_subject: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            fractions: [0.7, 0.15, 0.15],
            seed: 0,
            group_by_subject: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| !(*f >= 0.0)) {
            return Err(Error::Config(format!("negative split fraction in {:?}", self.fractions)));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub test: DatasetManifest,
}

/// Deterministic three-way split. With `group_by_subject` every subject's
/// clips land in a single split; otherwise clips are assigned one by one.
pub fn split_dataset(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    // unit -> clip indices, in first-appearance order
    let mut units: Vec<Vec<usize>> = Vec::new();
    if spec.group_by_subject {
        let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, clip) in manifest.clips.iter().enumerate() {
            by_subject.entry(clip.subject_id.as_str()).or_default().push(i);
        }
        units.extend(by_subject.into_values());
    } else {
        units.extend((0..manifest.clips.len()).map(|i| vec![i]));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    units.shuffle(&mut rng);

    let n = units.len();
    let n_train = ((spec.fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((spec.fractions[1] * n as f64).round() as usize).min(n - n_train);

    let mut assignment = vec![2u8; manifest.clips.len()];
    for (rank, unit) in units.iter().enumerate() {
        let split = if rank < n_train {
            0
        } else if rank < n_train + n_val {
            1
        } else {
            2
        };
        for &i in unit {
            assignment[i] = split;
        }
    }
    let pick = |which: u8| {
        manifest.subset(
            manifest
                .clips
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == which)
                .map(|(c, _)| c.clone())
                .collect(),
        )
    };
    Ok(Splits {
        train: pick(0),
        val: pick(1),
        test: pick(2),
    })
}
