//! Classifier backends loaded from a `--model` file.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use handrub_core::dataset::BaselineModel;
use handrub_core::vision::{BaselineClassifier, ClassScores, GestureClassifier, ScriptedClassifier, NUM_CLASSES};
use handrub_service::ClassifierFactory;
use serde::Deserialize;

use crate::CliError;

pub enum Backend {
    Baseline(BaselineClassifier),
    /// Score timelines; lines with a `clip` key apply to that dataset clip
    /// only.
    Scripted {
        shared: ScriptedClassifier,
        per_clip: HashMap<PathBuf, ScriptedClassifier>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptLine {
    #[serde(default)]
    clip: Option<PathBuf>,
    t_ms: u64,
    scores: [f64; NUM_CLASSES],
}

impl Backend {
    /// `.jsonl` files are score scripts; anything else is a baseline model.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        if path.extension().is_some_and(|e| e == "jsonl") {
            Self::load_script(path)
        } else {
            let model = BaselineModel::load(path)?;
            Ok(Backend::Baseline(BaselineClassifier::new(model)?))
        }
    }

    fn load_script(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut groups: HashMap<Option<PathBuf>, Vec<ClassScores>> = HashMap::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |e: &dyn std::fmt::Display| CliError::Runtime(format!("{}:{}: {e}", path.display(), n + 1));
            let parsed: ScriptLine = serde_json::from_str(line).map_err(|e| bad(&e))?;
            let scores = ClassScores::new(parsed.t_ms, parsed.scores).map_err(|e| bad(&e))?;
            groups.entry(parsed.clip).or_default().push(scores);
        }
        let shared = ScriptedClassifier::new(groups.remove(&None).unwrap_or_default())?;
        let per_clip = groups
            .into_iter()
            .map(|(clip, entries)| Ok((clip.expect("shared group removed"), ScriptedClassifier::new(entries)?)))
            .collect::<Result<_, CliError>>()?;
        Ok(Backend::Scripted { shared, per_clip })
    }

    pub fn for_clip(&self, clip: &Path) -> &dyn GestureClassifier {
        match self {
            Backend::Baseline(b) => b,
            Backend::Scripted { shared, per_clip } => per_clip.get(clip).unwrap_or(shared),
        }
    }

    /// A fresh classifier per connection; per-clip scripts are ignored.
    pub fn factory(&self) -> ClassifierFactory {
        match self {
            Backend::Baseline(b) => {
                let b = b.clone();
                Arc::new(move || Box::new(b.clone()))
            }
            Backend::Scripted { shared, .. } => {
                let s = shared.clone();
                Arc::new(move || Box::new(s.clone()))
            }
        }
    }
}
