//! Task manifests for `proker sweep`.
//!
//! ```json
//! {"tasks": [
//!   {"name": "pets", "support": "pets/support.fsf", "query": "pets/test.fsf",
//!    "validation": "pets/val.fsf", "text": "pets/text.fsf"},
//!   {"name": "cars", "pool": "cars/train.fsf", "text": "cars/text.fsf",
//!    "shots": 16, "validation_shots": 4, "query_fraction": 1.0}
//! ]}
//! ```
//!
//! Relative paths are resolved against the manifest's directory. Pool
//! entries are sampled with the entry's `seed`, or `--seed` plus the entry
//! index.

use std::path::{Path, PathBuf};

use proker::featurestore::{load_task_features, load_text_classifier, sample_task_with_validation, FewShotTask};
use proker::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tasks: Vec<TaskEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    pub text: PathBuf,
    pub support: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub shots: Option<usize>,
    #[serde(default)]
    pub validation_shots: usize,
    pub query_fraction: Option<f64>,
    pub seed: Option<u64>,
}

impl TaskEntry {
    fn load(&self, base: &Path, index: usize, seed: u64) -> Result<FewShotTask> {
        let at = |p: &PathBuf| base.join(p);
        let text = load_text_classifier(at(&self.text))?;
        let seed = self.seed.unwrap_or(seed + index as u64);
        match (&self.support, &self.query, &self.pool) {
            (Some(s), Some(q), None) => {
                let validation = self.validation.as_ref().map(|v| load_task_features(at(v))).transpose()?;
                FewShotTask::new(
                    &self.name,
                    load_task_features(at(s))?,
                    load_task_features(at(q))?,
                    validation,
                    text,
                    seed,
                )
            }
            (None, None, Some(p)) => {
                let shots = self.shots.ok_or_else(|| {
                    Error::InvalidConfig(format!("task {}: pool entries need \"shots\"", self.name))
                })?;
                let pool = load_task_features(at(p))?;
                let mut t = sample_task_with_validation(
                    &pool,
                    &text,
                    shots,
                    self.validation_shots,
                    self.query_fraction.unwrap_or(1.0),
                    seed,
                )?;
                t.name = self.name.clone();
                Ok(t)
            }
            _ => Err(Error::InvalidConfig(format!(
                "task {}: give either support + query or pool",
                self.name
            ))),
        }
    }
}

pub fn load_tasks(path: &Path, seed: u64) -> Result<Vec<FewShotTask>> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    manifest
        .tasks
        .iter()
        .enumerate()
        .map(|(i, e)| e.load(base, i, seed))
        .collect()
}
