use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FeatureSet, TextClassifier};
use crate::error::{Error, Result};

/// A labelled support set, held-out queries, an optional validation split and
/// the base predictor.
#[derive(Debug, Clone)]
pub struct FewShotTask {
    pub name: String,
    pub support: FeatureSet,
    pub query: FeatureSet,
    pub validation: Option<FeatureSet>,
    pub text: TextClassifier,
    pub shots: usize,
    pub seed: u64,
}

impl FewShotTask {
    /// Assemble a task from pre-split parts, checking dimensions and the
    /// exactly-K-per-class support structure.
    pub fn new(
        name: impl Into<String>,
        support: FeatureSet,
        query: FeatureSet,
        validation: Option<FeatureSet>,
        text: TextClassifier,
        seed: u64,
    ) -> Result<Self> {
        let dim = text.dim();
        let mut parts = vec![("support", &support), ("query", &query)];
        if let Some(v) = &validation {
            parts.push(("validation", v));
        }
        for (what, fs) in parts {
            if fs.dim() != dim {
                return Err(Error::dims(format!(
                    "{what} has dim {}, text classifier has {dim}",
                    fs.dim()
                )));
            }
            if fs.num_classes() != text.num_classes() {
                return Err(Error::dims(format!(
                    "{what} declares {} classes, text classifier has {}",
                    fs.num_classes(),
                    text.num_classes()
                )));
            }
        }
        let counts: Vec<usize> = support.class_indices().iter().map(Vec::len).collect();
        let shots = counts[0];
        if counts.iter().any(|&c| c != shots) || shots == 0 {
            return Err(Error::config(format!(
                "support must hold the same positive number of shots per class, got {counts:?}"
            )));
        }
        Ok(FewShotTask {
            name: name.into(),
            support,
            query,
            validation,
            text,
            shots,
            seed,
        })
    }

    pub fn support_size(&self) -> usize {
        self.support.rows()
    }
}

/// Split a labelled pool into `shots` support samples per class and a query
/// set drawn from the remainder. Deterministic in `seed`.
pub fn sample_task(
    pool: &FeatureSet,
    text: &TextClassifier,
    shots: usize,
    query_fraction: f64,
    seed: u64,
) -> Result<FewShotTask> {
    sample_task_with_validation(pool, text, shots, 0, query_fraction, seed)
}

/// As [`sample_task`], additionally reserving `validation_shots` per class
/// (taken after the support, before the query) when non-zero.
pub fn sample_task_with_validation(
    pool: &FeatureSet,
    text: &TextClassifier,
    shots: usize,
    validation_shots: usize,
    query_fraction: f64,
    seed: u64,
) -> Result<FewShotTask> {
    if shots == 0 {
        return Err(Error::config("shots must be at least 1"));
    }
    if !(query_fraction > 0.0 && query_fraction <= 1.0) {
        return Err(Error::config(format!(
            "query_fraction must be in (0, 1], got {query_fraction}"
        )));
    }
    let required = shots + validation_shots + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut support, mut validation, mut query) = (Vec::new(), Vec::new(), Vec::new());
    for (class, mut idx) in pool.class_indices().into_iter().enumerate() {
        if idx.len() < required {
            return Err(Error::InsufficientSamples {
                class,
                available: idx.len(),
                required,
            });
        }
        idx.shuffle(&mut rng);
        let (s, rest) = idx.split_at(shots);
        let (v, rest) = rest.split_at(validation_shots);
        let take = ((rest.len() as f64 * query_fraction).round() as usize).clamp(1, rest.len());
        support.extend_from_slice(s);
        validation.extend_from_slice(v);
        query.extend_from_slice(&rest[..take]);
    }
    let validation = if validation_shots > 0 {
        Some(pool.select(&validation)?)
    } else {
        None
    };
    FewShotTask::new(
        format!("seed{seed}"),
        pool.select(&support)?,
        pool.select(&query)?,
        validation,
        text.clone(),
        seed,
    )
}
