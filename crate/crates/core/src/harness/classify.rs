//! Synthetic classification tasks: Gaussian classes on the unit sphere with
//! an optionally corrupted base classifier.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::{sample_task_with_validation, FeatureSet, FewShotTask, TextClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Expected norm of the noise added to a class mean before normalising.
    pub spread: f64,
    /// Fraction of base-classifier columns cyclically permuted among
    /// themselves, so those classes are scored with another class's mean.
    pub corrupt_fraction: f64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        GaussianSpec {
            num_classes: 10,
            dim: 32,
            samples_per_class: 60,
            spread: 0.6,
            corrupt_fraction: 0.0,
        }
    }
}

/// Unit-norm, mutually orthogonal class means when `dim >= num_classes`.
fn class_means(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(rng));
    let mut m = if d >= n { g.qr().q().columns(0, n).into_owned() } else { g };
    for mut c in m.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    m
}

/// Labelled pool and the base classifier whose columns are the class means
/// (after corruption).
pub fn gaussian_pool(spec: &GaussianSpec, seed: u64) -> Result<(FeatureSet, TextClassifier)> {
    if spec.num_classes < 2 || spec.dim == 0 || spec.samples_per_class == 0 {
        return Err(Error::config("gaussian task needs >= 2 classes, dim >= 1, samples >= 1"));
    }
    if !(0.0..=1.0).contains(&spec.corrupt_fraction) || !(spec.spread >= 0.0) {
        return Err(Error::config("corrupt_fraction must be in [0, 1] and spread >= 0"));
    }
    let (n, d) = (spec.num_classes, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = class_means(n, d, &mut rng);
    let sigma = spec.spread / (d as f64).sqrt();
    let rows = n * spec.samples_per_class;
    let mut data = DMatrix::zeros(rows, d);
    let mut labels = Vec::with_capacity(rows);
    for i in 0..rows {
        let c = i % n;
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            data[(i, j)] = means[(j, c)] + sigma * z;
        }
        let norm = data.row(i).norm();
        data.row_mut(i).unscale_mut(norm);
        labels.push(c as u32);
    }
    let pool = FeatureSet::new(data, labels, n)?;

    let mut weights = means.clone();
    let mut k = (spec.corrupt_fraction * n as f64).round() as usize;
    if k == 1 {
        k = 2;
    }
    if k >= 2 {
        let mut cols: Vec<usize> = (0..n).collect();
        cols.shuffle(&mut rng);
        let chosen = &cols[..k];
        for (i, &c) in chosen.iter().enumerate() {
            weights.set_column(c, &means.column(chosen[(i + 1) % k]));
        }
    }
    Ok((pool, TextClassifier::new(weights, None)?))
}

/// Sample a few-shot task with `shots` support and `validation_shots`
/// validation samples per class; the rest of the pool is the query set.
pub fn gaussian_task(
    spec: &GaussianSpec,
    shots: usize,
    validation_shots: usize,
    seed: u64,
) -> Result<FewShotTask> {
    let (pool, text) = gaussian_pool(spec, seed)?;
    let mut task = sample_task_with_validation(&pool, &text, shots, validation_shots, 1.0, seed)?;
    task.name = format!("gaussian-{seed}");
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::AdapterConfig;
    use crate::harness::evaluate;

    #[test]
    fn unit_rows_and_determinism() {
        let spec = GaussianSpec::default();
        let (a, ta) = gaussian_pool(&spec, 5).unwrap();
        let (b, tb) = gaussian_pool(&spec, 5).unwrap();
        assert_eq!(a.features(), b.features());
        assert_eq!(ta, tb);
        assert!(a.is_normalized());
    }

    #[test]
    fn corruption_moves_columns() {
        let clean = gaussian_pool(&GaussianSpec::default(), 1).unwrap().1;
        let spec = GaussianSpec {
            corrupt_fraction: 0.2,
            ..Default::default()
        };
        let bad = gaussian_pool(&spec, 1).unwrap().1;
        let moved = (0..10)
            .filter(|&c| clean.weights().column(c) != bad.weights().column(c))
            .count();
        assert_eq!(moved, 2);
    }

    #[test]
    fn zero_shot_on_class_means_is_accurate() {
        let task = gaussian_task(&GaussianSpec::default(), 4, 0, 3).unwrap();
        let acc = evaluate(&AdapterConfig::zero_shot(), &task).unwrap();
        assert!(acc > 0.95, "{acc}");
    }
}
