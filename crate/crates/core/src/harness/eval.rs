//! Accuracy of an adapter on a task's query split.

use std::time::Instant;

use crate::adapters::{predict, AdapterConfig, Logits};
use crate::error::{Error, Result};
use crate::featurestore::FewShotTask;

/// Fraction of rows whose arg-max (lowest index on ties) equals the label.
pub fn accuracy(logits: &Logits, labels: &[u32]) -> Result<f64> {
    if logits.values.nrows() != labels.len() {
        return Err(Error::dims(format!(
            "{} logit rows for {} labels",
            logits.values.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::dims("accuracy of an empty query set"));
    }
    let hits = logits
        .predictions()
        .iter()
        .zip(labels)
        .filter(|(&p, &l)| p == l as usize)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn evaluate(cfg: &AdapterConfig, task: &FewShotTask) -> Result<f64> {
    accuracy(&predict(cfg, task)?, task.query.labels())
}

/// Accuracy plus the wall time of the predict call in milliseconds.
pub fn evaluate_timed(cfg: &AdapterConfig, task: &FewShotTask) -> Result<(f64, f64)> {
    let start = Instant::now();
    let logits = predict(cfg, task)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((accuracy(&logits, task.query.labels())?, ms))
}

/// Mean squared error between two equally shaped matrices.
pub fn mse(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() || a.is_empty() {
        return Err(Error::dims(format!("mse of {:?} against {:?}", a.shape(), b.shape())));
    }
    Ok((a - b).norm_squared() / a.len() as f64)
}
