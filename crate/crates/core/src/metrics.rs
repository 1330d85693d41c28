//! Global Mahalanobis metric estimated from the support set.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::featurestore::FeatureSet;
use crate::linalg::{rows_serde, strict_cholesky, symmetry_error};

/// Default covariance shrinkage toward the scaled identity.
pub const DEFAULT_SHRINKAGE: f64 = 0.1;

const SYMMETRY_TOL: f64 = 1e-8;
const PIVOT_TOL: f64 = 1e-12;

/// Symmetric positive-definite precision matrix together with its lower
/// Cholesky factor `L` (`precision = L Lᵀ`), used for whitening.
#[derive(Debug, Clone, PartialEq)]
pub struct Precision {
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl Precision {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidKernel(format!(
                "precision must be square and non-empty, got {:?}",
                matrix.shape()
            )));
        }
        let asym = symmetry_error(&matrix);
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidKernel(format!(
                "precision is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let chol = strict_cholesky(&matrix, PIVOT_TOL)
            .ok_or_else(|| Error::InvalidKernel("precision is not positive definite".into()))?;
        Ok(Precision {
            factor: chol.l(),
            matrix,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Precision {
            matrix: DMatrix::identity(dim, dim),
            factor: DMatrix::identity(dim, dim),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Lower-triangular `L` with `precision = L Lᵀ`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Map rows `x` to `x L`; squared Euclidean distances between whitened
    /// rows are Mahalanobis distances between the originals.
    pub fn whiten(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rows.ncols() != self.dim() {
            return Err(Error::dims(format!(
                "points have dim {}, precision is {}x{}",
                rows.ncols(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(rows * &self.factor)
    }
}

impl Serialize for Precision {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        rows_serde::serialize(&self.matrix, s)
    }
}

impl<'de> Deserialize<'de> for Precision {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = rows_serde::deserialize(d)?;
        Precision::new(m).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub precision: Precision,
    pub shrinkage: f64,
    pub source_rows: usize,
}

/// Inverse of the shrunk pooled covariance
/// `(1-ε)Σ + ε tr(Σ)/D I`, where `Σ` is centred per class and divided by
/// `rows - classes` (at least 1).
pub fn estimate_precision(support: &FeatureSet, shrinkage: f64) -> Result<PrecisionEstimate> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::config(format!("shrinkage must be in [0, 1], got {shrinkage}")));
    }
    let rows = support.rows();
    if rows < 2 {
        return Err(Error::InsufficientSamples {
            class: 0,
            available: rows,
            required: 2,
        });
    }
    let dim = support.dim();
    let x = support.features();
    let mut scatter = DMatrix::<f64>::zeros(dim, dim);
    let mut classes = 0usize;
    for idx in support.class_indices().into_iter().filter(|c| !c.is_empty()) {
        classes += 1;
        let block = x.select_rows(&idx);
        let mean = block.row_mean();
        let mut centred = block;
        for mut r in centred.row_iter_mut() {
            r -= &mean;
        }
        scatter += centred.transpose() * &centred;
    }
    let divisor = rows.saturating_sub(classes).max(1) as f64;
    let cov = scatter / divisor;
    let target = cov.trace() / dim as f64;
    let mut shrunk = cov * (1.0 - shrinkage);
    for i in 0..dim {
        shrunk[(i, i)] += shrinkage * target;
    }

    let chol = strict_cholesky(&shrunk, PIVOT_TOL).ok_or(Error::SingularCovariance {
        shrinkage,
        suggested: (shrinkage * 10.0).clamp(DEFAULT_SHRINKAGE, 1.0),
    })?;
    let inv = chol.inverse();
    let sym = (&inv + inv.transpose()) * 0.5;
    Ok(PrecisionEstimate {
        precision: Precision::new(sym)?,
        shrinkage,
        source_rows: rows,
    })
}

/// `(x - y)ᵀ Λ (x - y)`.
pub fn mahalanobis_sq(p: &Precision, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() != p.dim() {
        return Err(Error::dims(format!(
            "vectors of length {} and {} against a {}-dim precision",
            x.len(),
            y.len(),
            p.dim()
        )));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let m = p.matrix();
    let mut total = 0.0;
    for i in 0..d.len() {
        let mut row = 0.0;
        for j in 0..d.len() {
            row += m[(i, j)] * d[j];
        }
        total += d[i] * row;
    }
    Ok(total.max(0.0))
}
