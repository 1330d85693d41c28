//! Small dense helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Factor `a + jitter*I`, retrying once with `100*jitter`.
pub(crate) fn cholesky_with_jitter(
    a: &DMatrix<f64>,
    jitter: f64,
) -> Result<Cholesky<f64, Dyn>> {
    for boost in [jitter, jitter * 100.0] {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += boost;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(chol);
        }
    }
    Err(Error::SolveFailed { jitter: jitter * 100.0 })
}

/// Cholesky factor that also rejects numerically rank-deficient input: the
/// smallest squared pivot must exceed `rel_tol` times the largest diagonal.
pub(crate) fn strict_cholesky(a: &DMatrix<f64>, rel_tol: f64) -> Option<Cholesky<f64, Dyn>> {
    let scale = a.diagonal().iter().cloned().fold(0.0_f64, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let chol = Cholesky::new(a.clone())?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|p| p * p)
        .fold(f64::INFINITY, f64::min);
    (min_pivot > rel_tol * scale).then_some(chol)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

pub(crate) fn symmetry_error(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}


/// Serialize a matrix as a list of rows.
pub(crate) mod rows_serde {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}
