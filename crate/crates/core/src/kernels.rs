//! Kernel zoo and Gram matrices.
//!
//! All four families are evaluated without the `(β/2)^D` normalising constant
//! of the Gaussian density: it cancels in the Nadaraya-Watson ratio and is
//! absorbed by `λ`/`α` everywhere else, while for `D = 1024` it would
//! underflow.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{rows_serde, symmetry_error};
use crate::metrics::{self, Precision};

const ROW_BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Rbf,
    Linear,
    Polynomial,
    Epanechnikov,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Linear => "linear",
            KernelFamily::Polynomial => "polynomial",
            KernelFamily::Epanechnikov => "epanechnikov",
        }
    }

    /// Families whose values are never negative, usable as local weights.
    pub fn is_nonnegative(self) -> bool {
        matches!(self, KernelFamily::Rbf | KernelFamily::Epanechnikov)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Mahalanobis(Precision),
}

fn default_degree() -> u32 {
    2
}

/// A kernel family with its parameters.
///
/// JSON form: `{"family":"rbf","beta":5.0,"metric":"euclidean"}`; a
/// Mahalanobis metric is written `{"mahalanobis": [[..], ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default)]
    pub metric: Metric,
}

impl KernelSpec {
    pub fn rbf(beta: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Rbf,
            beta,
            degree: default_degree(),
            metric: Metric::Euclidean,
        }
    }

    pub fn linear() -> Self {
        KernelSpec {
            family: KernelFamily::Linear,
            ..Self::rbf(0.0)
        }
    }

    pub fn polynomial(degree: u32) -> Self {
        KernelSpec {
            family: KernelFamily::Polynomial,
            degree,
            ..Self::rbf(0.0)
        }
    }

    pub fn epanechnikov() -> Self {
        KernelSpec {
            family: KernelFamily::Epanechnikov,
            ..Self::rbf(0.0)
        }
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::Rbf if !(self.beta > 0.0 && self.beta.is_finite()) => {
                return Err(Error::InvalidKernel(format!(
                    "rbf bandwidth must be positive, got {}",
                    self.beta
                )))
            }
            KernelFamily::Polynomial if self.degree == 0 => {
                return Err(Error::InvalidKernel("polynomial degree must be >= 1".into()))
            }
            _ => {}
        }
        if matches!(self.metric, Metric::Mahalanobis(_)) && self.family != KernelFamily::Rbf {
            return Err(Error::InvalidKernel(format!(
                "mahalanobis metric is only supported for rbf, not {}",
                self.family.name()
            )));
        }
        Ok(())
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if let Metric::Mahalanobis(p) = &self.metric {
            if p.dim() != dim {
                return Err(Error::dims(format!(
                    "points have dim {dim}, metric precision is {}x{}",
                    p.dim(),
                    p.dim()
                )));
            }
        }
        Ok(())
    }

    /// Kernel value from the inner product and squared norms of a pair, with
    /// the squared distance already in the metric's geometry.
    #[inline]
    fn from_parts(&self, dot: f64, sq_dist: f64) -> f64 {
        match self.family {
            KernelFamily::Rbf => (-0.5 * self.beta * sq_dist).exp(),
            KernelFamily::Linear => dot,
            KernelFamily::Polynomial => dot.powi(self.degree as i32),
            KernelFamily::Epanechnikov => 0.75 * (1.0 - sq_dist).max(0.0),
        }
    }
}

/// Pairwise kernel evaluations, `values[(i, j)] = k(a_i, b_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
}

impl GramMatrix {
    pub fn symmetry_error(&self) -> f64 {
        symmetry_error(&self.values)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.values + self.values.transpose()) * 0.5;
        SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Direct evaluation of one kernel value.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::dims(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    spec.check_dim(x.len())?;
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sq_dist = match &spec.metric {
        Metric::Euclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
        Metric::Mahalanobis(p) => metrics::mahalanobis_sq(p, x, y)?,
    };
    Ok(spec.from_parts(dot, sq_dist))
}

/// Gram matrix between the rows of `a` and the rows of `b`.
///
/// Squared distances come from `‖a‖² + ‖b‖² − 2 a·b` over row blocks (after
/// whitening for a Mahalanobis metric); blocks run in parallel and each entry
/// is computed independently, so results do not depend on the thread count.
pub fn gram(spec: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<GramMatrix> {
    spec.validate()?;
    if a.ncols() != b.ncols() {
        return Err(Error::dims(format!(
            "gram between dim {} and dim {}",
            a.ncols(),
            b.ncols()
        )));
    }
    spec.check_dim(a.ncols())?;
    let (wa, wb);
    let (a, b) = match &spec.metric {
        Metric::Euclidean => (a, b),
        Metric::Mahalanobis(p) => {
            wa = p.whiten(a)?;
            wb = p.whiten(b)?;
            (&wa, &wb)
        }
    };

    let (m, n) = (a.nrows(), b.nrows());
    let bt = b.transpose();
    let b_sq: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let starts: Vec<usize> = (0..m).step_by(ROW_BLOCK).collect();
    let blocks: Vec<DMatrix<f64>> = starts
        .par_iter()
        .map(|&start| {
            let len = ROW_BLOCK.min(m - start);
            let rows = a.rows(start, len);
            let mut block = rows * &bt;
            for i in 0..len {
                let a_sq = rows.row(i).norm_squared();
                for j in 0..n {
                    let dot = block[(i, j)];
                    let sq = (a_sq + b_sq[j] - 2.0 * dot).max(0.0);
                    block[(i, j)] = spec.from_parts(dot, sq);
                }
            }
            block
        })
        .collect();

    let mut values = DMatrix::zeros(m, n);
    for (start, block) in starts.into_iter().zip(blocks) {
        values.rows_mut(start, block.nrows()).copy_from(&block);
    }
    Ok(GramMatrix { values })
}

/// Kernel values between `x` and every row of `support`.
pub fn kernel_row(spec: &KernelSpec, x: &[f64], support: &DMatrix<f64>) -> Result<Vec<f64>> {
    let q = DMatrix::from_row_slice(1, x.len(), x);
    Ok(gram(spec, &q, support)?.values.row(0).iter().copied().collect())
}

/// `1 / median(‖S_i − S_j‖²)` over distinct support pairs.
pub fn median_heuristic_beta(support: &DMatrix<f64>) -> Result<f64> {
    let n = support.nrows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push((support.row(i) - support.row(j)).norm_squared());
        }
    }
    if d.is_empty() {
        return Err(Error::config("median heuristic needs at least two support points"));
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 0 {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if median <= 0.0 {
        return Err(Error::config("median pairwise distance is zero"));
    }
    Ok(1.0 / median)
}

/// Output-interaction matrix `B` of the separable kernel `k(x, x') B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutputKernel {
    #[serde(with = "rows_serde")]
    pub matrix_b: DMatrix<f64>,
}

impl OutputKernel {
    pub fn identity(num_classes: usize) -> Self {
        OutputKernel {
            matrix_b: DMatrix::identity(num_classes, num_classes),
        }
    }

    pub fn new(matrix_b: DMatrix<f64>) -> Result<Self> {
        if !matrix_b.is_square() {
            return Err(Error::InvalidKernel("output kernel must be square".into()));
        }
        let asym = symmetry_error(&matrix_b);
        if asym > 1e-10 {
            return Err(Error::InvalidKernel(format!(
                "output kernel is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let min = SymmetricEigen::new(matrix_b.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(Error::InvalidKernel(format!(
                "output kernel is not positive semi-definite (eigenvalue {min:e})"
            )));
        }
        Ok(OutputKernel { matrix_b })
    }

    pub fn is_identity(&self) -> bool {
        self.matrix_b == DMatrix::identity(self.matrix_b.nrows(), self.matrix_b.ncols())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        let mut m = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        for mut r in m.row_iter_mut() {
            let norm = r.norm();
            r /= norm;
        }
        m
    }

    #[test]
    fn rbf_examples() {
        let k = KernelSpec::rbf(3.7);
        assert_eq!(kernel_eval(&k, &[0.3, 0.4], &[0.3, 0.4]).unwrap(), 1.0);
        let k = KernelSpec::rbf(2.0);
        let v = kernel_eval(&k, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.135335).abs() < 1e-6);
    }

    #[test]
    fn polynomial_and_linear() {
        let x = [0.5, 0.5];
        let y = [1.0, 0.0];
        assert!((kernel_eval(&KernelSpec::polynomial(2), &x, &y).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(kernel_eval(&KernelSpec::linear(), &x, &y).unwrap(), 0.5);
    }

    #[test]
    fn epanechnikov_is_clamped() {
        let v = kernel_eval(&KernelSpec::epanechnikov(), &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        // 3/4 (1 - 2) = -0.75 before clamping
        assert_eq!(v, 0.0);
        let v = kernel_eval(&KernelSpec::epanechnikov(), &[1.0, 0.0], &[0.8, 0.6]).unwrap();
        let sq = 0.2f64 * 0.2 + 0.6 * 0.6;
        assert!((v - 0.75 * (1.0 - sq)).abs() < 1e-15);
    }

    #[test]
    fn gram_matches_pairwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_rows(&mut rng, 5, 4);
        let b = random_rows(&mut rng, 5, 4);
        for spec in [
            KernelSpec::rbf(2.5),
            KernelSpec::linear(),
            KernelSpec::polynomial(2),
            KernelSpec::epanechnikov(),
        ] {
            let g = gram(&spec, &a, &b).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let ai: Vec<f64> = a.row(i).iter().copied().collect();
                    let bj: Vec<f64> = b.row(j).iter().copied().collect();
                    let want = kernel_eval(&spec, &ai, &bj).unwrap();
                    assert!((g.values[(i, j)] - want).abs() < 1e-12, "{:?}", spec.family);
                }
            }
        }
    }

    #[test]
    fn gram_blocks_cover_many_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_rows(&mut rng, 150, 3);
        let g = gram(&KernelSpec::rbf(1.0), &a, &a).unwrap();
        assert!(g.symmetry_error() < 1e-10);
        for i in 0..150 {
            assert!((g.values[(i, i)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_gram() {
        let a = DMatrix::from_row_slice(1, 2, &[0.6, 0.8]);
        let g = gram(&KernelSpec::rbf(5.0), &a, &a).unwrap();
        assert!((g.values[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_row_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_rows(&mut rng, 6, 3);
        let x: Vec<f64> = s.row(0).iter().copied().collect();
        let spec = KernelSpec::rbf(4.0);
        let row = kernel_row(&spec, &x, &s).unwrap();
        assert!((row[0] - 1.0).abs() < 1e-12);
        let g = gram(&spec, &DMatrix::from_row_slice(1, 3, &x), &s).unwrap();
        assert_eq!(row, g.values.row(0).iter().copied().collect::<Vec<_>>());

        let far = vec![-x[0], -x[1], -x[2]];
        let sharp = KernelSpec::rbf(1e6);
        let others = s.rows(1, 5).into_owned();
        let row = kernel_row(&sharp, &far, &others).unwrap();
        assert!(row.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let spec = KernelSpec::rbf(1.0);
        assert!(matches!(kernel_eval(&spec, &[1.0], &[1.0, 2.0]), Err(Error::DimMismatch(_))));
        let a = DMatrix::zeros(2, 3);
        let b = DMatrix::zeros(2, 4);
        assert!(matches!(gram(&spec, &a, &b), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn invalid_specs() {
        assert!(KernelSpec::rbf(0.0).validate().is_err());
        assert!(KernelSpec::polynomial(0).validate().is_err());
        let m = KernelSpec::linear().with_metric(Metric::Mahalanobis(Precision::identity(2)));
        assert!(m.validate().is_err());
    }

    #[test]
    fn unit_norm_rewrite() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_rows(&mut rng, 20, 5);
        let beta = 3.0;
        let spec = KernelSpec::rbf(beta);
        for i in 0..19 {
            let x: Vec<f64> = a.row(i).iter().copied().collect();
            let y: Vec<f64> = a.row(i + 1).iter().copied().collect();
            let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
            let cache_form = (-beta * (1.0 - dot)).exp();
            assert!((kernel_eval(&spec, &x, &y).unwrap() - cache_form).abs() < 1e-12);
        }
    }

    #[test]
    fn json_forms() {
        let spec: KernelSpec =
            serde_json::from_str(r#"{"family":"rbf","beta":5.0,"metric":"euclidean"}"#).unwrap();
        assert_eq!(spec, KernelSpec::rbf(5.0));
        let spec = KernelSpec::rbf(2.0).with_metric(Metric::Mahalanobis(Precision::identity(2)));
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains(r#""metric":{"mahalanobis":[[1.0,0.0],[0.0,1.0]]}"#), "{s}");
        let back: KernelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn median_heuristic() {
        let s = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        // squared distances 1, 9, 4 -> median 4
        assert!((median_heuristic_beta(&s).unwrap() - 0.25).abs() < 1e-15);
        assert!(median_heuristic_beta(&DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn output_kernel_validation() {
        assert!(OutputKernel::identity(3).is_identity());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(OutputKernel::new(bad).is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(!OutputKernel::new(ok).unwrap().is_identity());
    }
}
