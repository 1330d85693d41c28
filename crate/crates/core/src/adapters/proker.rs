//! Proximal kernel ridge regression.
//!
//! The learned predictor minimises
//! `Σ_i ‖φ(S_i) − L_i‖² + λ ‖φ − f‖²_H` over the RKHS of the separable kernel
//! `k(x, x') B`. Its dual coefficients `γ` solve `(I + K/λ) γ = L − f(S)` and
//! the minimiser is `φ(x) = f(x) + λ⁻¹ k(x, S) γ B`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{base_logits, check_support, AdapterConfig, Logits, Method};
use crate::error::{Error, Result};
use crate::featurestore::TextClassifier;
use crate::kernels::{gram, KernelSpec, OutputKernel};
use crate::linalg::cholesky_with_jitter;

/// A fitted ProKeR predictor: cached support, targets and dual coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ProKeRModel {
    pub support: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub kernel: KernelSpec,
    pub text: TextClassifier,
    pub lambda: f64,
    pub jitter: f64,
    pub logit_scale: f64,
    pub output_kernel: Option<OutputKernel>,
}

impl ProKeRModel {
    pub fn config(&self) -> AdapterConfig {
        AdapterConfig {
            lambda: self.lambda,
            jitter: self.jitter,
            logit_scale: self.logit_scale,
            output_kernel: self.output_kernel.clone(),
            ..AdapterConfig::new(Method::ProKeR, self.kernel.clone())
        }
    }

    pub fn num_classes(&self) -> usize {
        self.targets.ncols()
    }

    /// Residuals `L − f(S)` the dual coefficients were fitted to.
    pub fn residuals(&self) -> Result<DMatrix<f64>> {
        Ok(&self.targets - base_logits(&self.config(), &self.text, &self.support)?)
    }

    /// Max-norm of `(I + K/λ) γ − (L − f(S))` for the identity output kernel.
    pub fn fit_residual(&self) -> Result<f64> {
        let k = gram(&self.kernel, &self.support, &self.support)?.values;
        let lhs = &self.gamma + (k * &self.gamma) / self.lambda;
        Ok((lhs - self.residuals()?).amax())
    }
}

/// Solve `(I + K/λ + jitter I) γ = R` (identity `B`), or the separable
/// system `γ + K γ B / λ = R` through the eigenbasis of `B`.
pub fn solve_dual(
    k: &DMatrix<f64>,
    residual: &DMatrix<f64>,
    lambda: f64,
    jitter: f64,
    output_kernel: Option<&OutputKernel>,
) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    if !k.is_square() || residual.nrows() != n {
        return Err(Error::dims(format!(
            "gram {:?} against residuals {:?}",
            k.shape(),
            residual.shape()
        )));
    }
    let system = |scale: f64| -> DMatrix<f64> {
        let mut a = k * (scale / lambda);
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        a
    };
    match output_kernel.filter(|b| !b.is_identity()) {
        None => Ok(cholesky_with_jitter(&system(1.0), jitter)?.solve(residual)),
        Some(b) => {
            if b.matrix_b.nrows() != residual.ncols() {
                return Err(Error::dims(format!(
                    "output kernel is {:?} for {} outputs",
                    b.matrix_b.shape(),
                    residual.ncols()
                )));
            }
            let eig = SymmetricEigen::new(b.matrix_b.clone());
            let rotated = residual * &eig.eigenvectors;
            let mut coef = DMatrix::zeros(n, residual.ncols());
            for (j, &d) in eig.eigenvalues.iter().enumerate() {
                let chol = cholesky_with_jitter(&system(d.max(0.0)), jitter)?;
                coef.set_column(j, &chol.solve(&rotated.column(j).into_owned()));
            }
            Ok(coef * eig.eigenvectors.transpose())
        }
    }
}

pub fn proker_fit(
    cfg: &AdapterConfig,
    support: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    text: &TextClassifier,
) -> Result<ProKeRModel> {
    if cfg.method != Method::ProKeR {
        return Err(Error::config(format!("config is for {}, called as proker", cfg.method)));
    }
    cfg.validate()?;
    check_support(support, targets, text, None)?;
    let residual = targets - base_logits(cfg, text, support)?;
    let k = gram(&cfg.kernel, support, support)?.values;
    let gamma = solve_dual(&k, &residual, cfg.lambda, cfg.jitter, cfg.output_kernel.as_ref())?;
    Ok(ProKeRModel {
        support: support.clone(),
        targets: targets.clone(),
        gamma,
        kernel: cfg.kernel.clone(),
        text: text.clone(),
        lambda: cfg.lambda,
        jitter: cfg.jitter,
        logit_scale: cfg.logit_scale,
        output_kernel: cfg.output_kernel.clone(),
    })
}

pub fn proker_predict(model: &ProKeRModel, queries: &DMatrix<f64>) -> Result<Logits> {
    let mut phi = base_logits(&model.config(), &model.text, queries)?;
    let k = gram(&model.kernel, queries, &model.support)?.values;
    let mut correction = k * &model.gamma;
    if let Some(b) = model.output_kernel.as_ref().filter(|b| !b.is_identity()) {
        correction *= &b.matrix_b;
    }
    phi += correction / model.lambda;
    Logits::new(phi)
}
