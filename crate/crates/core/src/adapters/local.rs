//! Query-local estimators: zero-shot, Tip cache, proximal Nadaraya-Watson and
//! proximal local linear regression.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{base_logits, check_support, AdapterConfig, Logits, Method};
use crate::error::{Error, Result};
use crate::featurestore::TextClassifier;
use crate::kernels::gram;
use crate::linalg::cholesky_with_jitter;

pub fn zero_shot(text: &TextClassifier, queries: &DMatrix<f64>) -> Result<Logits> {
    Logits::new(text.logits(queries)?)
}

fn expect(cfg: &AdapterConfig, method: Method) -> Result<()> {
    if cfg.method != method {
        return Err(Error::config(format!(
            "config is for {}, called as {method}",
            cfg.method
        )));
    }
    cfg.validate()
}

/// `f(x) + α Σ_i exp(−β/2 ‖S_i − x‖²) L_i`.
pub fn tip_predict(
    cfg: &AdapterConfig,
    support: &DMatrix<f64>,
    labels: &DMatrix<f64>,
    text: &TextClassifier,
    queries: &DMatrix<f64>,
) -> Result<Logits> {
    expect(cfg, Method::Tip)?;
    check_support(support, labels, text, Some(queries))?;
    let mut phi = base_logits(cfg, text, queries)?;
    let k = gram(&cfg.kernel, queries, support)?.values;
    phi += (k * labels) * cfg.alpha;
    Logits::new(phi)
}

/// Closed-form proximal Nadaraya-Watson:
/// `(λNK f(x) + Σ k_i L_i) / (λNK + Z(x))`, written as
/// `f(x) + (Σ k_i L_i − Z(x) f(x)) / (λNK + Z(x))` so a query with no
/// kernel mass returns `f(x)` exactly.
pub fn proximal_nw_predict(
    cfg: &AdapterConfig,
    support: &DMatrix<f64>,
    labels: &DMatrix<f64>,
    text: &TextClassifier,
    queries: &DMatrix<f64>,
) -> Result<Logits> {
    expect(cfg, Method::ProximalNw)?;
    check_support(support, labels, text, Some(queries))?;
    let mut phi = base_logits(cfg, text, queries)?;
    let k = gram(&cfg.kernel, queries, support)?.values;
    let weighted = &k * labels;
    let c = cfg.lambda * support.nrows() as f64;
    for i in 0..phi.nrows() {
        let z: f64 = k.row(i).sum();
        let denom = c + z;
        for j in 0..phi.ncols() {
            let f = phi[(i, j)];
            phi[(i, j)] = f + (weighted[(i, j)] - z * f) / denom;
        }
    }
    Logits::new(phi)
}

/// Proximal local linear regression: for each query, `x̃ A⁻¹ B` with
/// `A = S̃ᵀΩS̃ + λNK x̃ᵀx̃ + jitter I` and `B = S̃ᵀΩL + λNK x̃ᵀ f(x)`.
pub fn llr_predict(
    cfg: &AdapterConfig,
    support: &DMatrix<f64>,
    labels: &DMatrix<f64>,
    text: &TextClassifier,
    queries: &DMatrix<f64>,
) -> Result<Logits> {
    expect(cfg, Method::Llr)?;
    check_support(support, labels, text, Some(queries))?;
    let weights = gram(&cfg.kernel, queries, support)?.values;
    llr_predict_weighted(cfg, support, labels, text, queries, &weights)
}

/// LLR with caller-supplied kernel weights (`weights[(q, i)]` for query `q`
/// and support row `i`, all non-negative).
///
/// The rank-one proximal term is folded in with Sherman-Morrison: with
/// `M = S̃ᵀΩS̃ + jitter I`, `z = M⁻¹x̃ᵀ` and `q = x̃z`,
/// `x̃ A⁻¹ B = ((S̃z)ᵀ Ω L + λNK q f(x)) / (1 + λNK q)`.
/// One Cholesky of the `(D+1)×(D+1)` matrix `M` per query; stays accurate
/// when `λ` is huge.
pub fn llr_predict_weighted(
    cfg: &AdapterConfig,
    support: &DMatrix<f64>,
    labels: &DMatrix<f64>,
    text: &TextClassifier,
    queries: &DMatrix<f64>,
    weights: &DMatrix<f64>,
) -> Result<Logits> {
    check_support(support, labels, text, Some(queries))?;
    if weights.shape() != (queries.nrows(), support.nrows()) {
        return Err(Error::dims(format!(
            "weights are {:?}, expected {:?}",
            weights.shape(),
            (queries.nrows(), support.nrows())
        )));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::config("llr kernel weights must be non-negative"));
    }
    let f = base_logits(cfg, text, queries)?;
    let (nk, dim) = support.shape();
    let c = cfg.lambda * nk as f64;
    let augmented = support.clone().insert_column(0, 1.0);

    let rows: Vec<Result<Vec<f64>>> = (0..queries.nrows())
        .into_par_iter()
        .map(|qi| {
            let w = weights.row(qi);
            let mut scaled = augmented.clone();
            for (i, mut r) in scaled.row_iter_mut().enumerate() {
                r *= w[i].sqrt();
            }
            let gram = scaled.transpose() * &scaled;
            let chol = cholesky_with_jitter(&gram, cfg.jitter).map_err(|_| {
                Error::SingularSystem(format!("query {qi}: weighted design is singular"))
            })?;
            let mut xt = DVector::zeros(dim + 1);
            xt[0] = 1.0;
            for j in 0..dim {
                xt[j + 1] = queries[(qi, j)];
            }
            let z = chol.solve(&xt);
            let q = xt.dot(&z);
            let u = &augmented * &z;
            let denom = 1.0 + c * q;
            let out = (0..labels.ncols())
                .map(|j| {
                    let data: f64 = (0..nk).map(|i| u[i] * w[i] * labels[(i, j)]).sum();
                    (data + c * q * f[(qi, j)]) / denom
                })
                .collect();
            Ok(out)
        })
        .collect();

    let mut phi = DMatrix::zeros(queries.nrows(), labels.ncols());
    for (qi, row) in rows.into_iter().enumerate() {
        for (j, v) in row?.into_iter().enumerate() {
            phi[(qi, j)] = v;
        }
    }
    Logits::new(phi)
}
