//! Random Fourier features for the RBF kernel and compression of a ProKeR
//! model into per-class prototypes.
//!
//! `exp(−β/2 ‖x − y‖²)` is the characteristic function of `N(0, β I)`, so with
//! `w_r ~ N(0, β I)` the map
//! `ψ(x) = √(2/R) [cos(w_1·x) … cos(w_{R/2}·x), sin(w_1·x) … sin(w_{R/2}·x)]`
//! gives `ψ(x)·ψ(y) = (2/R) Σ_r cos(w_r·(x − y))`, an unbiased kernel estimate.
//! The orthogonal variant draws each `D`-row block as an orthonormal frame
//! with chi-distributed row norms, which lowers the estimator's variance.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapters::{base_logits, solve_dual, AdapterConfig, Logits, Method, ProKeRModel};
use crate::error::{Error, Result};
use crate::featurestore::TextClassifier;
use crate::kernels::{KernelFamily, Metric};

/// Parameters that regenerate a [`FourierMap`] exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierMapParams {
    pub dim: usize,
    pub count: usize,
    pub beta: f64,
    pub orthogonal: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierMap {
    params: FourierMapParams,
    /// `R/2 × D`, one frequency per row.
    frequencies: DMatrix<f64>,
}

/// Default feature count for a feature dimension.
pub fn default_feature_count(dim: usize) -> usize {
    2 * dim
}

pub fn build_fourier_map(
    dim: usize,
    count: usize,
    beta: f64,
    orthogonal: bool,
    seed: u64,
) -> Result<FourierMap> {
    if dim == 0 {
        return Err(Error::config("fourier map needs dim >= 1"));
    }
    if count == 0 || count % 2 != 0 {
        return Err(Error::config(format!(
            "feature count must be a positive even number (cos/sin pairs), got {count}"
        )));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    let freqs = count / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = beta.sqrt();
    let frequencies = if orthogonal {
        let chi2 = ChiSquared::new(dim as f64).expect("dim >= 1");
        let mut w = DMatrix::zeros(freqs, dim);
        let mut row = 0;
        while row < freqs {
            let g: DMatrix<f64> =
                DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
            let q = g.qr().q();
            let take = dim.min(freqs - row);
            for k in 0..take {
                let norm = chi2.sample(&mut rng).sqrt() * scale;
                for j in 0..dim {
                    w[(row + k, j)] = q[(j, k)] * norm;
                }
            }
            row += take;
        }
        w
    } else {
        DMatrix::from_fn(freqs, dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
    };
    Ok(FourierMap {
        params: FourierMapParams {
            dim,
            count,
            beta,
            orthogonal,
            seed,
        },
        frequencies,
    })
}

impl FourierMap {
    pub fn from_params(p: &FourierMapParams) -> Result<Self> {
        build_fourier_map(p.dim, p.count, p.beta, p.orthogonal, p.seed)
    }

    pub fn params(&self) -> &FourierMapParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// Output feature count `R`.
    pub fn count(&self) -> usize {
        self.params.count
    }

    pub fn beta(&self) -> f64 {
        self.params.beta
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    /// SHA-256 over the little-endian frequency bits, row-major, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for r in self.frequencies.row_iter() {
            for v in r.iter() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Feature rows `Ψ(X)`, `n × R`.
    pub fn featurize_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::dims(format!(
                "points have dim {}, fourier map expects {}",
                x.ncols(),
                self.dim()
            )));
        }
        let proj = x * self.frequencies.transpose();
        let half = proj.ncols();
        let scale = (2.0 / self.count() as f64).sqrt();
        let mut out = DMatrix::zeros(x.nrows(), 2 * half);
        for i in 0..x.nrows() {
            for r in 0..half {
                let (s, c) = proj[(i, r)].sin_cos();
                out[(i, r)] = scale * c;
                out[(i, half + r)] = scale * s;
            }
        }
        Ok(out)
    }

    /// Approximate kernel matrix `Ψ(A) Ψ(B)ᵀ`.
    pub fn approximate_gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.featurize_rows(a)? * self.featurize_rows(b)?.transpose())
    }
}

pub fn featurize(map: &FourierMap, x: &[f64]) -> Result<Vec<f64>> {
    let row = DMatrix::from_row_slice(1, x.len(), x);
    Ok(map.featurize_rows(&row)?.row(0).iter().copied().collect())
}

/// ProKeR collapsed to `R × N` class prototypes: predictions need only the
/// base classifier and the feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeModel {
    pub prototypes: DMatrix<f64>,
    pub map: FourierMap,
    pub text: TextClassifier,
    pub lambda: f64,
    pub logit_scale: f64,
}

fn check_compatible(model: &ProKeRModel, map: &FourierMap) -> Result<()> {
    if model.kernel.family != KernelFamily::Rbf || model.kernel.metric != Metric::Euclidean {
        return Err(Error::InvalidKernel(
            "only euclidean rbf models can be compressed with fourier features".into(),
        ));
    }
    let (a, b) = (map.beta(), model.kernel.beta);
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(Error::BetaMismatch { map: a, model: b });
    }
    if map.dim() != model.support.ncols() {
        return Err(Error::dims(format!(
            "model has dim {}, fourier map has {}",
            model.support.ncols(),
            map.dim()
        )));
    }
    Ok(())
}

/// Dual coefficients refitted under the approximate kernel `ψ(x)·ψ(y)`.
fn approximate_dual(model: &ProKeRModel, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k_hat = features * features.transpose();
    let mut gamma = solve_dual(
        &k_hat,
        &model.residuals()?,
        model.lambda,
        model.jitter,
        model.output_kernel.as_ref(),
    )?;
    if let Some(b) = model.output_kernel.as_ref().filter(|b| !b.is_identity()) {
        gamma *= &b.matrix_b;
    }
    Ok(gamma)
}

/// Refit `model` under the map's approximate kernel and fold the support set
/// into prototypes `Ψ(S)ᵀ γ B / λ`.
pub fn compress(model: &ProKeRModel, map: &FourierMap) -> Result<PrototypeModel> {
    check_compatible(model, map)?;
    let features = map.featurize_rows(&model.support)?;
    let gamma = approximate_dual(model, &features)?;
    let prototypes = features.transpose() * gamma / model.lambda;
    Ok(PrototypeModel {
        prototypes,
        map: map.clone(),
        text: model.text.clone(),
        lambda: model.lambda,
        logit_scale: model.logit_scale,
    })
}

/// Prediction of the approximate-kernel ProKeR model with the support set
/// kept: `f(x) + λ⁻¹ k̂(x, S) γ̂ B`. Equal to [`prototype_predict`] after
/// [`compress`] up to round-off.
pub fn approximate_predict(
    model: &ProKeRModel,
    map: &FourierMap,
    queries: &DMatrix<f64>,
) -> Result<Logits> {
    check_compatible(model, map)?;
    let features = map.featurize_rows(&model.support)?;
    let gamma = approximate_dual(model, &features)?;
    let k_hat = map.featurize_rows(queries)? * features.transpose();
    let mut phi = base_logits(&model.config(), &model.text, queries)?;
    phi += k_hat * gamma / model.lambda;
    Logits::new(phi)
}

pub fn prototype_predict(pm: &PrototypeModel, queries: &DMatrix<f64>) -> Result<Logits> {
    let cfg = AdapterConfig {
        logit_scale: pm.logit_scale,
        ..AdapterConfig::new(Method::ZeroShot, crate::kernels::KernelSpec::rbf(pm.map.beta()))
    };
    let mut phi = base_logits(&cfg, &pm.text, queries)?;
    phi += pm.map.featurize_rows(queries)? * &pm.prototypes;
    Logits::new(phi)
}

impl PrototypeModel {
    pub fn num_classes(&self) -> usize {
        self.prototypes.ncols()
    }

    /// Stored numbers: prototypes plus the base classifier, `N × (R + D)`.
    pub fn stored_values(&self) -> usize {
        self.prototypes.len() + self.text.weights().len()
    }
}
