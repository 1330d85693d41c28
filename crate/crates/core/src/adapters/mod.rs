//! Estimators built on top of a frozen linear base predictor.
//!
//! | method | prediction for a query `x` |
//! |---|---|
//! | zero-shot | `f(x) = x W` |
//! | Tip | `f(x) + α Σ_i k(x, S_i) L_i` |
//! | proximal NW | `(λNK f(x) + Σ_i k(x, S_i) L_i) / (λNK + Σ_i k(x, S_i))` |
//! | LLR | `x̃ A⁻¹ B`, a per-query weighted linear fit pulled toward `f(x)` |
//! | ProKeR | `f(x) + λ⁻¹ k(x, S) γ`, `γ = (I + K/λ)⁻¹ (L − f(S))` |
//!
//! All methods add the cache term to raw base logits; `logit_scale`
//! multiplies `f` beforehand.

mod config;
mod container;
mod local;
mod proker;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::featurestore::{one_hot, FeatureSet, FewShotTask, TextClassifier};
use crate::linalg::argmax;

pub use config::{AdapterConfig, KernelConfig, Method, MetricChoice};
pub use container::{inspect_model, load_model, save_model, ModelFile, ModelSummary, PKM_MAGIC};
pub use local::{llr_predict, llr_predict_weighted, proximal_nw_predict, tip_predict, zero_shot};
pub use proker::{proker_fit, proker_predict, solve_dual, ProKeRModel};

/// Raw class scores, one row per query.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub values: DMatrix<f64>,
}

impl Logits {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for (col, c) in values.column_iter().enumerate() {
            if let Some(row) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
        Ok(Logits { values })
    }

    /// Arg-max class per query, lowest index on ties.
    pub fn predictions(&self) -> Vec<usize> {
        self.values
            .row_iter()
            .map(|r| argmax(r.iter().copied()))
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Logits) -> f64 {
        (&self.values - &other.values).amax()
    }
}

pub(crate) fn base_logits(
    cfg: &AdapterConfig,
    text: &TextClassifier,
    queries: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut f = text.logits(queries)?;
    if cfg.logit_scale != 1.0 {
        f *= cfg.logit_scale;
    }
    Ok(f)
}

pub(crate) fn check_support(
    support: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    text: &TextClassifier,
    queries: Option<&DMatrix<f64>>,
) -> Result<()> {
    if support.nrows() != targets.nrows() {
        return Err(Error::dims(format!(
            "{} support rows but {} target rows",
            support.nrows(),
            targets.nrows()
        )));
    }
    if targets.ncols() != text.num_classes() {
        return Err(Error::dims(format!(
            "targets have {} columns, text classifier has {} classes",
            targets.ncols(),
            text.num_classes()
        )));
    }
    if support.ncols() != text.dim() {
        return Err(Error::dims(format!(
            "support has dim {}, text classifier expects {}",
            support.ncols(),
            text.dim()
        )));
    }
    if let Some(q) = queries {
        if q.ncols() != text.dim() {
            return Err(Error::dims(format!(
                "queries have dim {}, text classifier expects {}",
                q.ncols(),
                text.dim()
            )));
        }
    }
    Ok(())
}

/// Run `cfg` with a labelled support set on arbitrary query rows.
pub fn predict_queries(
    cfg: &AdapterConfig,
    support: &FeatureSet,
    text: &TextClassifier,
    queries: &DMatrix<f64>,
) -> Result<Logits> {
    cfg.validate()?;
    let labels = one_hot(support).matrix;
    predict_targets(cfg, support.features(), &labels, text, queries)
}

/// As [`predict_queries`] with an explicit target matrix (one-hot labels or
/// real-valued regression targets).
pub fn predict_targets(
    cfg: &AdapterConfig,
    support: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    text: &TextClassifier,
    queries: &DMatrix<f64>,
) -> Result<Logits> {
    cfg.validate()?;
    match cfg.method {
        Method::ZeroShot => zero_shot_scaled(cfg, text, queries),
        Method::Tip => tip_predict(cfg, support, targets, text, queries),
        Method::ProximalNw => proximal_nw_predict(cfg, support, targets, text, queries),
        Method::Llr => llr_predict(cfg, support, targets, text, queries),
        Method::ProKeR => {
            let model = proker_fit(cfg, support, targets, text)?;
            proker_predict(&model, queries)
        }
    }
}

fn zero_shot_scaled(
    cfg: &AdapterConfig,
    text: &TextClassifier,
    queries: &DMatrix<f64>,
) -> Result<Logits> {
    Logits::new(base_logits(cfg, text, queries)?)
}

/// Predict the task's query split.
pub fn predict(cfg: &AdapterConfig, task: &FewShotTask) -> Result<Logits> {
    predict_queries(cfg, &task.support, &task.text, task.query.features())
}
