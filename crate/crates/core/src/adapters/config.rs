use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::FeatureSet;
use crate::kernels::{median_heuristic_beta, KernelFamily, KernelSpec, Metric, OutputKernel};
use crate::metrics::{estimate_precision, DEFAULT_SHRINKAGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "zeroshot")]
    ZeroShot,
    #[serde(rename = "tip")]
    Tip,
    #[serde(rename = "nw", alias = "proximal_nw")]
    ProximalNw,
    #[serde(rename = "llr")]
    Llr,
    #[serde(rename = "proker")]
    ProKeR,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ZeroShot,
        Method::Tip,
        Method::ProximalNw,
        Method::Llr,
        Method::ProKeR,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ZeroShot => "zeroshot",
            Method::Tip => "tip",
            Method::ProximalNw => "nw",
            Method::Llr => "llr",
            Method::ProKeR => "proker",
        }
    }

    pub fn uses_lambda(self) -> bool {
        matches!(self, Method::ProximalNw | Method::Llr | Method::ProKeR)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zeroshot" | "zero-shot" | "zero_shot" => Ok(Method::ZeroShot),
            "tip" => Ok(Method::Tip),
            "nw" | "proximal_nw" | "proximal-nw" => Ok(Method::ProximalNw),
            "llr" => Ok(Method::Llr),
            "proker" => Ok(Method::ProKeR),
            other => Err(Error::config(format!("unknown method {other:?}"))),
        }
    }
}

pub const DEFAULT_JITTER: f64 = 1e-8;

/// Everything one estimator needs besides data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub method: Method,
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub alpha: f64,
    pub jitter: f64,
    pub logit_scale: f64,
    pub output_kernel: Option<OutputKernel>,
}

impl AdapterConfig {
    pub fn new(method: Method, kernel: KernelSpec) -> Self {
        AdapterConfig {
            method,
            kernel,
            lambda: 1.0,
            alpha: 1.0,
            jitter: DEFAULT_JITTER,
            logit_scale: 1.0,
            output_kernel: None,
        }
    }

    pub fn zero_shot() -> Self {
        Self::new(Method::ZeroShot, KernelSpec::rbf(1.0))
    }

    pub fn tip(beta: f64, alpha: f64) -> Self {
        AdapterConfig {
            alpha,
            ..Self::new(Method::Tip, KernelSpec::rbf(beta))
        }
    }

    pub fn proximal_nw(kernel: KernelSpec, lambda: f64) -> Self {
        AdapterConfig {
            lambda,
            ..Self::new(Method::ProximalNw, kernel)
        }
    }

    pub fn llr(kernel: KernelSpec, lambda: f64) -> Self {
        AdapterConfig {
            lambda,
            ..Self::new(Method::Llr, kernel)
        }
    }

    pub fn proker(kernel: KernelSpec, lambda: f64) -> Self {
        AdapterConfig {
            lambda,
            ..Self::new(Method::ProKeR, kernel)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.method;
        if !(self.logit_scale.is_finite()) {
            return Err(Error::config("logit_scale must be finite"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::config("jitter must be non-negative"));
        }
        if m == Method::ZeroShot {
            return Ok(());
        }
        self.kernel.validate()?;
        match m {
            Method::Tip => {
                if self.kernel.family != KernelFamily::Rbf {
                    return Err(Error::config("tip requires an rbf kernel"));
                }
                if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
                    return Err(Error::config("alpha must be non-negative for tip"));
                }
            }
            Method::ProximalNw | Method::ProKeR => {
                if !(self.lambda > 0.0 && self.lambda.is_finite()) {
                    return Err(Error::config(format!("lambda must be positive for {m}")));
                }
            }
            Method::Llr => {
                if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
                    return Err(Error::config("lambda must be non-negative for llr"));
                }
            }
            Method::ZeroShot => unreachable!(),
        }
        if matches!(m, Method::ProximalNw | Method::Llr) && !self.kernel.family.is_nonnegative() {
            return Err(Error::config(format!(
                "{m} needs non-negative kernel weights, {} can be negative",
                self.kernel.family.name()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricChoice {
    #[default]
    Euclidean,
    Mahalanobis,
}

fn one() -> f64 {
    1.0
}

/// User-facing kernel description; unset bandwidths and Mahalanobis metrics
/// are resolved against a support set.
///
/// `{"family":"rbf","beta":5.0,"metric":"euclidean"}`, or with `beta`
/// omitted to use `beta_scale / median(‖S_i − S_j‖²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "one")]
    pub beta_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default)]
    pub metric: MetricChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrinkage: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            family: KernelFamily::Rbf,
            beta: None,
            beta_scale: 1.0,
            degree: None,
            metric: MetricChoice::Euclidean,
            shrinkage: None,
        }
    }
}

impl KernelConfig {
    pub fn resolve(&self, support: &FeatureSet) -> Result<KernelSpec> {
        let metric = match self.metric {
            MetricChoice::Euclidean => Metric::Euclidean,
            MetricChoice::Mahalanobis => {
                let eps = self.shrinkage.unwrap_or(DEFAULT_SHRINKAGE);
                Metric::Mahalanobis(estimate_precision(support, eps)?.precision)
            }
        };
        let beta = match (self.family, self.beta) {
            (_, Some(b)) => b,
            (KernelFamily::Rbf, None) => {
                let points = match &metric {
                    Metric::Euclidean => support.features().clone(),
                    Metric::Mahalanobis(p) => p.whiten(support.features())?,
                };
                self.beta_scale * median_heuristic_beta(&points)?
            }
            _ => 0.0,
        };
        let spec = KernelSpec {
            family: self.family,
            beta,
            degree: self.degree.unwrap_or(2),
            metric,
        };
        spec.validate()?;
        Ok(spec)
    }
}
