//! One-dimensional regression suite used to compare estimator bias.
//!
//! Angles `θ ∈ [0, π]` are embedded as `(cos θ, sin θ)` so every point is
//! unit-norm. Targets are `A sin(fθ) + ε`. The base predictor is the
//! least-squares linear fit of the clean curve, shrunk by `1 − bias`.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use super::eval::mse;
use super::report::{EvalReport, EvalRow};
use crate::adapters::{predict_targets, AdapterConfig, Method};
use crate::error::{Error, Result};
use crate::featurestore::{row_major_f32, save_text_classifier, FsfBlock, TextClassifier};
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub amplitude: f64,
    pub frequency: f64,
    pub noise: f64,
    pub support_size: usize,
    /// Fraction by which the base predictor's fit is shrunk toward zero.
    pub bias: f64,
    /// Noisy points used to pick hyperparameters; defaults to `support_size`.
    pub validation_size: Option<usize>,
    /// Evenly spaced held-out angles scored against the clean curve.
    pub grid_size: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            amplitude: 1.0,
            frequency: 3.0,
            noise: 0.1,
            support_size: 20,
            bias: 0.5,
            validation_size: None,
            grid_size: 256,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("synth noise must be >= 0"));
        }
        if self.support_size < 2 {
            return Err(Error::config("synth support_size must be >= 2"));
        }
        if self.grid_size < 2 || self.validation_size == Some(0) {
            return Err(Error::config("synth grid and validation sizes must be positive"));
        }
        if !self.amplitude.is_finite() || !self.frequency.is_finite() || !self.bias.is_finite() {
            return Err(Error::config("synth parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTask {
    pub support: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub validation: DMatrix<f64>,
    pub validation_targets: DMatrix<f64>,
    pub grid: DMatrix<f64>,
    pub grid_truth: DMatrix<f64>,
    pub base: TextClassifier,
    pub spec: SynthSpec,
    pub seed: u64,
}

fn embed(thetas: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(thetas.len(), 2, |i, j| {
        if j == 0 {
            thetas[i].cos()
        } else {
            thetas[i].sin()
        }
    })
}

pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<SynthTask> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::config(e.to_string()))?;
    let curve = |t: f64| spec.amplitude * (spec.frequency * t).sin();
    let noisy = |n: usize, rng: &mut ChaCha8Rng| {
        let th: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::PI)).collect();
        let y: Vec<f64> = th.iter().map(|&t| curve(t) + noise.sample(rng)).collect();
        (embed(&th), DMatrix::from_vec(n, 1, y))
    };
    let (support, targets) = noisy(spec.support_size, &mut rng);
    let (validation, validation_targets) =
        noisy(spec.validation_size.unwrap_or(spec.support_size), &mut rng);

    let g = spec.grid_size;
    let grid_th: Vec<f64> = (0..g)
        .map(|i| std::f64::consts::PI * i as f64 / (g - 1) as f64)
        .collect();
    let grid = embed(&grid_th);
    let grid_truth = DMatrix::from_iterator(g, 1, grid_th.iter().map(|&t| curve(t)));

    let fit = grid
        .clone()
        .svd(true, true)
        .solve(&grid_truth, 1e-12)
        .map_err(|e| Error::SingularSystem(e.to_string()))?;
    let base = TextClassifier::new(fit * (1.0 - spec.bias), None)?;
    Ok(SynthTask {
        support,
        targets,
        validation,
        validation_targets,
        grid,
        grid_truth,
        base,
        spec: spec.clone(),
        seed,
    })
}

impl SynthTask {
    /// Write the task as FSF files into `dir`: `support`, `validation` and
    /// `grid` inputs, their `*_targets`, and the base predictor `text.fsf`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let block = |m: &DMatrix<f64>, role: &str| {
            let mut metadata = Map::new();
            metadata.insert("num_classes".into(), json!(1));
            metadata.insert("kind".into(), json!("synthetic_regression"));
            metadata.insert("role".into(), json!(role));
            metadata.insert("seed".into(), json!(self.seed));
            FsfBlock {
                rows: m.nrows(),
                dim: m.ncols(),
                normalized: false,
                data: row_major_f32(m),
                labels: None,
                metadata,
            }
        };
        for (name, m) in [
            ("support", &self.support),
            ("support_targets", &self.targets),
            ("validation", &self.validation),
            ("validation_targets", &self.validation_targets),
            ("grid", &self.grid),
            ("grid_targets", &self.grid_truth),
        ] {
            block(m, name).write(dir.join(format!("{name}.fsf")))?;
        }
        save_text_classifier(&self.base, dir.join("text.fsf"))
    }
}

/// Hyperparameter candidates for the regression suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthGrid {
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Default for SynthGrid {
    fn default() -> Self {
        SynthGrid {
            betas: (0..=10).map(|e| 2f64.powi(e)).collect(),
            lambdas: (-6..=2).map(|e| 10f64.powi(e)).collect(),
            alphas: vec![0.25, 0.5, 1.0, 2.0],
        }
    }
}

impl SynthGrid {
    pub fn configs(&self, method: Method) -> Vec<AdapterConfig> {
        if method == Method::ZeroShot {
            return vec![AdapterConfig::zero_shot()];
        }
        let mut out = Vec::new();
        for &b in &self.betas {
            let kernel = KernelSpec::rbf(b);
            if method == Method::Tip {
                out.extend(self.alphas.iter().map(|&a| AdapterConfig::tip(b, a)));
            } else {
                out.extend(self.lambdas.iter().map(|&l| AdapterConfig {
                    lambda: l,
                    ..AdapterConfig::new(method, kernel.clone())
                }));
            }
        }
        out
    }
}

/// Selected configuration and its errors for one method on one task.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFit {
    pub method: Method,
    pub config: AdapterConfig,
    pub validation_mse: f64,
    pub heldout_mse: f64,
    pub wall_ms: f64,
}

fn fit_predict(cfg: &AdapterConfig, task: &SynthTask, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(predict_targets(cfg, &task.support, &task.targets, &task.base, x)?.values)
}

/// Training-set MSE of `cfg` (predictions at the support points).
pub fn synth_training_mse(cfg: &AdapterConfig, task: &SynthTask) -> Result<f64> {
    mse(&fit_predict(cfg, task, &task.support)?, &task.targets)
}

/// Held-out MSE of `cfg` against the clean curve.
pub fn synth_heldout_mse(cfg: &AdapterConfig, task: &SynthTask) -> Result<f64> {
    mse(&fit_predict(cfg, task, &task.grid)?, &task.grid_truth)
}

/// Pick the grid point with the lowest validation MSE (first wins on ties)
/// and score it on the held-out grid.
pub fn synth_select(method: Method, task: &SynthTask, grid: &SynthGrid) -> Result<SynthFit> {
    let configs = grid.configs(method);
    if configs.is_empty() {
        return Err(Error::EmptyGrid(format!("no synth configurations for {method}")));
    }
    let mut best: Option<(f64, &AdapterConfig)> = None;
    for cfg in &configs {
        let v = mse(&fit_predict(cfg, task, &task.validation)?, &task.validation_targets)?;
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, cfg));
        }
    }
    let (validation_mse, cfg) = best.expect("non-empty");
    let start = Instant::now();
    let heldout_mse = synth_heldout_mse(cfg, task)?;
    Ok(SynthFit {
        method,
        config: cfg.clone(),
        validation_mse,
        heldout_mse,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Per-seed selected fits, `fits[s][m]` for `seeds[s]` and `methods[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSuite {
    pub support_size: usize,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub fits: Vec<Vec<SynthFit>>,
}

pub fn run_synth_suite(
    spec: &SynthSpec,
    methods: &[Method],
    seeds: &[u64],
    grid: &SynthGrid,
) -> Result<SynthSuite> {
    if seeds.is_empty() || methods.is_empty() {
        return Err(Error::config("synth suite needs at least one seed and one method"));
    }
    let fits = seeds
        .par_iter()
        .map(|&seed| {
            let task = synth_generate(spec, seed)?;
            methods.iter().map(|&m| synth_select(m, &task, grid)).collect()
        })
        .collect::<Result<Vec<Vec<SynthFit>>>>()?;
    Ok(SynthSuite {
        support_size: spec.support_size,
        methods: methods.to_vec(),
        seeds: seeds.to_vec(),
        fits,
    })
}

impl SynthSuite {
    fn column(&self, m: Method) -> Option<usize> {
        self.methods.iter().position(|&x| x == m)
    }

    /// Seeds on which `a` has strictly lower held-out MSE than `b`.
    pub fn wins(&self, a: Method, b: Method) -> Option<usize> {
        let (i, j) = (self.column(a)?, self.column(b)?);
        Some(
            self.fits
                .iter()
                .filter(|row| row[i].heldout_mse < row[j].heldout_mse)
                .count(),
        )
    }

    /// LLR and ProKeR each beat NW on 80% of seeds and ProKeR beats LLR on 60%.
    pub fn ordering(&self) -> Option<OrderingCheck> {
        let n = self.seeds.len();
        Some(OrderingCheck {
            seeds: n,
            llr_over_nw: self.wins(Method::Llr, Method::ProximalNw)?,
            proker_over_nw: self.wins(Method::ProKeR, Method::ProximalNw)?,
            proker_over_llr: self.wins(Method::ProKeR, Method::Llr)?,
        })
    }

    pub fn report(&self) -> EvalReport {
        let mut rows = Vec::new();
        for (s, row) in self.seeds.iter().zip(&self.fits) {
            for f in row {
                rows.push(synth_row(f, self.support_size, *s));
            }
        }
        EvalReport::new(rows)
    }
}

fn synth_row(f: &SynthFit, shots: usize, seed: u64) -> EvalRow {
    let m = f.method;
    EvalRow {
        method: m.name().into(),
        kernel: if m == Method::ZeroShot { "none".into() } else { f.config.kernel.family.name().into() },
        lambda: m.uses_lambda().then_some(f.config.lambda),
        beta: (m != Method::ZeroShot).then_some(f.config.kernel.beta),
        alpha: (m == Method::Tip).then_some(f.config.alpha),
        shots,
        seed,
        score: f.heldout_mse,
        wall_ms: f.wall_ms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderingCheck {
    pub seeds: usize,
    pub llr_over_nw: usize,
    pub proker_over_nw: usize,
    pub proker_over_llr: usize,
}

impl OrderingCheck {
    pub fn passes(&self) -> bool {
        let need = |frac: usize| (self.seeds * frac).div_ceil(10);
        self.llr_over_nw >= need(8) && self.proker_over_nw >= need(8) && self.proker_over_llr >= need(6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = SynthSpec::default();
        assert_eq!(synth_generate(&spec, 3).unwrap(), synth_generate(&spec, 3).unwrap());
        assert_ne!(
            synth_generate(&spec, 3).unwrap().support,
            synth_generate(&spec, 4).unwrap().support
        );
    }

    #[test]
    fn points_on_circle_and_biased_base() {
        let t = synth_generate(&SynthSpec::default(), 0).unwrap();
        for r in t.support.row_iter() {
            assert!((r.norm() - 1.0).abs() < 1e-7);
        }
        let unbiased = synth_generate(&SynthSpec { bias: 0.0, ..Default::default() }, 0).unwrap();
        let ratio = t.base.weights()[(1, 0)] / unbiased.base.weights()[(1, 0)];
        assert!((ratio - 0.5).abs() < 1e-6);
    }

    #[test]
    fn files_written() {
        let dir = tempfile::tempdir().unwrap();
        let t = synth_generate(&SynthSpec::default(), 2).unwrap();
        t.write_files(dir.path()).unwrap();
        let b = FsfBlock::read(dir.path().join("support.fsf")).unwrap();
        assert_eq!((b.rows, b.dim), (20, 2));
        let text = crate::featurestore::load_text_classifier(dir.path().join("text.fsf")).unwrap();
        assert_eq!(text.weights().shape(), (2, 1));
    }

    #[test]
    fn preconditions() {
        assert!(synth_generate(&SynthSpec { noise: -1.0, ..Default::default() }, 0).is_err());
        assert!(synth_generate(&SynthSpec { support_size: 1, ..Default::default() }, 0).is_err());
    }

    #[test]
    fn noiseless_nw_interpolates() {
        let spec = SynthSpec {
            noise: 0.0,
            support_size: 200,
            ..Default::default()
        };
        let task = synth_generate(&spec, 1).unwrap();
        let cfg = AdapterConfig::proximal_nw(KernelSpec::rbf(1e5), 1e-9);
        assert!(synth_training_mse(&cfg, &task).unwrap() < 1e-3);
    }
}
