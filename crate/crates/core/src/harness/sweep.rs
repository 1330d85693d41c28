//! Hyperparameter sweeps under the anchor-transfer and per-dataset
//! validation protocols.

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::accuracy;
use super::report::{EvalReport, EvalRow};
use crate::adapters::{predict_queries, AdapterConfig, KernelConfig, Method, MetricChoice};
use crate::error::{Error, Result};
use crate::featurestore::{FeatureSet, FewShotTask};
use crate::kernels::KernelFamily;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaAxis {
    Values(Vec<f64>),
    /// Multiples of the median-heuristic bandwidth of each support set.
    MedianMultiples(Vec<f64>),
}

impl BetaAxis {
    fn points(&self) -> &[f64] {
        match self {
            BetaAxis::Values(v) | BetaAxis::MedianMultiples(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "transfer")]
    TransferFromAnchor,
    #[serde(rename = "per-dataset")]
    PerDatasetValidation,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transfer" => Ok(Protocol::TransferFromAnchor),
            "per-dataset" => Ok(Protocol::PerDatasetValidation),
            other => Err(Error::config(format!(
                "unknown protocol {other:?}, expected transfer or per-dataset"
            ))),
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Tip, Method::ProximalNw, Method::Llr, Method::ProKeR]
}

fn default_lambdas() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]
}

fn default_betas() -> BetaAxis {
    BetaAxis::MedianMultiples(vec![0.25, 0.5, 1.0, 2.0, 4.0])
}

fn default_alphas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}

fn default_family() -> KernelFamily {
    KernelFamily::Rbf
}

fn default_protocol() -> Protocol {
    Protocol::PerDatasetValidation
}

/// Search space, read from JSON with every field optional:
///
/// ```json
/// {"methods": ["proker"], "lambdas": [0.1, 1.0],
///  "betas": {"median_multiples": [0.5, 1, 2]}, "protocol": "transfer"}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_family")]
    pub kernel: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default)]
    pub metric: MetricChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrinkage: Option<f64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_betas")]
    pub betas: BetaAxis,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
}

impl Default for SweepGrid {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// One point of the grid before it is resolved against a support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub method: Method,
    pub kernel: KernelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl Candidate {
    pub fn config(&self, support: &FeatureSet) -> Result<AdapterConfig> {
        let mut cfg = if self.method == Method::ZeroShot {
            AdapterConfig::zero_shot()
        } else {
            AdapterConfig::new(self.method, self.kernel.resolve(support)?)
        };
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let uses = |f: fn(Method) -> bool| self.methods.iter().any(|&m| f(m));
        let kernel_methods = uses(|m| m != Method::ZeroShot);
        let empty = [
            ("methods", self.methods.is_empty()),
            ("lambdas", uses(Method::uses_lambda) && self.lambdas.is_empty()),
            ("alphas", uses(|m| m == Method::Tip) && self.alphas.is_empty()),
            ("betas", kernel_methods && self.betas.points().is_empty()),
        ];
        if let Some((axis, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::EmptyGrid(format!("axis {axis} is empty")));
        }
        for (axis, v) in [
            ("lambdas", &self.lambdas),
            ("alphas", &self.alphas),
            ("betas", &self.betas.points().to_vec()),
        ] {
            if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(Error::config(format!("{axis} must be positive, found {x}")));
            }
        }
        Ok(())
    }

    /// Candidates in grid order: methods, then β, then λ, then α.
    pub fn candidates(&self) -> Vec<Candidate> {
        let mut out = Vec::new();
        for &method in &self.methods {
            if method == Method::ZeroShot {
                out.push(Candidate {
                    method,
                    kernel: KernelConfig::default(),
                    lambda: None,
                    alpha: None,
                });
                continue;
            }
            let family = if method == Method::Tip { KernelFamily::Rbf } else { self.kernel };
            let kernels: Vec<KernelConfig> = if family == KernelFamily::Rbf {
                self.betas
                    .points()
                    .iter()
                    .map(|&b| {
                        let (beta, scale) = match self.betas {
                            BetaAxis::Values(_) => (Some(b), 1.0),
                            BetaAxis::MedianMultiples(_) => (None, b),
                        };
                        KernelConfig {
                            family,
                            beta,
                            beta_scale: scale,
                            degree: None,
                            metric: self.metric,
                            shrinkage: self.shrinkage,
                        }
                    })
                    .collect()
            } else {
                vec![KernelConfig {
                    family,
                    degree: self.degree,
                    metric: MetricChoice::Euclidean,
                    ..KernelConfig::default()
                }]
            };
            let lambdas: Vec<Option<f64>> = if method.uses_lambda() {
                self.lambdas.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            let alphas: Vec<Option<f64>> = if method == Method::Tip {
                self.alphas.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for k in &kernels {
                for &lambda in &lambdas {
                    for &alpha in &alphas {
                        out.push(Candidate {
                            method,
                            kernel: k.clone(),
                            lambda,
                            alpha,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Query,
    Selection,
}

fn selection_split(task: &FewShotTask) -> &FeatureSet {
    task.validation.as_ref().unwrap_or(&task.query)
}

struct Scored {
    score: f64,
    wall_ms: f64,
    config: AdapterConfig,
}

fn score(c: &Candidate, task: &FewShotTask, split: Split) -> Result<Scored> {
    let cfg = c.config(&task.support)?;
    let target = match split {
        Split::Query => &task.query,
        Split::Selection => selection_split(task),
    };
    let start = Instant::now();
    let logits = predict_queries(&cfg, &task.support, &task.text, target.features())?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(Scored {
        score: accuracy(&logits, target.labels())?,
        wall_ms,
        config: cfg,
    })
}

fn row(s: &Scored, task: &FewShotTask) -> EvalRow {
    let m = s.config.method;
    EvalRow {
        method: m.name().into(),
        kernel: if m == Method::ZeroShot { "none".into() } else { s.config.kernel.family.name().into() },
        lambda: m.uses_lambda().then_some(s.config.lambda),
        beta: (m != Method::ZeroShot && s.config.kernel.family == KernelFamily::Rbf)
            .then_some(s.config.kernel.beta),
        alpha: (m == Method::Tip).then_some(s.config.alpha),
        shots: task.shots,
        seed: task.seed,
        score: s.score,
        wall_ms: s.wall_ms,
    }
}

/// The winning grid point for one method, and where it was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Task the choice applies to; the anchor name under the transfer protocol.
    pub task: String,
    pub selected_on: String,
    pub candidate: Candidate,
    pub selection_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub report: EvalReport,
    pub selected: Vec<Selection>,
}

/// First candidate with the highest score per method, in grid order.
fn pick(cands: &[Candidate], scores: &[f64], methods: &[Method]) -> Vec<(usize, f64)> {
    methods
        .iter()
        .map(|&m| {
            let mut best: Option<(usize, f64)> = None;
            for (i, _) in cands.iter().enumerate().filter(|(_, c)| c.method == m) {
                if best.is_none_or(|(_, b)| scores[i] > b) {
                    best = Some((i, scores[i]));
                }
            }
            best.expect("every method has a candidate")
        })
        .collect()
}

fn dedup_methods(methods: &[Method]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for &m in methods {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

pub fn sweep(grid: &SweepGrid, tasks: &[FewShotTask], anchor: Option<&FewShotTask>) -> Result<SweepOutcome> {
    grid.validate()?;
    if tasks.is_empty() {
        return Err(Error::config("sweep needs at least one task"));
    }
    let cands = grid.candidates();
    let methods = dedup_methods(&grid.methods);
    // (task index, candidate index) pairs to score on the query split.
    let mut finals: Vec<(usize, usize)> = Vec::new();
    let mut selected = Vec::new();
    match grid.protocol {
        Protocol::TransferFromAnchor => {
            let anchor = anchor.ok_or(Error::MissingAnchor)?;
            let scores = cands
                .par_iter()
                .map(|c| score(c, anchor, Split::Selection).map(|s| s.score))
                .collect::<Result<Vec<f64>>>()?;
            let split = if anchor.validation.is_some() { "validation" } else { "query" };
            for (ci, s) in pick(&cands, &scores, &methods) {
                selected.push(Selection {
                    task: anchor.name.clone(),
                    selected_on: format!("{}:{split}", anchor.name),
                    candidate: cands[ci].clone(),
                    selection_score: s,
                });
                finals.extend((0..tasks.len()).map(|t| (t, ci)));
            }
        }
        Protocol::PerDatasetValidation => {
            if let Some(t) = tasks.iter().find(|t| t.validation.is_none()) {
                return Err(Error::MissingValidation(t.name.clone()));
            }
            let pairs: Vec<(usize, usize)> = (0..tasks.len())
                .flat_map(|t| (0..cands.len()).map(move |c| (t, c)))
                .collect();
            let scores = pairs
                .par_iter()
                .map(|&(t, c)| score(&cands[c], &tasks[t], Split::Selection).map(|s| s.score))
                .collect::<Result<Vec<f64>>>()?;
            for (t, task) in tasks.iter().enumerate() {
                let slice = &scores[t * cands.len()..(t + 1) * cands.len()];
                for (ci, s) in pick(&cands, slice, &methods) {
                    selected.push(Selection {
                        task: task.name.clone(),
                        selected_on: format!("{}:validation", task.name),
                        candidate: cands[ci].clone(),
                        selection_score: s,
                    });
                    finals.push((t, ci));
                }
            }
        }
    }
    let rows = finals
        .par_iter()
        .map(|&(t, c)| score(&cands[c], &tasks[t], Split::Query).map(|s| row(&s, &tasks[t])))
        .collect::<Result<Vec<EvalRow>>>()?;
    Ok(SweepOutcome {
        report: EvalReport::new(rows),
        selected,
    })
}

/// Every grid point on every task, scored on the query split.
pub fn evaluate_grid(grid: &SweepGrid, tasks: &[FewShotTask]) -> Result<EvalReport> {
    grid.validate()?;
    let cands = grid.candidates();
    let pairs: Vec<(usize, usize)> = (0..tasks.len())
        .flat_map(|t| (0..cands.len()).map(move |c| (t, c)))
        .collect();
    let rows = pairs
        .par_iter()
        .map(|&(t, c)| score(&cands[c], &tasks[t], Split::Query).map(|s| row(&s, &tasks[t])))
        .collect::<Result<Vec<EvalRow>>>()?;
    Ok(EvalReport::new(rows))
}

/// Mean query accuracy over `tasks` for each λ, other settings fixed.
pub fn lambda_sensitivity(
    method: Method,
    kernel: &KernelConfig,
    lambdas: &[f64],
    tasks: &[FewShotTask],
) -> Result<Vec<(f64, f64)>> {
    if lambdas.is_empty() || tasks.is_empty() {
        return Err(Error::EmptyGrid("lambda sensitivity needs lambdas and tasks".into()));
    }
    lambdas
        .par_iter()
        .map(|&l| {
            let c = Candidate {
                method,
                kernel: kernel.clone(),
                lambda: Some(l),
                alpha: None,
            };
            let mut total = 0.0;
            for t in tasks {
                total += score(&c, t, Split::Query)?.score;
            }
            Ok((l, total / tasks.len() as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::classify::{gaussian_task, GaussianSpec};
    use crate::harness::evaluate;

    fn tasks(n: u64) -> Vec<FewShotTask> {
        let spec = GaussianSpec {
            num_classes: 4,
            dim: 8,
            samples_per_class: 20,
            corrupt_fraction: 0.5,
            ..Default::default()
        };
        (0..n).map(|s| gaussian_task(&spec, 4, 4, s).unwrap()).collect()
    }

    #[test]
    fn default_grid_shape() {
        let g = SweepGrid::default();
        g.validate().unwrap();
        assert_eq!(g.lambdas.len(), 7);
        // tip: 5 betas x 4 alphas, others: 5 betas x 7 lambdas
        assert_eq!(g.candidates().len(), 20 + 3 * 35);
    }

    #[test]
    fn empty_axes() {
        let g = SweepGrid {
            lambdas: vec![],
            ..Default::default()
        };
        assert!(matches!(g.validate(), Err(Error::EmptyGrid(_))));
        let g = SweepGrid {
            lambdas: vec![-1.0],
            ..Default::default()
        };
        assert!(matches!(g.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn single_config_matches_evaluate() {
        let ts = tasks(3);
        let grid = SweepGrid {
            methods: vec![Method::ProKeR],
            lambdas: vec![0.5],
            betas: BetaAxis::Values(vec![4.0]),
            ..Default::default()
        };
        let out = sweep(&grid, &ts, None).unwrap();
        assert_eq!(out.report.len(), 3);
        for (row, t) in out.report.rows.iter().zip(&ts) {
            let cfg = AdapterConfig::proker(crate::kernels::KernelSpec::rbf(4.0), 0.5);
            assert_eq!(row.score, evaluate(&cfg, t).unwrap());
        }
    }

    #[test]
    fn protocols() {
        let ts = tasks(2);
        let mut grid = SweepGrid {
            methods: vec![Method::ProKeR, Method::Tip],
            ..Default::default()
        };
        grid.protocol = Protocol::TransferFromAnchor;
        assert!(matches!(sweep(&grid, &ts, None), Err(Error::MissingAnchor)));
        let anchored = sweep(&grid, &ts[..1], Some(&ts[0])).unwrap();
        grid.protocol = Protocol::PerDatasetValidation;
        let per = sweep(&grid, &ts[..1], None).unwrap();
        assert_eq!(
            anchored.selected.iter().map(|s| &s.candidate).collect::<Vec<_>>(),
            per.selected.iter().map(|s| &s.candidate).collect::<Vec<_>>()
        );
        let scores = |r: &EvalReport| r.rows.iter().map(|x| x.score).collect::<Vec<_>>();
        assert_eq!(scores(&anchored.report), scores(&per.report));

        let mut no_val = ts[1].clone();
        no_val.validation = None;
        assert!(matches!(sweep(&grid, &[no_val], None), Err(Error::MissingValidation(_))));
    }

    #[test]
    fn deterministic_across_runs() {
        let ts = tasks(2);
        let grid = SweepGrid {
            methods: vec![Method::ProximalNw, Method::Llr],
            lambdas: vec![0.1, 1.0],
            ..Default::default()
        };
        let a = sweep(&grid, &ts, None).unwrap();
        let b = sweep(&grid, &ts, None).unwrap();
        assert_eq!(a.selected, b.selected);
        let sa: Vec<f64> = a.report.rows.iter().map(|r| r.score).collect();
        let sb: Vec<f64> = b.report.rows.iter().map(|r| r.score).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn grid_json() {
        let g: SweepGrid = serde_json::from_str(
            r#"{"methods":["proker"],"lambdas":[1],"betas":{"values":[2]},"protocol":"transfer"}"#,
        )
        .unwrap();
        assert_eq!(g.protocol, Protocol::TransferFromAnchor);
        assert_eq!(g.candidates().len(), 1);
        assert_eq!(g.candidates()[0].kernel.beta, Some(2.0));
    }
}
