use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use proker::adapters::{
    inspect_model, load_model, predict_queries, proker_fit, save_model, AdapterConfig, KernelConfig,
    Method, ModelFile,
};
use proker::featurestore::{load_task_features, load_text_classifier, one_hot, FsfBlock, FSF_MAGIC};
use proker::harness::{
    accuracy, emit_report, run_synth_suite, synth_generate, EvalReport, EvalRow, ReportFormat,
    SweepGrid, SynthGrid, SynthSpec,
};
use proker::kernels::KernelFamily;
use proker::spectral::{
    approximate_predict, build_fourier_map, compress as compress_model, default_feature_count,
    prototype_predict,
};
use proker::{Error, Result};
use serde::de::DeserializeOwned;

use crate::manifest::load_tasks;
use crate::{CompressArgs, EvalArgs, InspectArgs, SweepArgs, SynthArgs};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Inline JSON when it looks like an object, otherwise a file path.
fn kernel_config(arg: Option<&str>) -> Result<KernelConfig> {
    match arg {
        None => Ok(KernelConfig::default()),
        Some(s) if s.trim_start().starts_with('{') => Ok(serde_json::from_str(s)?),
        Some(p) => read_json(Path::new(p)),
    }
}

pub fn eval(a: EvalArgs) -> Result<ExitCode> {
    let support = load_task_features(&a.support)?;
    let query = load_task_features(&a.query)?;
    let text = load_text_classifier(&a.text)?;
    let mut kc = kernel_config(a.kernel_json.as_deref())?;
    if a.beta.is_some() {
        kc.beta = a.beta;
    }
    let mut cfg = if a.method == Method::ZeroShot {
        AdapterConfig::zero_shot()
    } else {
        AdapterConfig::new(a.method, kc.resolve(&support)?)
    };
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(al) = a.alpha {
        cfg.alpha = al;
    }
    cfg.validate()?;
    if a.save_model.is_some() && a.method != Method::ProKeR {
        return Err(Error::InvalidConfig("--save-model is only available for proker".into()));
    }

    let start = Instant::now();
    let logits = predict_queries(&cfg, &support, &text, query.features())?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let acc = accuracy(&logits, query.labels())?;
    let m = cfg.method;
    let rbf = m != Method::ZeroShot && cfg.kernel.family == KernelFamily::Rbf;
    let row = EvalRow {
        method: m.name().into(),
        kernel: if m == Method::ZeroShot { "none".into() } else { cfg.kernel.family.name().into() },
        lambda: m.uses_lambda().then_some(cfg.lambda),
        beta: rbf.then_some(cfg.kernel.beta),
        alpha: (m == Method::Tip).then_some(cfg.alpha),
        shots: support.rows() / support.num_classes().max(1),
        seed: a.seed,
        score: acc,
        wall_ms,
    };
    emit_report(&EvalReport::new(vec![row]), &a.out, ReportFormat::from_path(&a.out))?;
    println!("{} accuracy {:.4} on {} queries ({wall_ms:.1} ms)", m, acc, query.rows());

    if let Some(path) = &a.save_model {
        let model = proker_fit(&cfg, support.features(), &one_hot(&support).matrix, &text)?;
        let bytes = save_model(&ModelFile::Kernel(model), path)?;
        println!("model written to {} ({bytes} bytes)", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let mut grid: SweepGrid = read_json(&a.grid)?;
    if let Some(p) = &a.protocol {
        grid.protocol = p.parse()?;
    }
    let tasks = load_tasks(&a.tasks, a.seed)?;
    let anchor = match &a.anchor {
        None => None,
        Some(name) => Some(tasks.iter().find(|t| &t.name == name).ok_or_else(|| {
            Error::InvalidConfig(format!("anchor {name:?} is not a task in the manifest"))
        })?),
    };
    let out = proker::harness::sweep(&grid, &tasks, anchor)?;
    emit_report(&out.report, &a.out, ReportFormat::from_path(&a.out))?;
    let selected = a.selected.clone().unwrap_or_else(|| sibling(&a.out, "selected.json"));
    std::fs::write(&selected, serde_json::to_string_pretty(&out.selected)?)?;
    for r in &out.report.rows {
        println!("{:<8} shots {:<3} seed {:<4} score {:.4}", r.method, r.shots, r.seed, r.score);
    }
    println!("report: {}, selections: {}", a.out.display(), selected.display());
    Ok(ExitCode::SUCCESS)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

pub fn synth(a: SynthArgs) -> Result<ExitCode> {
    if a.seeds == 0 {
        return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
    }
    let spec: SynthSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    let grid: SynthGrid = match &a.grid {
        Some(p) => read_json(p)?,
        None => SynthGrid::default(),
    };
    let ordering_methods = [Method::ProximalNw, Method::Llr, Method::ProKeR];
    if a.assert_ordering && !ordering_methods.iter().all(|m| a.methods.contains(m)) {
        return Err(Error::InvalidConfig(
            "--assert-ordering needs methods nw, llr and proker".into(),
        ));
    }
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|i| a.seed_start + i).collect();
    let suite = run_synth_suite(&spec, &a.methods, &seeds, &grid)?;

    std::fs::create_dir_all(&a.out_dir)?;
    for &s in &seeds {
        synth_generate(&spec, s)?.write_files(&a.out_dir.join(format!("seed{s}")))?;
    }
    let report = suite.report();
    let csv = a.out_dir.join("synth.csv");
    emit_report(&report, &csv, ReportFormat::Csv)?;

    print!("{:<6}", "seed");
    for m in &suite.methods {
        print!(" {:>10}", m.name());
    }
    println!();
    for (s, fits) in suite.seeds.iter().zip(&suite.fits) {
        print!("{s:<6}");
        for f in fits {
            print!(" {:>10.5}", f.heldout_mse);
        }
        println!();
    }
    println!("held-out MSE table written to {}", csv.display());

    if let Some(o) = suite.ordering() {
        println!(
            "LLR<NW {}/{n}, ProKeR<NW {}/{n}, ProKeR<LLR {}/{n}",
            o.llr_over_nw,
            o.proker_over_nw,
            o.proker_over_llr,
            n = o.seeds
        );
        if a.assert_ordering && !o.passes() {
            eprintln!("ordering check failed");
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn compress(a: CompressArgs) -> Result<ExitCode> {
    let before = std::fs::metadata(&a.model)?.len();
    let ModelFile::Kernel(model) = load_model(&a.model)? else {
        return Err(Error::InvalidConfig(format!(
            "{} is already a prototype model",
            a.model.display()
        )));
    };
    let dim = model.support.ncols();
    let r = a.rff.unwrap_or_else(|| default_feature_count(dim));
    let beta = a.beta.unwrap_or(model.kernel.beta);
    let map = build_fourier_map(dim, r, beta, a.orthogonal, a.seed)?;
    let pm = compress_model(&model, &map)?;
    let after = save_model(&ModelFile::Prototype(pm.clone()), &a.out)?;

    let (nk, n) = model.targets.shape();
    let cached = nk * dim + nk + n * dim + nk * n;
    println!(
        "cached model:    {before} bytes ({cached} numbers: support {nk}x{dim}, labels, text, dual coefficients)"
    );
    println!(
        "prototype model: {after} bytes ({} numbers = N x (D + R) with N={n}, D={dim}, R={r})",
        pm.stored_values()
    );
    if let Some(q) = &a.query {
        let queries = load_task_features(q)?;
        let diff = prototype_predict(&pm, queries.features())?
            .max_abs_diff(&approximate_predict(&model, &map, queries.features())?);
        println!("prototype vs approximate-kernel parity: max |diff| = {diff:.3e}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn inspect(a: InspectArgs) -> Result<ExitCode> {
    let bytes = std::fs::read(&a.path)?;
    let magic = bytes.get(..4).unwrap_or(&bytes[..]);
    if magic == FSF_MAGIC {
        let b = FsfBlock::decode(&bytes)?;
        println!("format:     FSF1");
        println!("rows:       {}", b.rows);
        println!("dim:        {}", b.dim);
        println!(
            "flags:      has_labels={} normalized={}",
            b.labels.is_some(),
            b.normalized
        );
        if let Some(labels) = &b.labels {
            let mut counts = vec![0usize; b.num_classes()];
            for &l in labels {
                counts[l as usize] += 1;
            }
            println!("per-class:  {counts:?}");
        }
        println!("metadata:   {}", serde_json::Value::Object(b.metadata.clone()));
        if b.metadata.get("kind").and_then(|v| v.as_str()) == Some("text_classifier") {
            let text = proker::featurestore::TextClassifier::from_block(b)?;
            let norms: Vec<String> = text.column_norms().iter().map(|n| format!("{n:.4}")).collect();
            println!("col norms:  [{}]", norms.join(", "));
        }
    } else if magic == b"PKM1" {
        let s = inspect_model(&bytes)?;
        println!("format:     PKM1 ({} model)", s.kind);
        println!("bytes:      {}", s.total_bytes);
        println!("header:     {}", s.header);
        for (name, rows, dim, len) in &s.blocks {
            println!("block:      {name} {rows}x{dim} ({len} bytes)");
        }
    } else {
        return Err(Error::BadMagic {
            expected: "FSF1 or PKM1",
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    Ok(ExitCode::SUCCESS)
}
