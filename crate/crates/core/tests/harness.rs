use proker::adapters::{AdapterConfig, KernelConfig, Method};
use proker::harness::{
    emit_report, evaluate, gaussian_task, lambda_sensitivity, read_report, sweep, BetaAxis,
    GaussianSpec, Protocol, ReportFormat, SweepGrid,
};

/// Separable classes, two of ten base-classifier columns swapped.
fn separable_corrupted() -> GaussianSpec {
    GaussianSpec {
        corrupt_fraction: 0.2,
        ..Default::default()
    }
}

/// Overlapping classes with the same corruption.
fn corrupted() -> GaussianSpec {
    GaussianSpec {
        spread: 1.6,
        corrupt_fraction: 0.2,
        ..Default::default()
    }
}

#[test]
fn adapters_recover_from_corrupted_base() {
    let adapted = [Method::Tip, Method::ProximalNw, Method::Llr, Method::ProKeR];
    let mut wins = [0usize; 4];
    for seed in 0..10 {
        let task = gaussian_task(&separable_corrupted(), 4, 4, seed).unwrap();
        let zs = evaluate(&AdapterConfig::zero_shot(), &task).unwrap();
        let grid = SweepGrid {
            methods: adapted.to_vec(),
            ..Default::default()
        };
        let out = sweep(&grid, std::slice::from_ref(&task), None).unwrap();
        for (i, m) in adapted.iter().enumerate() {
            let row = out.report.rows.iter().find(|r| r.method == m.name()).unwrap();
            if row.score >= zs {
                wins[i] += 1;
            }
        }
    }
    for (m, w) in adapted.iter().zip(wins) {
        assert!(w >= 9, "{m} matched zero-shot on only {w}/10 seeds");
    }
}

#[test]
fn lambda_curve_peaks_inside() {
    let tasks: Vec<_> = (0..10).map(|s| gaussian_task(&corrupted(), 4, 4, 100 + s).unwrap()).collect();
    let kernel = KernelConfig::default();
    let coarse: Vec<f64> = (-3..=3).map(|e| 10f64.powi(e)).collect();
    let curve = lambda_sensitivity(Method::ProKeR, &kernel, &coarse, &tasks).unwrap();
    let (star, _) = curve
        .iter()
        .copied()
        .fold((0.0, f64::MIN), |best, p| if p.1 > best.1 { p } else { best });
    let fine: Vec<f64> = [0.2, 0.5, 1.0, 2.0, 5.0].iter().map(|m| m * star).collect();
    let curve = lambda_sensitivity(Method::ProKeR, &kernel, &fine, &tasks).unwrap();
    let center = curve[2].1;
    assert!(curve[0].1 <= center && curve[4].1 <= center, "{curve:?}");
}

#[test]
fn transfer_with_self_anchor_matches_per_dataset() {
    let task = gaussian_task(&corrupted(), 4, 4, 7).unwrap();
    let mut grid = SweepGrid {
        methods: vec![Method::ProKeR, Method::ProximalNw],
        lambdas: vec![0.01, 0.1, 1.0],
        betas: BetaAxis::MedianMultiples(vec![0.5, 1.0, 2.0]),
        ..Default::default()
    };
    let per = sweep(&grid, std::slice::from_ref(&task), None).unwrap();
    grid.protocol = Protocol::TransferFromAnchor;
    let transfer = sweep(&grid, std::slice::from_ref(&task), Some(&task)).unwrap();
    let cands = |o: &proker::harness::SweepOutcome| {
        o.selected.iter().map(|s| s.candidate.clone()).collect::<Vec<_>>()
    };
    assert_eq!(cands(&per), cands(&transfer));
}

#[test]
fn sweep_reports_round_trip_through_files() {
    let tasks: Vec<_> = (0..3).map(|s| gaussian_task(&corrupted(), 2, 2, s).unwrap()).collect();
    let grid = SweepGrid {
        methods: vec![Method::Tip, Method::ProKeR, Method::ZeroShot],
        lambdas: vec![0.1, 1.0],
        alphas: vec![1.0],
        betas: BetaAxis::Values(vec![4.0, 8.0]),
        ..Default::default()
    };
    let out = sweep(&grid, &tasks, None).unwrap();
    assert_eq!(out.report.len(), 9);
    assert!(out.report.rows.iter().all(|r| (0.0..=1.0).contains(&r.score)));
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let json = dir.path().join("r.json");
    emit_report(&out.report, &csv, ReportFormat::Csv).unwrap();
    emit_report(&out.report, &json, ReportFormat::Json).unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 10);
    assert_eq!(read_report(&json).unwrap(), out.report);
    assert_eq!(read_report(&csv).unwrap(), out.report);
}

#[test]
fn scores_do_not_depend_on_thread_count() {
    let tasks: Vec<_> = (0..4).map(|s| gaussian_task(&corrupted(), 4, 4, s).unwrap()).collect();
    let grid = SweepGrid {
        methods: vec![Method::Llr, Method::ProKeR],
        lambdas: vec![0.1, 1.0],
        ..Default::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = pool.install(|| sweep(&grid, &tasks, None)).unwrap();
        (out.selected, out.report.rows.iter().map(|r| r.score.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(1), run(4));
}
