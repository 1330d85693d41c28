use nalgebra::DMatrix;
use proker::adapters::{predict_targets, AdapterConfig, Method};
use proker::featurestore::{one_hot_labels, FeatureSet, FsfBlock, TextClassifier};
use proker::kernels::{gram, kernel_eval, KernelSpec, Metric};
use proker::metrics::{mahalanobis_sq, Precision};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn unit(m: DMatrix<f64>) -> DMatrix<f64> {
    let mut m = m;
    for mut r in m.row_iter_mut() {
        let n = r.norm().max(1e-3);
        r /= n;
    }
    m
}

/// Support, labels, base classifier and queries with `n` classes.
fn problem() -> impl Strategy<Value = (DMatrix<f64>, Vec<u32>, DMatrix<f64>, DMatrix<f64>, usize)> {
    (2usize..5, 1usize..4, 2usize..7).prop_flat_map(|(n, k, d)| {
        (matrix(n * k, d), matrix(d, n), matrix(6, d)).prop_map(move |(s, w, q)| {
            let labels = (0..n * k).map(|i| (i % n) as u32).collect();
            (unit(s), labels, w, unit(q), n)
        })
    })
}

fn kernel_spec() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.1f64..10.0).prop_map(KernelSpec::rbf),
        Just(KernelSpec::linear()),
        (1u32..4).prop_map(KernelSpec::polynomial),
        Just(KernelSpec::epanechnikov()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fsf_round_trip_is_bit_exact(rows in 1usize..10, dim in 1usize..8, n in 1usize..6, seed in any::<u64>()) {
        let data = DMatrix::from_fn(rows, dim, |i, j| {
            let x = seed.wrapping_mul(6364136223846793005).wrapping_add((i * 31 + j) as u64);
            (x >> 11) as f64 / (1u64 << 53) as f64 * 8.0 - 4.0
        });
        let labels = (0..rows).map(|i| (i % n) as u32).collect();
        let fs = FeatureSet::new(data, labels, n).unwrap();
        let bytes = fs.to_block().encode();
        let back = FeatureSet::from_block(FsfBlock::decode(&bytes).unwrap()).unwrap();
        prop_assert_eq!(back.to_block().encode(), bytes);
        prop_assert_eq!(back, fs);
    }

    #[test]
    fn gram_is_symmetric_and_psd(points in matrix(9, 4), spec in kernel_spec()) {
        let g = gram(&spec, &points, &points).unwrap();
        prop_assert!(g.symmetry_error() < 1e-12);
        if spec.family != proker::kernels::KernelFamily::Epanechnikov {
            let scale = g.values.amax().max(1.0);
            prop_assert!(g.min_eigenvalue() > -1e-9 * scale);
        }
    }

    #[test]
    fn gram_matches_pairwise(a in matrix(5, 3), b in matrix(4, 3), spec in kernel_spec()) {
        let g = gram(&spec, &a, &b).unwrap().values;
        for i in 0..5 {
            for j in 0..4 {
                let x: Vec<f64> = a.row(i).iter().copied().collect();
                let y: Vec<f64> = b.row(j).iter().copied().collect();
                let want = kernel_eval(&spec, &x, &y).unwrap();
                prop_assert!((g[(i, j)] - want).abs() < 1e-9 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn whitening_gives_mahalanobis(m in matrix(3, 3), x in matrix(1, 3), y in matrix(1, 3)) {
        let mut p = &m * m.transpose();
        for i in 0..3 {
            p[(i, i)] += 0.5;
        }
        let prec = Precision::new(p).unwrap();
        let wx = prec.whiten(&x).unwrap();
        let wy = prec.whiten(&y).unwrap();
        let direct = mahalanobis_sq(&prec, x.as_slice(), y.as_slice()).unwrap();
        prop_assert!(((wx - wy).norm_squared() - direct).abs() < 1e-9 * direct.max(1.0));
    }

    #[test]
    fn support_permutation_does_not_change_predictions(
        (s, labels, w, q, n) in problem(),
        method in prop::sample::select(vec![Method::Tip, Method::ProximalNw, Method::Llr, Method::ProKeR]),
        shift in 0usize..7,
    ) {
        let text = TextClassifier::new(w, None).unwrap();
        let l = one_hot_labels(&labels, n).matrix;
        let cfg = AdapterConfig { lambda: 0.3, alpha: 0.7, ..AdapterConfig::new(method, KernelSpec::rbf(2.0)) };
        let a = predict_targets(&cfg, &s, &l, &text, &q).unwrap();
        let rows = s.nrows();
        let order: Vec<usize> = (0..rows).map(|i| (i * 5 + shift) % rows).collect();
        if {
            let mut o = order.clone();
            o.sort();
            o.dedup();
            o.len() != rows
        } {
            return Ok(());
        }
        let sp = s.select_rows(&order);
        let lp = l.select_rows(&order);
        let b = predict_targets(&cfg, &sp, &lp, &text, &q).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-8);
    }

    #[test]
    fn larger_lambda_pulls_toward_base((s, labels, w, q, n) in problem(), beta in 0.5f64..8.0) {
        let text = TextClassifier::new(w, None).unwrap();
        let l = one_hot_labels(&labels, n).matrix;
        // NW at arbitrary queries; ProKeR at the support, where the pull is
        // K(λI + K)⁻¹R and shrinks in every eigendirection.
        for (method, at) in [(Method::ProximalNw, &q), (Method::ProKeR, &s)] {
            let f = text.logits(at).unwrap();
            let mut last = f64::INFINITY;
            for lambda in [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0] {
                let cfg = AdapterConfig { lambda, ..AdapterConfig::new(method, KernelSpec::rbf(beta)) };
                let phi = predict_targets(&cfg, &s, &l, &text, at).unwrap();
                let dist = (&phi.values - &f).norm();
                prop_assert!(dist <= last * (1.0 + 1e-9) + 1e-12, "{method} lambda {lambda}: {dist} > {last}");
                last = dist;
            }
        }
    }

    #[test]
    fn identity_metric_is_euclidean(points in matrix(6, 4), beta in 0.1f64..5.0) {
        let e = gram(&KernelSpec::rbf(beta), &points, &points).unwrap();
        let m = gram(
            &KernelSpec::rbf(beta).with_metric(Metric::Mahalanobis(Precision::identity(4))),
            &points,
            &points,
        )
        .unwrap();
        prop_assert_eq!(e.values, m.values);
    }
}
