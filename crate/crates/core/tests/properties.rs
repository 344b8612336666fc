//! Property-based invariants of the numeric core.

mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sshk::diagnostics::{rank_normalized_rhat, ChainSet};
use sshk::io::{parse_csv, write_csv, Table};
use sshk::model::{support_size, Dataset};
use sshk::polya_gamma::{pg_draw, PgParams};
use sshk::spectral::{build_cache, Regime};
use sshk::tau::{adaptive_cdf, inverse_transform, IntegratorConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integrator_grids_are_valid(mu in -20.0f64..20.0, sigma in 0.1f64..5.0, offset in -3.0f64..3.0) {
        let cfg = IntegratorConfig::default();
        let grid = adaptive_cdf(|x: f64| -0.5 * ((x - mu) / sigma).powi(2), mu + offset * sigma, &cfg).unwrap();
        prop_assert!(grid.check_invariants(cfg.eps_density).is_ok());
        prop_assert!(grid.cum.windows(2).all(|w| w[0] <= w[1]));
        let mut last = f64::NEG_INFINITY;
        for k in 0..=50 {
            let v = inverse_transform(&grid, k as f64 / 50.0);
            prop_assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn support_size_is_within_bounds(sparsity in 1e-6f64..=1.0, p in 1usize..5000) {
        let k = support_size(sparsity, p);
        prop_assert!((1..=p).contains(&k));
        prop_assert!(support_size((sparsity * 2.0).min(1.0), p) >= k);
    }

    #[test]
    fn rhat_ignores_monotone_transforms(seed in 0u64..1000, shift in -3.0f64..3.0) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chains: Vec<Vec<f64>> = (0..3)
            .map(|c| (0..40).map(|_| rng.random::<f64>() + shift * c as f64).collect())
            .collect();
        let base = rank_normalized_rhat(&ChainSet::new(chains.clone()).unwrap()).unwrap();
        let mapped: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|v| (v * 0.5).exp()).collect()).collect();
        let other = rank_normalized_rhat(&ChainSet::new(mapped).unwrap()).unwrap();
        prop_assert!((base - other).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_monotone_in_tau(seed in 0u64..1000, n in 2usize..8, p in 1usize..8, logistic: bool) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = common::normal_matrix(n, p, &mut rng);
        let lambda = DVector::from_fn(p, |_, _| rng.random_range(0.2..3.0));
        let (d, omega, regime) = if logistic {
            let y: Vec<u32> = (0..n).map(|_| rng.random_range(0..=1)).collect();
            let omega = DVector::from_fn(n, |_, _| rng.random_range(0.05..1.0));
            (Dataset::logistic(x, y, false).unwrap(), Some(omega), Regime::auto(sshk::model::ModelKind::Logistic, n, p))
        } else {
            let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            (Dataset::linear(x, y, false).unwrap(), None, Regime::auto(sshk::model::ModelKind::Linear, n, p))
        };
        let cache = build_cache(&d, &lambda, omega.as_ref(), regime).unwrap();
        let taus = [1e-3, 1e-2, 0.1, 1.0, 10.0];
        for w in taus.windows(2) {
            prop_assert!(cache.eval_logdet(w[1]) >= cache.eval_logdet(w[0]) - 1e-12);
            let (q0, q1) = (cache.eval_quad(w[0]), cache.eval_quad(w[1]));
            if logistic {
                prop_assert!(q1 >= q0 - 1e-12);
            } else {
                prop_assert!(q1 <= q0 + 1e-12);
            }
        }
    }

    #[test]
    fn polya_gamma_draws_are_positive(seed in 0u64..1000, b in 1u32..4, c in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = pg_draw(PgParams::new(b, c), &mut rng);
        prop_assert!(v > 0.0 && v.is_finite());
    }

    #[test]
    fn csv_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..20)) {
        let table = Table { header: vec!["a".into(), "b".into(), "c".into()], rows };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, &table).unwrap();
        let text = std::fs::read(&path).unwrap();
        let back = parse_csv(&text[..]).unwrap();
        prop_assert_eq!(back, table);
    }
}

#[test]
fn regimes_agree_on_both_shapes() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (n, p) in [(6, 3), (3, 6)] {
        let x: DMatrix<f64> = common::normal_matrix(n, p, &mut rng);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let d = Dataset::linear(x, y, true).unwrap();
        let lambda = DVector::from_fn(p, |_, _| rng.random_range(0.5..2.0));
        let a = build_cache(&d, &lambda, None, Regime::LinearPN).unwrap();
        let b = build_cache(&d, &lambda, None, Regime::LinearNP).unwrap();
        for tau in [0.01, 0.3, 5.0] {
            let (la, qa) = a.eval_marginal(tau, 4.0);
            let (lb, qb) = b.eval_marginal(tau, 4.0);
            assert!((la - lb).abs() < 1e-10 * la.abs().max(1.0));
            assert!((qa - qb).abs() < 1e-10 * qa.abs().max(1.0));
        }
    }
}
