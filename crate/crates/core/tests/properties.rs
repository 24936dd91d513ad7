use proptest::prelude::*;

use sdelab::model::{catalog, lie_gap, localize, CatalogName, CatalogParams, Coefficient, Interval, NestedIntervals};
use sdelab::oracle::PathState;
use sdelab::proof::build_aux_scheme;
use sdelab::schemes::{grid_time, run_euler, run_milstein};
use sdelab::stats::{log_corrected_fit, loglog_fit, wilson};

const NS: [f64; 6] = [16.0, 32.0, 64.0, 128.0, 256.0, 512.0];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_law_slope_is_recovered(c in 1e-3f64..1e3, p in -2.0f64..0.0) {
        let errs: Vec<f64> = NS.iter().map(|n| c * n.powf(p)).collect();
        let fit = loglog_fit(&NS, &errs, None).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-8);
    }

    #[test]
    fn rescaling_errors_keeps_the_slope(noise in prop::collection::vec(0.5f64..2.0, 6), scale in 1e-4f64..1e4) {
        let errs: Vec<f64> = NS.iter().zip(&noise).map(|(n, z)| z / n).collect();
        let scaled: Vec<f64> = errs.iter().map(|e| e * scale).collect();
        let a = loglog_fit(&NS, &errs, None).unwrap();
        let b = loglog_fit(&NS, &scaled, None).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-9);
        prop_assert!((b.intercept - a.intercept - scale.ln()).abs() < 1e-8);
    }

    #[test]
    fn log_factor_model_is_exact_on_its_own_curve(c in 1e-2f64..1e2, p in -1.5f64..-0.1) {
        let errs: Vec<f64> = NS.iter().map(|n| c * n.powf(p) * (n + 1.0).ln().sqrt()).collect();
        let fit = log_corrected_fit(&NS, &errs, None).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!(fit.rss < 1e-18);
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(trials in 1u64..100_000, frac in 0.0f64..=1.0, conf in 0.5f64..0.999) {
        let successes = (frac * trials as f64).floor() as u64;
        let p = wilson(successes, trials, conf);
        prop_assert!(0.0 <= p.lower && p.lower <= p.estimate && p.estimate <= p.upper && p.upper <= 1.0);
        let wider = wilson(successes, trials, (conf + 1.0) / 2.0);
        prop_assert!(wider.lower <= p.lower && wider.upper >= p.upper);
    }

    #[test]
    fn area_is_additive_over_knots(seed in 0u64..1000, k in 2usize..64, cut in 1usize..63) {
        let cut = cut % (k - 1) + 1;
        let mut path = PathState::from_seed(seed, 0);
        let ts: Vec<f64> = (0..=k).map(|l| grid_time(l, k, 1.0)).collect();
        for &t in &ts {
            path.evaluate(t).unwrap();
        }
        let (s1, s2, s3) = (ts[0], ts[cut], ts[k]);
        let jump = (s3 - s2) * (path.evaluate(s2).unwrap() - path.evaluate(s1).unwrap());
        let whole = path.area(s1, s3).unwrap();
        let parts = path.area(s1, s2).unwrap() + path.area(s2, s3).unwrap() + jump;
        prop_assert!((whole - parts).abs() <= 1e-12 * (1.0 + whole.abs()));
    }

    #[test]
    fn coarse_nodes_survive_refinement(seed in 0u64..1000, k in 1usize..32, factor in 2usize..8) {
        let mut path = PathState::from_seed(seed, 3);
        let coarse: Vec<f64> = (0..=k).map(|l| path.evaluate(grid_time(l, k, 1.0)).unwrap()).collect();
        let fine: Vec<f64> = (0..=k * factor).map(|l| path.evaluate(grid_time(l, k * factor, 1.0)).unwrap()).collect();
        for l in 0..=k {
            prop_assert_eq!(coarse[l].to_bits(), fine[l * factor].to_bits());
        }
    }

    #[test]
    fn milstein_is_euler_under_additive_noise(seed in 0u64..1000, k in 1usize..128, x0 in -2.0f64..2.0) {
        let spec = catalog(CatalogName::SgnDrift, &CatalogParams::default()).unwrap();
        let mut path = PathState::from_seed(seed, 1);
        let e = run_euler(&spec, x0, k, &mut path, false).unwrap();
        let m = run_milstein(&spec, x0, k, &mut path, false).unwrap();
        prop_assert_eq!(e.values, m.values);
    }

    #[test]
    fn gbm_has_no_lie_gap(alpha in -2.0f64..2.0, beta in 0.1f64..2.0, x in 0.01f64..50.0) {
        let spec = catalog(CatalogName::Gbm, &CatalogParams { alpha: Some(alpha), beta: Some(beta), ..Default::default() }).unwrap();
        let g = lie_gap(&spec, 0.0, x).unwrap();
        prop_assert!(g.abs() <= 1e-12 * (1.0 + x * x));
    }

    #[test]
    fn localized_coefficients_match_on_inner_interval(u in 0.0f64..1.0, i in 0usize..3, j in 0usize..3) {
        let q = catalog(CatalogName::Quintic, &CatalogParams::default()).unwrap();
        let nest = NestedIntervals::new(Interval::new(0.25, 4.0), Interval::new(0.5, 2.0), Interval::new(0.75, 1.5));
        let l = localize(&q, nest).unwrap();
        let x = 0.75 + 0.75 * u;
        prop_assume!(nest.inner.contains(x));
        for which in [Coefficient::Drift, Coefficient::Diffusion] {
            if let (Ok(a), Ok(b)) = (q.partial(which, i.min(1), j, 0.0, x), l.partial(which, i.min(1), j, 0.0, x)) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn aux_endpoint_decomposition_holds(seed in 0u64..10_000, k in 1usize..96) {
        let q = catalog(CatalogName::Quintic, &CatalogParams::default()).unwrap();
        let nest = NestedIntervals::new(Interval::new(0.25, 4.0), Interval::new(0.5, 2.0), Interval::new(0.75, 1.5));
        let s = localize(&q, nest).unwrap();
        let aux = build_aux_scheme(&s, 1.0, &mut PathState::from_seed(seed, 0), k).unwrap();
        prop_assert!(aux.identity_residual() <= 1e-10);
    }
}
