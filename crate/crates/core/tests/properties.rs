mod common;

use ebv::segmentation::{segment, LikelihoodSpec};
use ebv::synthgen::generate;
use ebv::{fit_segment, reconstruct, ModelConfig, SearchSpace};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn segmentation_result_is_consistent(seed in 0u64..100_000, change in proptest::bool::ANY) {
        let config = ModelConfig::default();
        let space = SearchSpace::from_config(&config);
        let spec = if change {
            common::single_change_scenario(seed, 0.2).0
        } else {
            common::stationary_scenario(seed, 8, 0.2)
        };
        let (d, _) = generate(&spec, &config).unwrap();
        let r = segment(&d, &space, &config, &LikelihoodSpec::default()).unwrap();

        // AIC never rises along the greedy descent
        for w in r.aic_trace.windows(2) {
            prop_assert!(w[1].aic <= w[0].aic);
            prop_assert_eq!(w[1].num_cuts, w[0].num_cuts + 1);
        }
        // the chosen model is on the trace and within the relaxation
        let min = r.aic_trace.iter().map(|t| t.aic).fold(f64::INFINITY, f64::min);
        prop_assert!(r.aic_trace.iter().any(|t| t.cut_points == r.cut_points && t.aic == r.aic));
        prop_assert!(r.aic <= min + 0.1 * min.abs() + 1e-9);

        prop_assert!(r.cut_points.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(r.cut_points.iter().all(|&c| c > 0 && c < d.len() && d.is_day_edge(c)));
        prop_assert_eq!(r.segments.len(), r.cut_points.len() + 1);
        prop_assert_eq!(r.params.len(), r.segments.len());
        prop_assert_eq!(r.segments[0].range.start, 0);
        prop_assert_eq!(r.segments.last().unwrap().range.end, d.len());
        for (s, p) in r.segments.iter().zip(&r.params) {
            prop_assert!(space.contains(p));
            prop_assert_eq!(s.params, *p);
        }
        let again = reconstruct(&d, &r.segments, &config).unwrap();
        prop_assert_eq!(&again, &r.reconstruction);
    }

    #[test]
    fn fit_stays_in_the_box_and_reports_its_residuals(seed in 0u64..100_000, sigma in 0.0f64..0.5) {
        let config = ModelConfig::default();
        let space = SearchSpace::from_config(&config);
        let (d, _) = generate(&common::recovery_scenario(seed, sigma), &config).unwrap();
        let f = fit_segment(&d, 0..d.len(), &space, &config).unwrap();
        prop_assert!(space.contains(&f.params));
        prop_assert_eq!(f.residuals.len(), f.n_used);
        let rmse = (f.sse() / f.n_used as f64).sqrt();
        prop_assert!((rmse - f.rmse).abs() <= 1e-12 * (1.0 + rmse));
        // refitting is bit-for-bit reproducible
        let g = fit_segment(&d, 0..d.len(), &space, &config).unwrap();
        prop_assert_eq!(f, g);
    }
}
