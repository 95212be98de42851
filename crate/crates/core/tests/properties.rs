//! Invariants checked on random inputs.

use proptest::prelude::*;
use rectilinear::exit::{simulate_exit, wilson_interval, Binning, RadialHistogram, SimulationSpec};
use rectilinear::geometry::{builtin_fields, Ball};
use rectilinear::report::verdict::{verdict_from_rows, RatioRow};
use rectilinear::report::ExperimentConfig;
use rectilinear::stable::StabilityIndex;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_conserves_samples(
        radii in proptest::collection::vec(1.0f64..40.0, 1..400),
        r in 0.5f64..2.0,
    ) {
        let scaled: Vec<f64> = radii.iter().map(|y| y * r).collect();
        let edges = Binning::default().edges(r).unwrap();
        prop_assert!(edges.windows(2).all(|w| w[1] > w[0]));
        let h = RadialHistogram::from_radii(scaled.iter().copied(), edges).unwrap();
        let inside: u64 = h.counts.iter().sum();
        prop_assert_eq!(inside + h.overflow, scaled.len() as u64);
        let mass: f64 = h.bins().iter().map(|b| b.density * (b.hi - b.lo)).sum();
        prop_assert!((mass + h.overflow_fraction() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wilson_brackets_the_proportion(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac).round() as u64;
        let (lo, hi) = wilson_interval(s, n, 1.96);
        let p = s as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn verdict_is_scale_free(ratios in proptest::collection::vec(0.01f64..100.0, 1..30), scale in 0.001f64..1000.0) {
        let rows: Vec<RatioRow> = ratios.iter().enumerate().map(|(k, &q)| RatioRow {
            bin_lo: 1.0 + k as f64,
            bin_hi: 2.0 + k as f64,
            count: 3,
            density: q,
            density_low: 0.5 * q,
            density_high: 2.0 * q,
            phi_avg: 1.0,
            ratio: q,
            ratio_low: 0.5 * q,
            ratio_high: 2.0 * q,
        }).collect();
        let scaled: Vec<RatioRow> = rows.iter().map(|r| RatioRow {
            ratio: r.ratio * scale,
            ratio_low: r.ratio_low * scale,
            ratio_high: r.ratio_high * scale,
            ..r.clone()
        }).collect();
        let a = verdict_from_rows(&rows, 25.0);
        let b = verdict_from_rows(&scaled, 25.0);
        prop_assert!((a.spread / b.spread - 1.0).abs() < 1e-12);
        prop_assert_eq!(a.pass, b.pass);
    }

    #[test]
    fn config_round_trips(alpha in 0.05f64..1.95, seed in any::<u64>(), paths in 1usize..10_000_000) {
        let mut c = ExperimentConfig::default();
        c.alpha = alpha;
        c.seed = seed;
        c.simulation.paths = paths;
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn exits_leave_the_ball_and_repeat(seed in any::<u64>(), alpha in 0.6f64..1.8, field in 0usize..3) {
        let ball = Ball::centered(2, 1.0).unwrap();
        let fields = builtin_fields(2);
        let al = StabilityIndex::new(alpha).unwrap();
        let spec = SimulationSpec::default().with_paths(200).with_seed(seed);
        let a = simulate_exit(&[0.1, 0.2], &ball, fields[field].as_ref(), al, &spec).unwrap();
        let b = simulate_exit(&[0.1, 0.2], &ball, fields[field].as_ref(), al, &spec).unwrap();
        prop_assert_eq!(&a.records, &b.records);
        for k in 0..a.len() {
            prop_assert!(!ball.contains(a.exit_point(k)));
            prop_assert!(a.records[k].exit_radius >= 1.0);
        }
    }
}
