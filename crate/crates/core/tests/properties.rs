use proptest::prelude::*;

use pulse_spectra::fluctuation::{tail_ccdf, TailParams};
use pulse_spectra::pump::PumpSpec;
use pulse_spectra::rate_model::{simulate_with, RateParams, SimulationSettings};
use pulse_spectra::specfit::fit_alpha;
use pulse_spectra::spectrum::{default_omega_grid, GridSpacing, Source, Spectrum};
use pulse_spectra::sweep::{rows_to_csv, Axis, ResultRow, SweepCase, SweepConfig, SweepExport, Window};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn balance_identity_holds(
        log_n0 in 5.0f64..8.0,
        log_c in -5.0f64..-3.0,
        r in 0.5f64..4.0,
        eta in 0.0f64..1.0,
    ) {
        let p = RateParams::new(10f64.powf(log_n0), 10f64.powf(log_c), r, eta, PumpSpec::new(1.0).unwrap()).unwrap();
        let traj = simulate_with(&p, &SimulationSettings::default()).unwrap();
        prop_assert!(traj.diagnostics.max_balance_residual < 1e-8);
        for node in traj.nodes() {
            prop_assert!(node.x >= -1e-6 * p.n0 && node.a >= -1e-6 * p.n0);
            prop_assert!(node.x + node.a <= p.n0 * (1.0 + 1e-9));
        }
    }
}

proptest! {
    #[test]
    fn stretched_exponential_exponent_is_recovered(
        alpha0 in 0.05f64..0.95,
        ln_f_max in 2.0f64..50.0,
        lo in 10.0f64..500.0,
        span in 1.2f64..10.0,
    ) {
        let hi = lo * span;
        let omega = default_omega_grid(lo, hi, GridSpacing::Total(64)).unwrap();
        let a = ln_f_max * hi.powf(alpha0);
        let ln_f: Vec<f64> = omega.iter().map(|w| a * w.powf(-alpha0)).collect();
        let s = Spectrum::from_ln_magnitude(omega, ln_f, Source::external("synthetic")).unwrap();
        let fit = fit_alpha(&s, lo, hi).unwrap();
        prop_assert!((fit.alpha - alpha0).abs() < 1e-9);
        prop_assert!(fit.rms_residual < 1e-9);
    }

    #[test]
    fn tail_ccdf_is_fatter_for_smaller_exponent(a1 in 0.05f64..0.9, gap in 0.01f64..0.1, u in 50.0f64..1e4) {
        let a2 = (a1 + gap).min(1.0);
        let small = tail_ccdf(u, &TailParams::with_alpha(a1).unwrap()).unwrap();
        let large = tail_ccdf(u, &TailParams::with_alpha(a2).unwrap()).unwrap();
        prop_assert!(small >= large);
        if large > 0.0 {
            prop_assert!(small > large);
        }
    }

    #[test]
    fn sweep_export_round_trips(alpha in proptest::option::of(0.0f64..1.0), osc in 0.0f64..1.0, n0 in 1e5f64..1e12) {
        let base = RateParams::reference().unwrap();
        let cfg = SweepConfig::new(base, Axis::N0, vec![SweepCase { value: n0, windows: vec![Window::new(50.0, 100.0)] }]);
        let row = ResultRow {
            params: base.with_n0(n0),
            omega_min: 50.0,
            omega_max: 100.0,
            alpha,
            method: None,
            omega_max_pow_alpha: alpha.map(|a| 100f64.powf(a)),
            osc_fraction: Some(osc),
            rms_residual: None,
            intercept: None,
            n_points: Some(64),
            switch_on: None,
            half_alphas: None,
            flags: vec!["nonlinear".into(), "truncation".into()],
            error: None,
            wall_time_s: 0.5,
        };
        let export = SweepExport::new(&cfg, vec![row]).unwrap();
        let back = SweepExport::from_json(&export.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &export);
        prop_assert_eq!(rows_to_csv(&back.rows).unwrap(), rows_to_csv(&export.rows).unwrap());
    }
}
