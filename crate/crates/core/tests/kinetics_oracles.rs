mod common;

use common::{char_poly_roots, ode_g2, ode_populations};
use proptest::prelude::*;
use spekit::kinetics::{
    self, g2_exact, g2_params_from_rates, propagate, quantum_efficiency, relaxation_modes, steady_state,
    LevelPopulations, PumpModel, RatePoint, RateSeries, Relaxation, ThreeLevelRates,
};

fn reference() -> ThreeLevelRates {
    ThreeLevelRates::new(0.1, 0.3, 0.01, 0.002).unwrap()
}

#[test]
fn steady_state_matches_long_time_integration() {
    let r = reference();
    let ode = ode_populations(&r, 1e5);
    let ss = steady_state(&r).unwrap().as_array();
    for i in 0..3 {
        assert!((ss[i] - ode[i]).abs() < 1e-10, "level {i}: {} vs {}", ss[i], ode[i]);
    }
}

#[test]
fn g2_exact_matches_adaptive_ode() {
    let r = reference();
    let taus = [1.0, 10.0, 100.0, 1000.0];
    let exact = g2_exact(&r, &taus).unwrap();
    let oracle = ode_g2(&r, &taus);
    for ((t, g), o) in exact.iter().zip(oracle) {
        assert!((g - o).abs() < 1e-8, "tau {t}: {g} vs {o}");
    }
}

#[test]
fn propagate_matches_ode_from_ground() {
    let r = reference();
    for t in [0.5, 3.0, 40.0, 700.0] {
        let p = propagate(&r, &LevelPopulations::GROUND, t).unwrap().as_array();
        let o = ode_populations(&r, t);
        for i in 0..3 {
            assert!((p[i] - o[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn eigenvalues_match_characteristic_polynomial() {
    for r in [
        reference(),
        ThreeLevelRates::new(0.004, 0.2903, 0.01, 1.0 / 675.0).unwrap(),
        ThreeLevelRates::new(2.0, 0.25, 0.05, 0.01).unwrap(),
    ] {
        let roots = char_poly_roots(r.rate_matrix());
        assert!(roots[0].abs() < 1e-12, "zero eigenvalue: {}", roots[0]);
        let Relaxation::Distinct { fast, slow } = relaxation_modes(&r) else { panic!("distinct expected") };
        assert!((slow / roots[1].abs() - 1.0).abs() < 1e-10);
        assert!((fast / roots[2].abs() - 1.0).abs() < 1e-10);
        let p = g2_params_from_rates(&r).unwrap();
        assert!((1.0 / p.tau1 / fast - 1.0).abs() < 1e-10);
        assert!((1.0 / p.tau2 / slow - 1.0).abs() < 1e-10);
    }
}

#[test]
fn params_agree_with_least_squares_fit_of_exact_curve() {
    use spekit::fitters::{fit_g2_points, FitData, FitOptions};
    let r = reference();
    let taus: Vec<f64> = (0..3000).map(|i| i as f64 * 0.5).collect();
    let g: Vec<f64> = g2_exact(&r, &taus).unwrap().into_iter().map(|(_, v)| v).collect();
    let data = FitData::new(taus, g, vec![1e-3; 3000]).unwrap();
    let fit = fit_g2_points(&data, None, &FitOptions::default()).unwrap();
    let p = g2_params_from_rates(&r).unwrap();
    assert!((fit.params.tau1 / p.tau1 - 1.0).abs() < 1e-6);
    assert!((fit.params.tau2 / p.tau2 - 1.0).abs() < 1e-6);
    assert!((fit.params.alpha_bunching / p.alpha_bunching - 1.0).abs() < 1e-6);
}

#[test]
fn e1_zero_power_limits() {
    let pump = PumpModel::new(0.02).unwrap();
    let (b, c, d) = (1.0 / 3.33 - 0.01, 0.01, 1.0 / 675.0);
    let points: Vec<RatePoint> = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0]
        .iter()
        .map(|&p| {
            let r = ThreeLevelRates::new(kinetics::pump_rate(p, &pump).unwrap(), b, c, d).unwrap();
            RatePoint { power_mw: p, value: 1.0 / g2_params_from_rates(&r).unwrap().tau1, sigma: 1e-4 }
        })
        .collect();
    let line = kinetics::extrapolate_zero_power(&RateSeries::new(points.clone()).unwrap()).unwrap();
    assert!((line.intercept * 3.33 - 1.0).abs() < 0.05);
    // 1/τ₁ is nearly linear in power: residuals are tiny relative to the span.
    let span = points.last().unwrap().value - points[0].value;
    for p in &points {
        assert!((line.eval(p.power_mw) - p.value).abs() < 0.01 * span);
    }
    let low = ThreeLevelRates::new(1e-6, b, c, d).unwrap();
    let p = g2_params_from_rates(&low).unwrap();
    assert!((p.tau1 - 3.33).abs() < 1e-3 && (p.tau2 / 675.0 - 1.0).abs() < 1e-3);
}

#[test]
fn quantum_efficiency_flux_balance() {
    let r = ThreeLevelRates::new(0.05, 0.3, 0.01, 100.0).unwrap();
    let qe = quantum_efficiency(&r).unwrap();
    let ss = steady_state(&r).unwrap();
    let radiative = r.gamma_eg * ss.excited;
    let returned = r.gamma_eg * ss.excited + r.gamma_mg * ss.metastable;
    assert!((qe - radiative / returned).abs() < 1e-12);
    assert!((qe - 0.968).abs() < 1e-3);
}

fn rates_strategy() -> impl Strategy<Value = ThreeLevelRates> {
    (1e-3..2.0f64, 0.05..1.0f64, 0.0..0.05f64, 1e-4..0.05f64)
        .prop_map(|(a, b, c, d)| ThreeLevelRates::new(a, b, c, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn populations_are_conserved(r in rates_strategy(), t in 0.0..5000.0f64) {
        let p = propagate(&r, &LevelPopulations::GROUND, t).unwrap();
        prop_assert!((p.total() - 1.0).abs() < 1e-12);
        for v in p.as_array() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn antibunching_and_asymptote(r in rates_strategy()) {
        let t_long = 20.0 * kinetics::relaxation_time(&r);
        let g = g2_exact(&r, &[0.0, t_long]).unwrap();
        prop_assert_eq!(g[0].1, 0.0);
        prop_assert!((g[1].1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bunching_exactly_when_alpha_positive(r in rates_strategy()) {
        if let Ok(p) = g2_params_from_rates(&r) {
            let t_max = 20.0 * p.tau2;
            let grid: Vec<f64> = (0..4000).map(|i| t_max * i as f64 / 3999.0).collect();
            let peak = g2_exact(&r, &grid).unwrap().into_iter().map(|(_, g)| g).fold(0.0, f64::max);
            prop_assert_eq!(peak > 1.0, p.alpha_bunching > 0.0, "peak {} alpha {}", peak, p.alpha_bunching);
        }
    }

    #[test]
    fn closed_form_tracks_exact_in_shelving_regime(a in 1e-3..1.0f64, b in 0.1..1.0f64, ratio in 50.0..500.0f64, d in 1e-4..0.01f64) {
        let r = ThreeLevelRates::new(a, b, b / ratio, d).unwrap();
        if let Ok(p) = g2_params_from_rates(&r) {
            let t_max = 10.0 * p.tau2;
            let grid: Vec<f64> = (0..2000).map(|i| t_max * i as f64 / 1999.0).collect();
            for (t, g) in g2_exact(&r, &grid).unwrap() {
                prop_assert!((p.eval(t) - g).abs() < 1e-3 * g.max(1.0));
            }
        }
    }

    #[test]
    fn two_level_limit(a in 1e-3..2.0f64, b in 0.05..1.0f64, t in 0.0..100.0f64) {
        let r = ThreeLevelRates::new(a, b, 0.0, 0.01).unwrap();
        let g = g2_exact(&r, &[t]).unwrap()[0].1;
        prop_assert!((g - (1.0 - (-(a + b) * t).exp())).abs() < 1e-10);
    }
}
