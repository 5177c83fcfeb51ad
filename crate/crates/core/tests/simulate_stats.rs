use proptest::prelude::*;
use spekit::correlate::{decay_histogram, CorrelationConfig};
use spekit::fitters::{fit_lifetime, DecayModel, FitOptions};
use spekit::kinetics::{g2_params_from_rates, steady_state, ThreeLevelRates};
use spekit::simulate::{
    apply_detector, simulate_photon_stream, simulate_poisson_stream, split_hbt, DetectorModel, PhotonRecord,
    PulseConfig, SimConfig, TagStream,
};

#[test]
fn two_level_mean_rate_matches_steady_state() {
    let r = ThreeLevelRates::new(0.1, 0.3, 0.0, 0.05).unwrap();
    let duration = 1e7;
    let s = simulate_photon_stream(&r, &SimConfig::cw(duration, 11)).unwrap();
    let pe = steady_state(&r).unwrap().excited;
    let expected = r.gamma_eg * pe * duration;
    // Antibunched counts are sub-Poissonian: Var N = N·(1 + 2R∫(g²−1)dτ).
    let fano = 1.0 - 2.0 * r.gamma_eg * pe / (r.gamma_ge + r.gamma_eg);
    let sigma = (expected * fano).sqrt();
    let n = s.len() as f64;
    assert!((n - expected).abs() < 3.0 * sigma, "{n} vs {expected} ± {sigma}");
}

#[test]
fn three_level_mean_rate_matches_steady_state() {
    let r = ThreeLevelRates::new(0.1, 0.3, 0.01, 0.002).unwrap();
    let duration = 1e8;
    let s = simulate_photon_stream(&r, &SimConfig { segments: 4, ..SimConfig::cw(duration, 5) }).unwrap();
    let pe = steady_state(&r).unwrap().excited;
    let rate = r.gamma_eg * pe;
    let p = g2_params_from_rates(&r).unwrap();
    let integral = p.alpha_bunching * p.tau2 - (1.0 + p.alpha_bunching) * p.tau1;
    let expected = rate * duration;
    let sigma = (expected * (1.0 + 2.0 * rate * integral)).sqrt();
    let n = s.len() as f64;
    assert!((n - expected).abs() < 3.0 * sigma, "{n} vs {expected} ± {sigma}");
}

#[test]
fn no_pump_gives_empty_stream() {
    let r = ThreeLevelRates::new(0.0, 0.3, 0.01, 0.002).unwrap();
    let s = simulate_photon_stream(&r, &SimConfig::cw(1e6, 1)).unwrap();
    assert!(s.is_empty());
    assert_eq!(s.duration_ps, 1_000_000_000);
}

#[test]
fn seeded_runs_are_identical_and_thread_independent() {
    let r = ThreeLevelRates::new(0.05, 0.3, 0.01, 0.002).unwrap();
    let cfg = SimConfig { segments: 6, ..SimConfig::cw(2e6, 42) };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_photon_stream(&r, &cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(1));
    assert_ne!(one, simulate_photon_stream(&r, &SimConfig { seed: 43, ..cfg.clone() }).unwrap());
    assert!(one.is_time_ordered());
}

#[test]
fn efficiency_is_binomial() {
    let s = simulate_poisson_stream(1.0, 1e6, 0, 3).unwrap();
    let n = s.len() as f64;
    let det = DetectorModel { efficiency: 0.5, ..DetectorModel::ideal() };
    let kept = apply_detector(&s, &det, 9).unwrap().len() as f64;
    assert!((kept - 0.5 * n).abs() < 4.0 * (0.25 * n).sqrt());
}

#[test]
fn ideal_detector_is_identity() {
    let s = simulate_poisson_stream(0.3, 1e5, 0, 1).unwrap();
    assert_eq!(apply_detector(&s, &DetectorModel::ideal(), 0).unwrap(), s);
}

#[test]
fn dead_time_follows_non_paralyzable_formula() {
    let r = 0.02;
    let dead_ns = 100.0;
    let duration = 1e8;
    let s = simulate_poisson_stream(r, duration, 0, 21).unwrap();
    let det = DetectorModel { dead_time_ps: (dead_ns * 1000.0) as u64, ..DetectorModel::ideal() };
    let out = apply_detector(&s, &det, 4).unwrap();
    let measured = out.len() as f64 / duration;
    let expected = r / (1.0 + r * dead_ns);
    assert!((measured / expected - 1.0).abs() < 0.02, "{measured} vs {expected}");
}

#[test]
fn split_is_balanced() {
    let s = simulate_poisson_stream(1.0, 1e6, 0, 8).unwrap();
    let n = s.len() as f64;
    let (a, b) = split_hbt(&s, 2);
    assert_eq!(a.len() + b.len(), s.len());
    assert!((a.len() as f64 - b.len() as f64).abs() < 4.0 * (n / 4.0).sqrt());
    assert!(a.records.iter().all(|r| r.channel == 0) && b.records.iter().all(|r| r.channel == 1));
    let empty = TagStream::new(10, vec![0], Vec::new());
    let (a, b) = split_hbt(&empty, 2);
    assert!(a.is_empty() && b.is_empty());
}

#[test]
fn pulsed_arrivals_decay_with_excited_lifetime() {
    let b = 1.0 / 3.45;
    let r = ThreeLevelRates::new(2.0, b, 0.0, 0.01).unwrap();
    let cfg =
        SimConfig { segments: 4, ..SimConfig::pulsed(2e7, 17, PulseConfig { period_ns: 25.0, pulse_width_ns: 1.0 }) };
    let s = simulate_photon_stream(&r, &cfg).unwrap();
    let ts = s.timestamps(0);
    let hist = decay_histogram(&ts, 25.0, &CorrelationConfig::new(100, 25_000).unwrap()).unwrap();
    let fit = fit_lifetime(&hist, &FitOptions::default()).unwrap();
    let m = DecayModel::from_fit(&fit).unwrap();
    assert!((m.tau / 3.45 - 1.0).abs() < 0.03, "tau {}", m.tau);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dead_time_spacing_holds(seed in any::<u64>(), dead in 1u64..50_000, jitter in 0.0..500.0f64, dark in 0.0..0.01f64) {
        let s = simulate_poisson_stream(0.05, 1e5, 0, seed).unwrap();
        let extra: Vec<PhotonRecord> = s.records.iter().map(|r| PhotonRecord { timestamp: r.timestamp, channel: 1 }).collect();
        let s = s.merge(&TagStream::new(s.duration_ps, vec![1], extra));
        let det = DetectorModel { dead_time_ps: dead, jitter_sigma_ps: jitter, dark_rate: dark, ..DetectorModel::ideal() };
        let out = apply_detector(&s, &det, seed ^ 1).unwrap();
        for ch in [0u8, 1] {
            let ts = out.timestamps(ch);
            prop_assert!(ts.windows(2).all(|w| w[1] - w[0] >= dead));
        }
    }
}
