mod common;

use common::{brute_force_histogram, rms};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spekit::correlate::{decay_histogram, g2_from_streams, g2_histogram, CorrelationConfig, CorrelationMode};
use spekit::fitters::{fit_g2, FitOptions};
use spekit::kinetics::{g2_exact, g2_params_from_rates, ThreeLevelRates};
use spekit::simulate::{simulate_photon_stream, simulate_poisson_stream, split_hbt, SimConfig};

fn random_stream(rng: &mut ChaCha8Rng, n: usize, span: u64, parity: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..n).map(|_| rng.random_range(0..span / 2) * 2 + parity).collect();
    v.sort_unstable();
    v
}

#[test]
fn two_pointer_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let n0 = rng.random_range(1..=5_000);
        let n1 = rng.random_range(1..=5_000);
        let span = rng.random_range(10_000..10_000_000u64);
        // Coarse grids force coincident timestamps and edge ties.
        let grain = [1u64, 7, 64][trial % 3];
        let mut a: Vec<u64> = (0..n0).map(|_| rng.random_range(0..span) / grain * grain).collect();
        let mut b: Vec<u64> = (0..n1).map(|_| rng.random_range(0..span) / grain * grain).collect();
        a.sort_unstable();
        b.sort_unstable();
        let bw = rng.random_range(1..2_000u64);
        let window = rng.random_range(bw..=span.min(200_000));
        let cfg = CorrelationConfig::new(bw, window).unwrap();
        let h = g2_histogram(&a, &b, span, &cfg).unwrap();
        assert_eq!(h.counts, brute_force_histogram(&a, &b, bw, window), "trial {trial}");
    }
}

#[test]
fn swapping_channels_mirrors_histogram() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        // Even minus odd timestamps never land on an even bin edge.
        let a = random_stream(&mut rng, 3000, 2_000_000, 0);
        let b = random_stream(&mut rng, 3000, 2_000_000, 1);
        let cfg = CorrelationConfig::new(512, 50_000).unwrap();
        let ab = g2_histogram(&a, &b, 2_000_000, &cfg).unwrap();
        let ba = g2_histogram(&b, &a, 2_000_000, &cfg).unwrap();
        assert_eq!(ba.counts, ab.mirrored().counts);
        assert_eq!(ba.edges_ps, ab.mirrored().edges_ps);
    }
}

#[test]
fn poisson_channels_are_flat() {
    let a = simulate_poisson_stream(0.05, 1e8, 0, 1).unwrap();
    let b = simulate_poisson_stream(0.05, 1e8, 1, 1).unwrap();
    let cfg = CorrelationConfig::new(1000, 200_000).unwrap();
    let h = g2_from_streams(&a, &b, &cfg).unwrap();
    let (v, s) = (h.normalized(), h.sigmas());
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let sigma_mean = rms(s.iter().copied()) / (v.len() as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * sigma_mean, "mean {mean} ± {sigma_mean}");
    let outside = v.iter().zip(&s).filter(|(x, e)| (*x - 1.0).abs() > 3.0 * *e).count();
    assert!(outside <= v.len() / 100 + 2, "{outside} of {} bins beyond 3σ", v.len());
}

#[test]
fn start_stop_approaches_full_at_low_rate() {
    let a = simulate_poisson_stream(1e-4, 1e10, 0, 5).unwrap();
    let b = simulate_poisson_stream(1e-4, 1e10, 1, 5).unwrap();
    let full_cfg = CorrelationConfig::new(10_000, 100_000).unwrap();
    let ss_cfg = CorrelationConfig { mode: CorrelationMode::StartStop, ..full_cfg };
    let full = g2_from_streams(&a, &b, &full_cfg).unwrap();
    let ss = g2_from_streams(&a, &b, &ss_cfg).unwrap();
    for (f, s) in full.counts.iter().zip(&ss.counts) {
        assert!(s <= f);
        assert!((*f as f64 - *s as f64) <= 0.02 * *f as f64, "{s} vs {f}");
    }
}

#[test]
fn folded_dark_counts_are_flat() {
    let s = simulate_poisson_stream(0.01, 1e8, 0, 12).unwrap();
    let h = decay_histogram(&s.timestamps(0), 25.0, &CorrelationConfig::new(250, 25_000).unwrap()).unwrap();
    let mean = h.total() as f64 / h.len() as f64;
    let chi2: f64 = h.counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
    let dof = (h.len() - 1) as f64;
    // 3σ of a χ² distribution with `dof` degrees of freedom.
    assert!((chi2 - dof).abs() < 3.0 * (2.0 * dof).sqrt(), "chi2 {chi2} dof {dof}");
}

#[test]
fn single_photon_lands_mid_period() {
    let h = decay_histogram(&[12_500], 25.0, &CorrelationConfig::new(1000, 25_000).unwrap()).unwrap();
    assert_eq!(h.counts[12], 1);
    assert_eq!(h.total(), 1);
}

#[test]
fn two_level_dip_matches_exact() {
    let r = ThreeLevelRates::new(0.1, 0.3, 0.0, 0.05).unwrap();
    let s = simulate_photon_stream(&r, &SimConfig { segments: 4, ..SimConfig::cw(2e8, 3) }).unwrap();
    let (a, b) = split_hbt(&s, 3);
    let h = g2_from_streams(&a, &b, &CorrelationConfig::new(1000, 40_000).unwrap()).unwrap();
    let taus: Vec<f64> = h.centers_ns().iter().map(|t| t.abs()).collect();
    // The exact curve is averaged over each 1 ns bin.
    let exact: Vec<f64> = taus
        .iter()
        .map(|&t| {
            let sub: Vec<f64> = (0..20).map(|k| (t - 0.5 + (k as f64 + 0.5) / 20.0).abs()).collect();
            g2_exact(&r, &sub).unwrap().iter().map(|(_, g)| g).sum::<f64>() / 20.0
        })
        .collect();
    let pulls: Vec<f64> = h.normalized().iter().zip(h.sigmas()).zip(&exact).map(|((v, s), e)| (v - e) / s).collect();
    let chi2 = pulls.iter().map(|p| p * p).sum::<f64>() / pulls.len() as f64;
    assert!(chi2 < 1.5, "reduced chi2 {chi2}");
    for k in [39, 40] {
        assert!(pulls[k].abs() < 3.0 && h.normalized()[k] < 0.5);
    }
}

#[test]
fn strong_bunching_alpha_is_recovered() {
    let r = ThreeLevelRates::new(0.2, 0.3, 0.03, 0.01).unwrap();
    let truth = g2_params_from_rates(&r).unwrap();
    assert!(truth.alpha_bunching > 1.0);
    let s = simulate_photon_stream(&r, &SimConfig { segments: 8, ..SimConfig::cw(5e8, 77) }).unwrap();
    let (a, b) = split_hbt(&s, 77);
    let cfg = CorrelationConfig::new(500, (10.0 * truth.tau2 * 1000.0) as u64).unwrap();
    let h = g2_from_streams(&a, &b, &cfg).unwrap();
    assert!(h.normalized().iter().any(|&g| g > 1.5));
    let fit = fit_g2(&h, None, &FitOptions::default()).unwrap();
    let rel = fit.params.alpha_bunching / truth.alpha_bunching - 1.0;
    assert!(rel.abs() < 0.1, "alpha {} vs {}", fit.params.alpha_bunching, truth.alpha_bunching);
}
