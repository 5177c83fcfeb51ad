use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spekit::fitters::{FitOptions, PeakShape};
use spekit::spectra::{classify_polarization, debye_waller, fit_peaks, PeakModel, Spectrum};

fn render(peaks: &[PeakModel], baseline: f64, lo: f64, hi: f64, n: usize, noise_rel: f64, seed: u64) -> Spectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let y = x
        .iter()
        .map(|&w| {
            let v = baseline + peaks.iter().map(|p| p.eval(w)).sum::<f64>();
            (v + noise_rel * v * Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).max(0.0)
        })
        .collect();
    Spectrum::new(x, y, None).unwrap()
}

fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, h: f64) -> f64 {
    let n = ((hi - lo) / h).ceil() as usize;
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
    h * (inner + 0.5 * (f(lo) + f(hi)))
}

#[test]
fn zpl_and_sideband_eight_nm_apart() {
    let zpl = PeakModel::new(PeakShape::Lorentzian, 581.2, 0.4, 3.3e4).unwrap();
    let psb = PeakModel::new(PeakShape::Lorentzian, 589.2, 6.0, 6.7e4).unwrap();
    let s = render(&[zpl, psb], 100.0, 570.0, 620.0, 2001, 0.02, 1);
    let f = fit_peaks(&s, 2, &[], &[], &FitOptions::default()).unwrap();
    assert!((f.peaks[0].center_nm - 581.2).abs() < 0.05, "{}", f.peaks[0].center_nm);
    assert!((f.peaks[1].center_nm - 589.2).abs() < 0.05, "{}", f.peaks[1].center_nm);
}

#[test]
fn fitted_areas_match_trapezoid_integral() {
    let a = PeakModel::new(PeakShape::Lorentzian, 600.0, 0.5, 2e4).unwrap();
    let b = PeakModel::new(PeakShape::Gaussian, 612.0, 4.0, 5e4).unwrap();
    let s = render(&[a, b], 50.0, 590.0, 630.0, 1601, 0.01, 2);
    let f = fit_peaks(&s, 2, &[PeakShape::Lorentzian, PeakShape::Gaussian], &[], &FitOptions::default()).unwrap();
    for p in &f.peaks {
        // ±400 FWHM holds all but 0.08% of a Lorentzian.
        let half = 400.0 * p.fwhm_nm;
        let num = trapezoid(|w| p.eval(w), p.center_nm - half, p.center_nm + half, p.fwhm_nm / 10.0);
        assert!((num / p.area - 1.0).abs() < 1e-3, "{:?}: {num} vs {}", p.shape, p.area);
    }
}

#[test]
fn twenty_emitters_split_into_two_orthogonal_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let jitter = Normal::new(0.0, 3.0).unwrap();
    let phis: Vec<f64> = (0..20)
        .map(|i| (if i % 2 == 0 { 45.0f64 } else { 135.0 } + jitter.sample(&mut rng)).rem_euclid(180.0))
        .collect();
    let c = classify_polarization(&phis, 10.0).unwrap();
    assert!(c.two_state && c.orthogonal && c.outliers.is_empty());
    for i in 0..20 {
        assert_eq!(c.assignments[i], c.assignments[i % 2]);
    }
    assert_ne!(c.assignments[0], c.assignments[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dwf_is_a_fraction_and_grows_with_zpl(zpl in 1e-3..1e6f64, psb in 1e-3..1e6f64, more in 1.0..10.0f64) {
        let mk = |a: f64| PeakModel::new(PeakShape::Lorentzian, 600.0, 0.5, a).unwrap();
        let side = PeakModel::new(PeakShape::Gaussian, 608.0, 6.0, psb).unwrap();
        let d = debye_waller(&mk(zpl), &[side]).unwrap();
        prop_assert!((0.0..=1.0).contains(&d.dwf));
        let d2 = debye_waller(&mk(zpl * more), &[side]).unwrap();
        prop_assert!(d2.dwf >= d.dwf);
    }

    #[test]
    fn adding_half_turns_keeps_assignments(
        phis in prop::collection::vec(0.0..180.0f64, 2..30),
        turns in prop::collection::vec(0u8..2, 30),
    ) {
        let a = classify_polarization(&phis, 10.0).unwrap();
        let shifted: Vec<f64> = phis.iter().zip(&turns).map(|(p, &t)| p + 180.0 * t as f64).collect();
        let b = classify_polarization(&shifted, 10.0).unwrap();
        prop_assert_eq!(a.assignments, b.assignments);
        prop_assert_eq!(a.outliers, b.outliers);
    }
}
