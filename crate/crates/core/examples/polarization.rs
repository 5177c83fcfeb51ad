//! Polarization sweeps of two emitters and the two-state classification of a
//! larger ensemble.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spekit::fitters::{fit_polarization, FitOptions, PolarizationPoint};
use spekit::spectra::classify_polarization;

fn main() -> spekit::Result<()> {
    for phi in [45.0, 135.0] {
        let points: Vec<PolarizationPoint> = (0..36)
            .map(|i| {
                let th = 10.0 * i as f64;
                PolarizationPoint {
                    theta_deg: th,
                    rate_cps: 3e3 + 8e4 * (th + phi).to_radians().sin().powi(2),
                    sigma_cps: 300.0,
                }
            })
            .collect();
        let f = fit_polarization(&points, &FitOptions::default())?;
        println!("emitter at {phi}: phi {:.3} deg, visibility {:.3}", f.phi_deg, f.visibility);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let jitter = Normal::new(0.0, 3.0).unwrap();
    let phis: Vec<f64> =
        (0..20).map(|i| ([45.0f64, 135.0][i % 2] + jitter.sample(&mut rng)).rem_euclid(180.0)).collect();
    let c = classify_polarization(&phis, 10.0)?;
    println!(
        "centers {:?}, two-state {}, orthogonal {}, outliers {:?}",
        c.centers, c.two_state, c.orthogonal, c.outliers
    );
    Ok(())
}
