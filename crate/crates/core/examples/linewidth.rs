//! Temperature dependence of the ZPL width: T³ fit and comparison with T⁵.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spekit::fitters::{fit_linewidth_power, fit_linewidth_t3, FitOptions, LinewidthPoint, LinewidthSeries};

fn main() -> spekit::Result<()> {
    let (gamma0, coeff) = (0.095 - 1e-8 * 18f64.powi(3), 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let points = [18.0, 50.0, 80.0, 110.0, 140.0, 170.0, 200.0, 230.0, 260.0, 300.0]
        .iter()
        .map(|&t: &f64| {
            let w = gamma0 + coeff * t.powi(3);
            LinewidthPoint { temperature_k: t, fwhm_nm: w * (1.0 + 0.05 * noise.sample(&mut rng)), sigma_nm: 0.05 * w }
        })
        .collect();
    let series = LinewidthSeries::new(points)?;
    let t3 = fit_linewidth_t3(&series, &FitOptions::default())?;
    let t5 = fit_linewidth_power(&series, 5, &FitOptions::default())?;
    println!("gamma0 {:.4} ± {:.4} nm (true {gamma0:.4})", t3.value("gamma0"), t3.sigma("gamma0").unwrap_or(f64::NAN));
    println!(
        "coeff  {:.3e} ± {:.1e} nm/K³ (true {coeff:.1e})",
        t3.value("coeff"),
        t3.sigma("coeff").unwrap_or(f64::NAN)
    );
    println!("chi2 T³ {:.2}, T⁵ {:.2}", t3.chi2, t5.chi2);
    Ok(())
}
