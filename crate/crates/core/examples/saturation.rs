//! Fits a saturation curve with linear background and dark counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spekit::fitters::{fit_saturation, FitOptions, SaturationConfig, SaturationModel, SaturationPoint};

fn main() -> spekit::Result<()> {
    let truth =
        SaturationModel { r_inf: 1.942e6, p_sat: 0.425, eta_ex: 1.0, eta_col: 1.0, alpha_slope: 2e4, beta_dark: 500.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let points: Vec<SaturationPoint> = (1..=25)
        .map(|i| {
            let p = 0.01 * 500f64.powf((i - 1) as f64 / 24.0);
            let r = truth.eval(p);
            SaturationPoint { power_mw: p, rate_cps: r * (1.0 + 0.01 * noise.sample(&mut rng)), sigma_cps: 0.01 * r }
        })
        .collect();
    let cfg = SaturationConfig::default();
    let fit = fit_saturation(&points, &cfg, &FitOptions::default())?;
    let model = SaturationModel::from_fit(&fit, &cfg).expect("saturation parameters");

    println!("R_inf {:.4e} cps (true {:.4e})", model.r_inf, truth.r_inf);
    println!("P_sat {:.4} mW (true {:.4})", model.p_sat, truth.p_sat);
    println!("alpha {:.0} cps/mW, beta {:.0} cps", model.alpha_slope, model.beta_dark);
    println!("reduced chi2 {:.2}, converged {}", fit.reduced_chi2(), fit.converged);
    Ok(())
}
