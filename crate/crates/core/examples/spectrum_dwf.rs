//! Decomposes a room-temperature spectrum into ZPL and phonon sideband and
//! reports the Debye-Waller factor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spekit::fitters::{FitOptions, PeakShape};
use spekit::spectra::{debye_waller, fit_peaks, PeakModel, Spectrum};

fn main() -> spekit::Result<()> {
    let zpl = PeakModel::new(PeakShape::Lorentzian, 600.2, 0.4, 3.3e4)?;
    let psb = PeakModel::new(PeakShape::Lorentzian, 608.0, 6.0, 6.7e4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..4001).map(|i| 570.0 + 80.0 * i as f64 / 4000.0).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&w| {
            let v = 100.0 + zpl.eval(w) + psb.eval(w);
            v * (1.0 + 0.02 * noise.sample(&mut rng))
        })
        .collect();
    let spectrum = Spectrum::new(x, y, Some(295.0))?;
    let fit = fit_peaks(&spectrum, 2, &[], &[], &FitOptions::default())?;
    for p in &fit.peaks {
        println!("{:?} at {:.3} nm, fwhm {:.3} nm, area {:.0}", p.shape, p.center_nm, p.fwhm_nm, p.area);
    }
    let (narrow, broad) = if fit.peaks[0].fwhm_nm < fit.peaks[1].fwhm_nm { (0, 1) } else { (1, 0) };
    let d = debye_waller(&fit.peaks[narrow], &[fit.peaks[broad]])?;
    println!("DWF {:.4} (true {:.4})", d.dwf, debye_waller(&zpl, &[psb])?.dwf);
    Ok(())
}
