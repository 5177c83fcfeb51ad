//! Photoluminescence spectra: multi-peak decomposition, Debye-Waller factor
//! and classification of polarization states across emitters.

mod classify;

use serde::{Deserialize, Serialize};

pub use classify::{angle_distance, classify_polarization, PolarizationClusters};

use crate::error::{Error, Result};
use crate::fitters::models::MultiPeak;
use crate::fitters::{fit_curve, Bounds, FitData, FitOptions, FitResult, PeakShape};

/// Raman region excluded by default, nm.
pub const DEFAULT_EXCLUSION_NM: (f64, f64) = (578.0, 592.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub wavelength_nm: Vec<f64>,
    pub counts: Vec<f64>,
    pub temperature_k: Option<f64>,
}

impl Spectrum {
    pub fn new(wavelength_nm: Vec<f64>, counts: Vec<f64>, temperature_k: Option<f64>) -> Result<Self> {
        if wavelength_nm.len() != counts.len() {
            return Err(Error::InvalidInput("wavelength and counts lengths differ".into()));
        }
        if wavelength_nm.iter().any(|w| !w.is_finite()) || wavelength_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("wavelengths must be strictly increasing".into()));
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidInput("counts must be finite and non-negative".into()));
        }
        if temperature_k.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::InvalidInput("temperature must be positive".into()));
        }
        Ok(Self { wavelength_nm, counts, temperature_k })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Samples outside every `[lo, hi]` window.
    pub fn excluding(&self, windows: &[(f64, f64)]) -> Spectrum {
        let keep = |w: f64| windows.iter().all(|&(lo, hi)| w < lo || w > hi);
        let (wavelength_nm, counts) =
            self.wavelength_nm.iter().zip(&self.counts).filter(|(w, _)| keep(**w)).map(|(w, c)| (*w, *c)).unzip();
        Spectrum { wavelength_nm, counts, temperature_k: self.temperature_k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakModel {
    pub shape: PeakShape,
    pub center_nm: f64,
    pub fwhm_nm: f64,
    /// Integrated intensity, counts·nm.
    pub area: f64,
}

impl PeakModel {
    pub fn new(shape: PeakShape, center_nm: f64, fwhm_nm: f64, area: f64) -> Result<Self> {
        let p = Self { shape, center_nm, fwhm_nm, area };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_nm.is_finite() && self.fwhm_nm > 0.0 && self.area > 0.0 && self.area.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid peak {self:?}")));
        }
        Ok(())
    }

    pub fn eval(&self, wavelength_nm: f64) -> f64 {
        self.area * self.shape.profile(wavelength_nm, self.center_nm, self.fwhm_nm)
    }

    pub fn height(&self) -> f64 {
        self.area * self.shape.height_per_area(self.fwhm_nm)
    }
}

/// Result of [`fit_peaks`]: peaks sorted by center plus the linear baseline
/// `baseline + baseline_slope·(λ − x_ref_nm)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub peaks: Vec<PeakModel>,
    pub baseline: f64,
    pub baseline_slope: f64,
    pub x_ref_nm: f64,
    pub fit: FitResult,
}

impl PeakFit {
    pub fn eval(&self, wavelength_nm: f64) -> f64 {
        self.peaks.iter().map(|p| p.eval(wavelength_nm)).sum::<f64>()
            + self.baseline
            + self.baseline_slope * (wavelength_nm - self.x_ref_nm)
    }
}

/// Simultaneous least-squares fit of `n_peaks` peaks and a linear baseline.
///
/// `shapes` may be empty (all Lorentzian), a single shape for every peak,
/// or one shape per peak in order of detection height. Samples inside the
/// exclusion windows are dropped first. Counts are weighted as Poisson
/// (`σ = √max(counts, 1)`).
pub fn fit_peaks(
    spec: &Spectrum,
    n_peaks: usize,
    shapes: &[PeakShape],
    exclusion_windows: &[(f64, f64)],
    opts: &FitOptions,
) -> Result<PeakFit> {
    if n_peaks == 0 {
        return Err(Error::InvalidInput("need at least one peak".into()));
    }
    let shapes: Vec<PeakShape> = match shapes.len() {
        0 => vec![PeakShape::Lorentzian; n_peaks],
        1 => vec![shapes[0]; n_peaks],
        n if n == n_peaks => shapes.to_vec(),
        n => return Err(Error::InvalidInput(format!("{n} shapes given for {n_peaks} peaks"))),
    };
    let kept = spec.excluding(exclusion_windows);
    if kept.len() < 3 * n_peaks + 2 {
        return Err(Error::InvalidInput(format!("{} samples left after exclusion", kept.len())));
    }
    let x = kept.wavelength_nm.clone();
    let y = kept.counts.clone();
    let sigma = y.iter().map(|c| c.max(1.0).sqrt()).collect();
    let data = FitData::new(x.clone(), y.clone(), sigma)?;

    let (lo, hi) = (x[0], x[x.len() - 1]);
    let x_ref = 0.5 * (lo + hi);
    let spacing = (hi - lo) / (x.len() - 1) as f64;
    let mut init = initial_peaks(&x, &y, &shapes, spacing)?;
    let base0 = percentile(&y, 0.1);

    let mut order: Vec<usize> = (0..n_peaks).collect();
    order.sort_by(|&a, &b| init[a].0.total_cmp(&init[b].0));
    for w in order.windows(2) {
        let (a, b) = (init[w[0]], init[w[1]]);
        if (b.0 - a.0).abs() < 0.25 * a.1.max(b.1) {
            return Err(Error::UnresolvablePeaks(format!(
                "peaks at {:.3} nm and {:.3} nm are closer than a quarter width; fit fewer peaks",
                a.0, b.0
            )));
        }
    }
    init = order.iter().map(|&i| init[i]).collect();
    let shapes: Vec<PeakShape> = order.iter().map(|&i| shapes[i]).collect();

    let model = MultiPeak { shapes: shapes.clone(), x_ref };
    let mut start = Vec::with_capacity(3 * n_peaks + 2);
    let mut bounds = Bounds::unbounded(3 * n_peaks + 2);
    for (i, &(c, w, a)) in init.iter().enumerate() {
        start.extend([c, w, a]);
        bounds = bounds
            .with_lower(3 * i, lo)
            .with_upper(3 * i, hi)
            .with_lower(3 * i + 1, 1e-3 * spacing)
            .with_lower(3 * i + 2, 0.0);
    }
    start.extend([base0, 0.0]);
    let fit = fit_curve(&model, &data, &start, &bounds, &FitOptions { allow_singular: true, ..*opts })?;

    let mut peaks: Vec<PeakModel> = (0..n_peaks)
        .map(|i| PeakModel {
            shape: shapes[i],
            center_nm: fit.values[3 * i],
            fwhm_nm: fit.values[3 * i + 1],
            area: fit.values[3 * i + 2],
        })
        .collect();
    let k = 3 * n_peaks;
    let (baseline, baseline_slope) = (fit.values[k], fit.values[k + 1]);
    let vanished: Vec<usize> = (0..n_peaks).filter(|&i| peaks[i].area <= 0.0).collect();
    let fit = if !vanished.is_empty() && fit.diagnosis.is_none() {
        fit.flag(format!("peak(s) {vanished:?} fitted to zero area; fit fewer peaks"))
    } else {
        fit
    };
    peaks.sort_by(|a, b| a.center_nm.total_cmp(&b.center_nm));
    Ok(PeakFit { peaks, baseline, baseline_slope, x_ref_nm: x_ref, fit })
}

/// Greedy peak picking: tallest residual maximum, width from the
/// half-maximum crossings, then subtract and repeat. A maximum within three
/// Poisson sigmas of the residual is not a peak.
fn initial_peaks(x: &[f64], y: &[f64], shapes: &[PeakShape], spacing: f64) -> Result<Vec<(f64, f64, f64)>> {
    let base = percentile(y, 0.1);
    let mut resid: Vec<f64> = y.iter().map(|v| v - base).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for &shape in shapes {
        let smooth: Vec<f64> = (0..resid.len())
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 2).min(resid.len());
                resid[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect();
        let imax = (0..smooth.len()).max_by(|&a, &b| smooth[a].total_cmp(&smooth[b])).expect("non-empty");
        let height = resid[imax].max(smooth[imax]);
        if height <= 3.0 * y[imax].max(1.0).sqrt() {
            return Err(Error::UnresolvablePeaks(format!(
                "only {} significant peak(s) found; fit fewer peaks",
                out.len()
            )));
        }
        let half = 0.5 * height;
        let mut l = imax;
        while l > 0 && resid[l] > half {
            l -= 1;
        }
        let mut r = imax;
        while r + 1 < resid.len() && resid[r] > half {
            r += 1;
        }
        let cross = |i: usize, j: usize| {
            // Linear interpolation between sample i (below half) and j (above).
            let (yi, yj) = (resid[i], resid[j]);
            if (yj - yi).abs() > 0.0 {
                x[i] + (half - yi) / (yj - yi) * (x[j] - x[i])
            } else {
                x[i]
            }
        };
        let left = if l < imax { cross(l, l + 1) } else { x[imax] - 0.5 * spacing };
        let right = if r > imax { cross(r, r - 1) } else { x[imax] + 0.5 * spacing };
        let fwhm = (right - left).max(spacing);
        let center = x[imax];
        let area = height / shape.height_per_area(fwhm);
        for (v, &xi) in resid.iter_mut().zip(x) {
            *v -= area * shape.profile(xi, center, fwhm);
        }
        out.push((center, fwhm, area));
    }
    Ok(out)
}

fn percentile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[((s.len() - 1) as f64 * q).round() as usize]
}

/// Zero-phonon-line and sideband intensities and their ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    pub zpl: PeakModel,
    pub psb: Vec<PeakModel>,
    pub i_zpl: f64,
    pub i_psb: f64,
    pub i_tot: f64,
    pub dwf: f64,
}

/// `dwf = I_ZPL / (I_ZPL + Σ I_PSB)` from the analytic peak areas. Every
/// fitted sideband peak counts towards `I_PSB`, whatever its extent.
pub fn debye_waller(zpl: &PeakModel, psb: &[PeakModel]) -> Result<SpectralDecomposition> {
    if psb.is_empty() {
        return Err(Error::InvalidInput("at least one sideband peak is required".into()));
    }
    if psb.iter().chain(std::iter::once(zpl)).any(|p| !(p.area >= 0.0 && p.area.is_finite())) {
        return Err(Error::InvalidInput("peak areas must be non-negative".into()));
    }
    let i_zpl = zpl.area;
    let i_psb: f64 = psb.iter().map(|p| p.area).sum();
    let i_tot = i_zpl + i_psb;
    if i_tot <= 0.0 {
        return Err(Error::InvalidInput("total spectral area is zero".into()));
    }
    Ok(SpectralDecomposition { zpl: *zpl, psb: psb.to_vec(), i_zpl, i_psb, i_tot, dwf: i_zpl / i_tot })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(peaks: &[PeakModel], base: f64, lo: f64, hi: f64, n: usize) -> Spectrum {
        let x: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let y = x.iter().map(|&w| base + peaks.iter().map(|p| p.eval(w)).sum::<f64>()).collect();
        Spectrum::new(x, y, None).unwrap()
    }

    #[test]
    fn single_lorentzian_exact() {
        let zpl = PeakModel::new(PeakShape::Lorentzian, 581.2, 0.095, 500.0).unwrap();
        let s = render(&[zpl], 20.0, 579.0, 583.0, 801);
        let f = fit_peaks(&s, 1, &[], &[], &FitOptions::default()).unwrap();
        let p = f.peaks[0];
        assert!((p.center_nm - 581.2).abs() < 1e-8);
        assert!((p.fwhm_nm / 0.095 - 1.0).abs() < 1e-8);
        assert!((p.area / 500.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn two_gaussians() {
        let a = PeakModel::new(PeakShape::Gaussian, 600.0, 3.0, 1000.0).unwrap();
        let b = PeakModel::new(PeakShape::Gaussian, 630.0, 5.0, 3000.0).unwrap();
        let s = render(&[b, a], 5.0, 570.0, 660.0, 901);
        let f = fit_peaks(&s, 2, &[PeakShape::Gaussian], &[], &FitOptions::default()).unwrap();
        for (got, want) in f.peaks.iter().zip([a, b]) {
            assert!((got.center_nm - want.center_nm).abs() < 1e-6);
            assert!((got.fwhm_nm - want.fwhm_nm).abs() < 1e-6);
            assert!((got.area / want.area - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicate_peak_is_unresolvable() {
        let a = PeakModel::new(PeakShape::Lorentzian, 600.0, 3.0, 1000.0).unwrap();
        let s = render(&[a], 5.0, 570.0, 630.0, 601);
        assert!(matches!(fit_peaks(&s, 2, &[], &[], &FitOptions::default()), Err(Error::UnresolvablePeaks(_))));
    }

    #[test]
    fn dwf_arithmetic_and_limits() {
        let z = PeakModel::new(PeakShape::Lorentzian, 581.2, 0.1, 33.0).unwrap();
        let p = PeakModel::new(PeakShape::Lorentzian, 589.0, 8.0, 67.0).unwrap();
        let d = debye_waller(&z, &[p]).unwrap();
        assert!((d.dwf - 0.33).abs() < 1e-12);
        assert!((d.i_tot - d.i_zpl - d.i_psb).abs() <= 1e-9 * d.i_tot);
        assert!(debye_waller(&z, &[]).is_err());
        let tiny = PeakModel { area: 1e-12, ..p };
        assert!(debye_waller(&z, &[tiny]).unwrap().dwf > 1.0 - 1e-12);
    }

    #[test]
    fn exclusion_drops_samples() {
        let s = Spectrum::new(vec![570.0, 580.0, 590.0, 600.0], vec![1.0; 4], None).unwrap();
        assert_eq!(s.excluding(&[DEFAULT_EXCLUSION_NM]).wavelength_nm, vec![570.0, 600.0]);
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![1.0, 1.0], vec![0.0, 0.0], None).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![0.0, -1.0], None).is_err());
    }
}
