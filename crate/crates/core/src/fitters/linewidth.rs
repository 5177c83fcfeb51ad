//! Temperature dependence of the zero-phonon-line width: `Γ(T) = Γ₀ + c·Tⁿ`.

use serde::{Deserialize, Serialize};

use super::engine::{fit_curve, Bounds, FitData, FitOptions};
use super::models::PowerLaw;
use super::FitResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinewidthPoint {
    pub temperature_k: f64,
    pub fwhm_nm: f64,
    pub sigma_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinewidthSeries {
    pub points: Vec<LinewidthPoint>,
}

impl LinewidthSeries {
    pub fn new(points: Vec<LinewidthPoint>) -> Result<Self> {
        let s = Self { points };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 3 {
            return Err(Error::InvalidInput(format!("need at least 3 temperatures, got {}", self.points.len())));
        }
        for p in &self.points {
            if !(p.temperature_k > 0.0 && p.fwhm_nm > 0.0 && p.sigma_nm > 0.0) {
                return Err(Error::InvalidInput(format!("invalid linewidth point {p:?}")));
            }
        }
        Ok(())
    }

    fn data(&self) -> Result<FitData> {
        FitData::new(
            self.points.iter().map(|p| p.temperature_k).collect(),
            self.points.iter().map(|p| p.fwhm_nm).collect(),
            self.points.iter().map(|p| p.sigma_nm).collect(),
        )
    }
}

/// Cubic law `Γ₀ + c·T³`.
pub fn fit_linewidth_t3(series: &LinewidthSeries, opts: &FitOptions) -> Result<FitResult> {
    fit_linewidth_power(series, 3, opts)
}

/// Fits `gamma0 + coeff·Tⁿ` with `gamma0 ≥ 0`. A negative `coeff` (width
/// shrinking with temperature) is flagged.
pub fn fit_linewidth_power(series: &LinewidthSeries, exponent: i32, opts: &FitOptions) -> Result<FitResult> {
    series.validate()?;
    if exponent < 1 {
        return Err(Error::InvalidInput(format!("exponent must be positive, got {exponent}")));
    }
    let data = series.data()?;
    // Weighted straight line in u = Tⁿ as the start point.
    let (mut sw, mut su, mut sy, mut suu, mut suy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&t, &y), &s) in data.x.iter().zip(&data.y).zip(&data.sigma) {
        let (w, u) = (1.0 / (s * s), t.powi(exponent));
        sw += w;
        su += w * u;
        sy += w * y;
        suu += w * u * u;
        suy += w * u * y;
    }
    let det = sw * suu - su * su;
    if det <= 0.0 {
        return Err(Error::InvalidInput("temperatures must not all be equal".into()));
    }
    let coeff = (sw * suy - su * sy) / det;
    let gamma0 = ((sy - coeff * su) / sw).max(0.0);
    let bounds = Bounds::unbounded(2).with_lower(0, 0.0);
    let fit = fit_curve(&PowerLaw { exponent }, &data, &[gamma0, coeff], &bounds, opts)?;
    if fit.value("coeff") < 0.0 {
        return Ok(fit.flag("linewidth decreases with temperature"));
    }
    Ok(fit)
}
