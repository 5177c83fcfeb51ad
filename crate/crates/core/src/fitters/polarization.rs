//! Emission polarization: `I(θ) = offset + amplitude·sin²(θ + φ)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::engine::{fit_curve, Bounds, FitData, FitOptions};
use super::models::Polarization;
use super::FitResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationPoint {
    pub theta_deg: f64,
    pub rate_cps: f64,
    pub sigma_cps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationFit {
    /// Dipole phase in `[0, 180)` degrees.
    pub phi_deg: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// `(I_max − I_min)/(I_max + I_min)` of the fitted curve.
    pub visibility: f64,
    /// False when the data carry no angular modulation; `phi_deg` is then 0.
    pub identifiable: bool,
    pub fit: FitResult,
}

/// Fits the sin² law. Needs at least six angles covering half a turn.
pub fn fit_polarization(points: &[PolarizationPoint], opts: &FitOptions) -> Result<PolarizationFit> {
    if points.len() < 6 {
        return Err(Error::InvalidInput(format!("polarization fit needs at least 6 angles, got {}", points.len())));
    }
    let data = FitData::new(
        points.iter().map(|p| p.theta_deg).collect(),
        points.iter().map(|p| p.rate_cps).collect(),
        points.iter().map(|p| p.sigma_cps).collect(),
    )?;
    let lo = data.x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let coverage = (hi - lo) * points.len() as f64 / (points.len() - 1) as f64;
    if coverage < 180.0 - 1e-9 {
        return Err(Error::InvalidInput(format!("angles cover {coverage:.1} degrees, need 180")));
    }

    // I = c0 + c1·cos2θ + c2·sin2θ with c1 = −(A/2)cos2φ, c2 = (A/2)sin2φ.
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for ((&x, &y), &s) in data.x.iter().zip(&data.y).zip(&data.sigma) {
        let t = (2.0 * x).to_radians();
        let v = Vector3::new(1.0, t.cos(), t.sin()) / s;
        a += v * v.transpose();
        b += v * (y / s);
    }
    let c = a
        .try_inverse()
        .map(|inv| inv * b)
        .ok_or_else(|| Error::InvalidInput("angles do not determine a sin² law".into()))?;
    let amp = 2.0 * c[1].hypot(c[2]);
    let phi = 0.5 * c[2].atan2(-c[1]).to_degrees();
    let scale = data.y.iter().map(|y| y.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let bounds = Bounds::unbounded(3).with_lower(0, 0.0);
    if amp <= 1e-9 * scale {
        let flat = bounds.with_fixed(0).with_fixed(2);
        let fit = fit_curve(&Polarization, &data, &[0.0, c[0], 0.0], &flat, opts)?;
        let offset = fit.value("offset");
        return Ok(PolarizationFit {
            phi_deg: 0.0,
            amplitude: 0.0,
            offset,
            visibility: 0.0,
            identifiable: false,
            fit: FitResult { diagnosis: Some("no angular modulation; phi unidentifiable".into()), ..fit },
        });
    }
    let fit = fit_curve(&Polarization, &data, &[amp, c[0] - 0.5 * amp, phi], &bounds, opts)?;
    let (amplitude, offset) = (fit.value("amplitude"), fit.value("offset"));
    let phi_deg = fit.value("phi").rem_euclid(180.0);
    let phi_deg = if phi_deg >= 180.0 { 0.0 } else { phi_deg };
    let identifiable = amplitude > 3.0 * fit.sigma("amplitude").unwrap_or(0.0) && amplitude > 1e-9 * scale;
    let visibility =
        if amplitude + 2.0 * offset > 0.0 { (amplitude / (amplitude + 2.0 * offset)).clamp(0.0, 1.0) } else { 0.0 };
    let fit = if identifiable { fit } else { fit.flag("modulation is not significant; phi unidentifiable") };
    Ok(PolarizationFit { phi_deg, amplitude, offset, visibility, identifiable, fit })
}
