//! Count-rate saturation fits: `R(P) = R_eff·P/(P_eff+P) + α·P + β`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::engine::{fit_curve, Bounds, FitData, FitOptions};
use super::models::Saturation;
use super::FitResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub power_mw: f64,
    pub rate_cps: f64,
    pub sigma_cps: f64,
}

/// Excitation and collection efficiencies used to turn the fitted
/// `P_eff`, `R_eff` into `P_SAT`, `R_INF`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaturationConfig {
    pub eta_ex: f64,
    pub eta_col: f64,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        Self { eta_ex: 1.0, eta_col: 1.0 }
    }
}

impl SaturationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_ex > 0.0 && self.eta_ex <= 1.0 && self.eta_col > 0.0 && self.eta_col <= 1.0) {
            return Err(Error::InvalidInput("efficiencies must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationModel {
    /// Emitter rate at infinite power, cps.
    pub r_inf: f64,
    /// Saturation power, mW.
    pub p_sat: f64,
    pub eta_ex: f64,
    pub eta_col: f64,
    /// Linear background, cps/mW.
    pub alpha_slope: f64,
    /// Dark counts, cps.
    pub beta_dark: f64,
}

impl SaturationModel {
    pub fn from_fit(fit: &FitResult, cfg: &SaturationConfig) -> Option<Self> {
        Some(Self {
            r_inf: fit.get("r_eff")? / cfg.eta_col,
            p_sat: fit.get("p_eff")? / cfg.eta_ex,
            eta_ex: cfg.eta_ex,
            eta_col: cfg.eta_col,
            alpha_slope: fit.get("alpha_slope")?,
            beta_dark: fit.get("beta_dark")?,
        })
    }

    pub fn eval(&self, power_mw: f64) -> f64 {
        let r_eff = self.eta_col * self.r_inf;
        let p_eff = self.eta_ex * self.p_sat;
        r_eff * power_mw / (p_eff + power_mw) + self.alpha_slope * power_mw + self.beta_dark
    }
}

/// Fits the saturation curve; the fitted parameters are the effective
/// `r_eff = η_COL·R_INF` and `p_eff = η_EX·P_SAT`.
///
/// All four parameters are constrained to be non-negative. When the data
/// never leaves the linear regime (`max P < 0.2·p_eff`) the result is
/// flagged. Data without a saturating component is refitted as
/// background only (`r_eff = 0`, `p_eff` held), with a diagnosis.
pub fn fit_saturation(points: &[SaturationPoint], cfg: &SaturationConfig, opts: &FitOptions) -> Result<FitResult> {
    cfg.validate()?;
    if points.len() < 5 {
        return Err(Error::InvalidInput(format!("saturation fit needs at least 5 powers, got {}", points.len())));
    }
    if points.iter().any(|p| !(p.power_mw >= 0.0 && p.rate_cps.is_finite() && p.sigma_cps > 0.0)) {
        return Err(Error::InvalidInput("powers must be non-negative and sigmas positive".into()));
    }
    let data = FitData::new(
        points.iter().map(|p| p.power_mw).collect(),
        points.iter().map(|p| p.rate_cps).collect(),
        points.iter().map(|p| p.sigma_cps).collect(),
    )?;
    let pmax = data.x.iter().copied().fold(0.0, f64::max);
    if pmax <= 0.0 {
        return Err(Error::InvalidInput("all powers are zero".into()));
    }
    let start = grid_init(&data, pmax);
    let bounds =
        Bounds::unbounded(4).with_lower(0, 0.0).with_lower(1, 1e-12 * pmax).with_lower(2, 0.0).with_lower(3, 0.0);
    let fit = fit_curve(&Saturation, &data, &start, &bounds, &FitOptions { allow_singular: true, ..*opts })?;
    let (r_eff, s_r) = (fit.value("r_eff"), fit.sigma("r_eff").unwrap_or(0.0));
    // A singular fit means the saturating term is indistinguishable from the
    // background (p_eff → 0 mimics β, p_eff → ∞ mimics α).
    if fit.diagnosis.is_some() || r_eff <= s_r.max(0.0) {
        let p_hold = fit.value("p_eff");
        let held = bounds.clone().with_fixed(0).with_fixed(1);
        let bg = fit_curve(
            &Saturation,
            &data,
            &[0.0, p_hold, fit.value("alpha_slope"), fit.value("beta_dark")],
            &held,
            opts,
        )?;
        return Ok(FitResult {
            diagnosis: Some("no saturating component: background only, P_SAT unidentifiable".into()),
            ..bg
        });
    }
    let p_eff = fit.value("p_eff");
    if pmax < 0.2 * p_eff {
        return Ok(fit.flag(format!("linear regime: max power {pmax} mW is below 0.2·P_eff = {} mW", 0.2 * p_eff)));
    }
    Ok(fit)
}

/// For a log grid of `p_eff`, the remaining parameters enter linearly; the
/// best non-negative grid point seeds the nonlinear fit.
fn grid_init(data: &FitData, pmax: f64) -> [f64; 4] {
    let pmin = data.x.iter().copied().filter(|&p| p > 0.0).fold(pmax, f64::min);
    let (lo, hi) = ((pmin / 10.0).ln(), (pmax * 10.0).ln());
    let mut best = (f64::INFINITY, [0.0, pmax, 0.0, 0.0]);
    for k in 0..=60 {
        let pe = (lo + (hi - lo) * k as f64 / 60.0).exp();
        let basis = |x: f64| Vector3::new(x / (pe + x), x, 1.0);
        let mut a = Matrix3::zeros();
        let mut b = Vector3::zeros();
        for ((&x, &y), &s) in data.x.iter().zip(&data.y).zip(&data.sigma) {
            let v = basis(x) / s;
            a += v * v.transpose();
            b += v * (y / s);
        }
        let Some(sol) = a.try_inverse().map(|inv| inv * b) else { continue };
        let c = [sol[0].max(0.0), pe, sol[1].max(0.0), sol[2].max(0.0)];
        let chi2: f64 = data
            .x
            .iter()
            .zip(&data.y)
            .zip(&data.sigma)
            .map(|((&x, &y), &s)| ((y - (c[0] * x / (pe + x) + c[2] * x + c[3])) / s).powi(2))
            .sum();
        if chi2 < best.0 {
            best = (chi2, c);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(m: &SaturationModel, powers: &[f64]) -> Vec<SaturationPoint> {
        powers
            .iter()
            .map(|&p| {
                let r = m.eval(p);
                SaturationPoint { power_mw: p, rate_cps: r, sigma_cps: r.sqrt().max(1.0) }
            })
            .collect()
    }

    #[test]
    fn noise_free_recovery() {
        let m = SaturationModel {
            r_inf: 1.9e6,
            p_sat: 0.425,
            eta_ex: 1.0,
            eta_col: 1.0,
            alpha_slope: 2e4,
            beta_dark: 500.0,
        };
        let pts = points(&m, &[0.05, 0.1, 0.2, 0.4, 0.8, 1.2, 1.6, 2.0]);
        let fit = fit_saturation(&pts, &SaturationConfig::default(), &FitOptions::default()).unwrap();
        assert!(fit.converged, "{:?}", fit.diagnosis);
        let got = SaturationModel::from_fit(&fit, &SaturationConfig::default()).unwrap();
        assert!((got.r_inf / m.r_inf - 1.0).abs() < 1e-6);
        assert!((got.p_sat / m.p_sat - 1.0).abs() < 1e-6);
    }

    #[test]
    fn linear_regime_is_flagged() {
        let m =
            SaturationModel { r_inf: 1e6, p_sat: 10.0, eta_ex: 1.0, eta_col: 1.0, alpha_slope: 0.0, beta_dark: 100.0 };
        let pts = points(&m, &[0.1, 0.2, 0.4, 0.6, 0.8, 1.0]);
        let fit = fit_saturation(&pts, &SaturationConfig::default(), &FitOptions::default()).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn too_few_points() {
        let m = SaturationModel { r_inf: 1e6, p_sat: 1.0, eta_ex: 1.0, eta_col: 1.0, alpha_slope: 0.0, beta_dark: 0.0 };
        let pts = points(&m, &[0.1, 0.2, 0.4, 0.8]);
        assert!(fit_saturation(&pts, &SaturationConfig::default(), &FitOptions::default()).is_err());
    }
}
