//! Bi-exponential fits of normalized g²(τ) histograms.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::engine::{fit_curve, Bounds, FitData, FitOptions};
use super::models::G2Model;
use super::FitResult;
use crate::correlate::Histogram;
use crate::error::{Error, Result};
use crate::kinetics::{G2Params, G2Sigmas};

/// A dip whose smoothed minimum stays above this is not antibunching.
const DIP_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    pub params: G2Params,
    /// Fitted long-delay level of the histogram (1 for ideal normalization).
    pub norm: f64,
    pub fit: FitResult,
}

/// Folds a normalized histogram onto `|τ|` in ns with Poisson sigmas.
pub fn g2_fit_data(hist: &Histogram) -> Result<FitData> {
    if hist.normalization.is_none() {
        return Err(Error::InvalidInput("g2 fit needs a normalized histogram".into()));
    }
    if hist.total() == 0 {
        return Err(Error::InvalidInput("histogram is empty".into()));
    }
    let x = hist.centers_ns().into_iter().map(f64::abs).collect();
    FitData::new(x, hist.normalized(), hist.sigmas())
}

pub fn fit_g2(hist: &Histogram, init: Option<G2Params>, opts: &FitOptions) -> Result<G2Fit> {
    fit_g2_points(&g2_fit_data(hist)?, init, opts)
}

/// Fits `norm·g²(τ)` to points at `x = τ` (ns; the sign is ignored).
///
/// Without `init` the start point comes from the data: the plateau from the
/// largest delays, α from the peak excess, τ₁ from the half-recovery time of
/// the dip and τ₂ from the 1/e point of the bunching excess.
pub fn fit_g2_points(data: &FitData, init: Option<G2Params>, opts: &FitOptions) -> Result<G2Fit> {
    data.validate()?;
    if data.len() < 8 {
        return Err(Error::InvalidInput(format!("{} points are too few for a g2 fit", data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&i, &j| data.x[i].abs().total_cmp(&data.x[j].abs()));
    let xs: Vec<f64> = order.iter().map(|&i| data.x[i].abs()).collect();
    let ys: Vec<f64> = order.iter().map(|&i| data.y[i]).collect();

    let tail = &ys[ys.len() - (ys.len() / 10).max(1)..];
    let plateau = median(tail).max(f64::MIN_POSITIVE);
    let smooth = moving_average(&ys, 5);
    let dip = smooth[..smooth.len().min(50)].iter().copied().fold(f64::INFINITY, f64::min) / plateau;
    if dip > DIP_THRESHOLD {
        return Err(Error::NoAntibunching { min: dip });
    }

    let start = match init {
        Some(p) => {
            p.validate()?;
            [p.tau1, p.tau2, p.alpha_bunching, plateau]
        }
        None => auto_init(&xs, &smooth, plateau),
    };
    let bounds = Bounds::unbounded(4).with_lower(0, 1e-9).with_lower(1, 1e-9).with_lower(2, 0.0).with_lower(3, 1e-12);
    let fit = fit_curve(&G2Model, data, &start, &bounds, &FitOptions { allow_singular: true, ..*opts })?;
    let (t1, t2, a) = (fit.value("tau1"), fit.value("tau2"), fit.value("alpha_bunching"));
    let sigma = G2Sigmas { tau1: fit.sigmas[0], tau2: fit.sigmas[1], alpha_bunching: fit.sigmas[2] };
    let params = G2Params { tau1: t1, tau2: t2, alpha_bunching: a, sigma };
    let norm = fit.value("norm");
    let fit = if params.validate().is_err() && fit.diagnosis.is_none() {
        fit.flag(format!("fitted parameters violate tau2 > tau1 > 0 (tau1 = {t1}, tau2 = {t2})"))
    } else {
        fit
    };
    Ok(G2Fit { params, norm, fit })
}

fn auto_init(xs: &[f64], smooth: &[f64], plateau: f64) -> [f64; 4] {
    let xmax = xs[xs.len() - 1];
    // Coarse groups along τ for the bunching envelope.
    let groups = 400usize;
    let width = (xmax / groups as f64).max(f64::MIN_POSITIVE);
    let mut sum = vec![0.0; groups + 1];
    let mut n = vec![0usize; groups + 1];
    let mut centre = vec![0.0; groups + 1];
    for (x, y) in xs.iter().zip(smooth) {
        let g = ((x / width) as usize).min(groups);
        sum[g] += y;
        centre[g] += x;
        n[g] += 1;
    }
    let coarse: Vec<(f64, f64)> =
        (0..=groups).filter(|&g| n[g] > 0).map(|g| (centre[g] / n[g] as f64, sum[g] / n[g] as f64 / plateau)).collect();
    let (ipeak, &(xpeak, peak)) =
        coarse.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).expect("non-empty data");
    let alpha = (peak - 1.0).max(0.01);

    // g² ≈ (1+α)(1 − e^{−τ/τ₁}) for τ ≪ τ₂, half of which is reached at τ₁·ln 2.
    let half = 0.5 * (1.0 + alpha) * plateau;
    let tau1 = xs
        .iter()
        .zip(smooth)
        .find(|(_, &y)| y >= half)
        .map(|(&x, _)| x / LN_2)
        .filter(|&t| t > 0.0)
        .unwrap_or_else(|| xs.iter().copied().find(|&x| x > 0.0).unwrap_or(1.0));

    let target = alpha / std::f64::consts::E;
    let tau2 = coarse[ipeak..]
        .iter()
        .find(|(_, y)| y - 1.0 <= target)
        .map(|&(x, _)| x)
        .unwrap_or(xmax / 5.0)
        .max(xpeak)
        .max(3.0 * tau1);
    [tau1, tau2, alpha, plateau]
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len().is_multiple_of(2) {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

/// Centered moving average, shrinking at the ends.
fn moving_average(v: &[f64], w: usize) -> Vec<f64> {
    let h = w / 2;
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
