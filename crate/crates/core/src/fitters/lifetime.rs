//! Mono-exponential fits of pulsed decay histograms.

use serde::{Deserialize, Serialize};

use super::engine::{fit_curve, Bounds, FitData, FitOptions};
use super::models::Exponential;
use super::FitResult;
use crate::correlate::Histogram;
use crate::error::{Error, Result};

/// Minimum number of tail bins clearly above the baseline.
const MIN_DECAY_BINS: usize = 10;

/// `amplitude·exp(−t/tau) + baseline`, t in ns from the first fitted bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    pub tau: f64,
    pub amplitude: f64,
    pub baseline: f64,
}

impl DecayModel {
    pub fn from_fit(fit: &FitResult) -> Option<Self> {
        Some(Self { tau: fit.get("tau")?, amplitude: fit.get("amplitude")?, baseline: fit.get("baseline")? })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (-t / self.tau).exp() + self.baseline
    }
}

/// Tail fit of a decay histogram, starting one bin after the peak.
///
/// Data without a resolvable decay (fewer than ten bins above baseline, a
/// vanishing amplitude or a lifetime beyond the fitted span) gives a result
/// with `converged = false` and a diagnosis rather than an error.
pub fn fit_lifetime(hist: &Histogram, opts: &FitOptions) -> Result<FitResult> {
    if hist.len() < MIN_DECAY_BINS + 2 {
        return Err(Error::InvalidInput(format!("decay histogram has only {} bins", hist.len())));
    }
    let centers = hist.centers_ns();
    let peak = (0..hist.len()).max_by_key(|&i| (hist.counts[i], std::cmp::Reverse(i))).expect("non-empty");
    let first = peak + 1;
    if hist.len() - first < 3 {
        return Err(Error::InvalidInput("decay peak is at the end of the histogram".into()));
    }
    let x = centers[first..].iter().map(|c| c - centers[first]).collect();
    let y: Vec<f64> = hist.counts[first..].iter().map(|&c| c as f64).collect();
    let sigma = hist.counts[first..].iter().map(|&c| (c.max(1) as f64).sqrt()).collect();
    fit_decay_points(&FitData::new(x, y, sigma)?, opts)
}

/// Fits [`DecayModel`] to `(t, counts, σ)` with `t` measured from the
/// start of the decay.
pub fn fit_decay_points(data: &FitData, opts: &FitOptions) -> Result<FitResult> {
    data.validate()?;
    if data.len() < 4 {
        return Err(Error::InvalidInput("a decay fit needs at least four points".into()));
    }
    let n = data.len();
    let tail = (n / 20).max(3);
    let base = data.y[n - tail..].iter().sum::<f64>() / tail as f64;
    let noise = 3.0 * (base.max(0.0) + 1.0).sqrt();
    let above = data.y.iter().filter(|&&y| y > base + noise).count();

    let head = data.y[0];
    let amp = (head - base).max(noise);
    let tau = data
        .x
        .iter()
        .zip(&data.y)
        .find(|(_, &y)| y - base <= amp / std::f64::consts::E)
        .map(|(&x, _)| x)
        .filter(|&x| x > 0.0)
        .unwrap_or_else(|| 0.2 * (data.x[n - 1] - data.x[0]).max(1e-9));
    let bounds = Bounds::unbounded(3).with_lower(0, 1e-9);
    let fit = fit_curve(&Exponential, data, &[tau, amp, base], &bounds, &FitOptions { allow_singular: true, ..*opts })?;
    if fit.diagnosis.is_some() {
        return Ok(fit);
    }
    let span = data.x[n - 1] - data.x[0];
    let (t, a, sa) = (fit.value("tau"), fit.value("amplitude"), fit.sigma("amplitude").unwrap_or(0.0));
    if above < MIN_DECAY_BINS {
        return Ok(fit.flag(format!("only {above} bins above the baseline; no resolvable decay")));
    }
    if a <= 3.0 * sa || t > 10.0 * span {
        return Ok(fit.flag("no exponential decay above the baseline"));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn histogram(counts: Vec<u64>, bin_ps: i64) -> Histogram {
        let edges = (0..=counts.len() as i64).map(|i| i * bin_ps).collect();
        Histogram::new(edges, counts).unwrap()
    }

    #[test]
    fn noise_free_decay() {
        let counts: Vec<u64> = (0..200)
            .map(|i| if i < 10 { 20 } else { (1e5 * (-((i - 10) as f64) * 0.1 / 3.45).exp() + 50.0).round() as u64 })
            .collect();
        let fit = fit_lifetime(&histogram(counts, 100), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.value("tau") / 3.45 - 1.0).abs() < 2e-3, "{}", fit.value("tau"));
    }

    #[test]
    fn flat_histogram_is_flagged() {
        let fit = fit_lifetime(&histogram(vec![100; 100], 100), &FitOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.diagnosis.is_some());
    }
}
