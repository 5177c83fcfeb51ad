//! Coincidence and decay histograms from time-tag streams.
//!
//! Bins are half-open `[lo, hi)`: an event exactly on an edge belongs to the
//! bin on its right.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{self, ThreeLevelRates};
use crate::simulate::TagStream;

/// Events per correlation shard. Shards only change how work is split, the
/// summed histogram is identical for any shard count.
const SHARD_EVENTS: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMode {
    /// Every pair within the window.
    FullCorrelation,
    /// Only the first stop after each start (TAC style).
    StartStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    pub bin_width_ps: u64,
    /// Largest |τ| histogrammed, ps.
    pub window_ps: u64,
    pub mode: CorrelationMode,
}

impl CorrelationConfig {
    pub const DEFAULT_BIN_WIDTH_PS: u64 = 256;

    pub fn new(bin_width_ps: u64, window_ps: u64) -> Result<Self> {
        let cfg = Self { bin_width_ps, window_ps, mode: CorrelationMode::FullCorrelation };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 256 ps bins and a window of ten bunching times of `rates`.
    pub fn for_rates(rates: &ThreeLevelRates) -> Self {
        let tau2 =
            kinetics::g2_params_from_rates(rates).map(|p| p.tau2).unwrap_or_else(|_| kinetics::relaxation_time(rates));
        let window_ps = ((10.0 * tau2 * 1000.0).ceil() as u64).max(Self::DEFAULT_BIN_WIDTH_PS);
        Self { bin_width_ps: Self::DEFAULT_BIN_WIDTH_PS, window_ps, mode: CorrelationMode::FullCorrelation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_width_ps == 0 || self.bin_width_ps > self.window_ps {
            return Err(Error::InvalidInput(format!(
                "need 0 < bin_width ({} ps) <= window ({} ps)",
                self.bin_width_ps, self.window_ps
            )));
        }
        Ok(())
    }

    fn bins_per_side(&self) -> u64 {
        self.window_ps.div_ceil(self.bin_width_ps)
    }
}

/// Conversion from raw counts to a normalized histogram: `value = count / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges_ps: Vec<i64>,
    pub counts: Vec<u64>,
    pub normalization: Option<Normalization>,
}

impl Histogram {
    pub fn new(edges_ps: Vec<i64>, counts: Vec<u64>) -> Result<Self> {
        if edges_ps.len() != counts.len() + 1 || edges_ps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("histogram edges must be increasing with one more edge than bins".into()));
        }
        Ok(Self { edges_ps, counts, normalization: None })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers_ps(&self) -> Vec<f64> {
        self.edges_ps.windows(2).map(|w| 0.5 * (w[0] as f64 + w[1] as f64)).collect()
    }

    pub fn centers_ns(&self) -> Vec<f64> {
        self.centers_ps().into_iter().map(|c| c / 1000.0).collect()
    }

    fn scale(&self) -> f64 {
        self.normalization.map_or(1.0, |n| n.scale)
    }

    /// Counts divided by the normalization scale (raw counts if none).
    pub fn normalized(&self) -> Vec<f64> {
        let s = self.scale();
        self.counts.iter().map(|&c| c as f64 / s).collect()
    }

    /// Poisson standard deviation of each normalized bin; empty bins are
    /// given the one-count error.
    pub fn sigmas(&self) -> Vec<f64> {
        let s = self.scale();
        self.counts.iter().map(|&c| (c.max(1) as f64).sqrt() / s).collect()
    }

    /// Mirror image about τ = 0.
    pub fn mirrored(&self) -> Histogram {
        let edges_ps = self.edges_ps.iter().rev().map(|e| -e).collect();
        let counts = self.counts.iter().rev().copied().collect();
        Histogram { edges_ps, counts, normalization: self.normalization }
    }

    /// CSV with header `tau_ps,count,normalized,sigma`; `tau_ps` is the bin
    /// center.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau_ps,count,normalized,sigma")?;
        let s = self.scale();
        for ((c, n), center) in self.counts.iter().zip(self.normalized()).zip(self.centers_ps()) {
            let sigma = (*c as f64).sqrt() / s;
            writeln!(w, "{center},{c},{n},{sigma}")?;
        }
        Ok(())
    }
}

fn check_sorted(ts: &[u64], ch: u8) -> Result<()> {
    if ts.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(format!("channel {ch} is not time-ordered")));
    }
    Ok(())
}

fn full_correlation_counts(ch0: &[u64], ch1: &[u64], cfg: &CorrelationConfig) -> Vec<u64> {
    let nside = cfg.bins_per_side();
    let w = (nside * cfg.bin_width_ps) as i64;
    let bw = cfg.bin_width_ps as i64;
    let nbins = (2 * nside) as usize;
    ch0.par_chunks(SHARD_EVENTS)
        .map(|chunk| {
            let mut counts = vec![0u64; nbins];
            let Some(&first) = chunk.first() else { return counts };
            let mut lo = ch1.partition_point(|&t| (t as i64) < first as i64 - w);
            for &t0 in chunk {
                let t0 = t0 as i64;
                while lo < ch1.len() && (ch1[lo] as i64) < t0 - w {
                    lo += 1;
                }
                for &t1 in &ch1[lo..] {
                    let tau = t1 as i64 - t0;
                    if tau >= w {
                        break;
                    }
                    counts[((tau + w) / bw) as usize] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; nbins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

fn start_stop_counts(ch0: &[u64], ch1: &[u64], cfg: &CorrelationConfig) -> Vec<u64> {
    let nside = cfg.bins_per_side();
    let w = (nside * cfg.bin_width_ps) as i64;
    let bw = cfg.bin_width_ps as i64;
    let mut counts = vec![0u64; (2 * nside) as usize];
    // Start on ch0, stop on the next ch1 event (τ >= 0).
    let mut j = 0;
    for &t0 in ch0 {
        while j < ch1.len() && ch1[j] < t0 {
            j += 1;
        }
        if let Some(&t1) = ch1.get(j) {
            let tau = t1 as i64 - t0 as i64;
            if tau < w {
                counts[((tau + w) / bw) as usize] += 1;
            }
        }
    }
    // Start on ch1, stop on the next strictly later ch0 event (τ < 0).
    let mut i = 0;
    for &t1 in ch1 {
        while i < ch0.len() && ch0[i] <= t1 {
            i += 1;
        }
        if let Some(&t0) = ch0.get(i) {
            let tau = t1 as i64 - t0 as i64;
            if tau >= -w {
                counts[((tau + w) / bw) as usize] += 1;
            }
        }
    }
    counts
}

/// Normalized cross-correlation histogram of two channels.
///
/// Counts pairs with `τ = t₁ − t₀` in `[−W, W)`, where `W` is the window
/// rounded up to whole bins, and divides by `N₀·N₁·Δ/T` so that
/// uncorrelated light gives 1. `T` is `duration_ps`.
pub fn g2_histogram(ch0: &[u64], ch1: &[u64], duration_ps: u64, cfg: &CorrelationConfig) -> Result<Histogram> {
    cfg.validate()?;
    if ch0.is_empty() {
        return Err(Error::EmptyChannel(0));
    }
    if ch1.is_empty() {
        return Err(Error::EmptyChannel(1));
    }
    if cfg.window_ps > duration_ps {
        return Err(Error::WindowTooLong { window_ps: cfg.window_ps, duration_ps });
    }
    check_sorted(ch0, 0)?;
    check_sorted(ch1, 1)?;
    let counts = match cfg.mode {
        CorrelationMode::FullCorrelation => full_correlation_counts(ch0, ch1, cfg),
        CorrelationMode::StartStop => start_stop_counts(ch0, ch1, cfg),
    };
    let nside = cfg.bins_per_side() as i64;
    let bw = cfg.bin_width_ps as i64;
    let edges_ps = (-nside..=nside).map(|k| k * bw).collect();
    let (n0, n1) = (ch0.len() as f64, ch1.len() as f64);
    let scale = n0 * n1 * cfg.bin_width_ps as f64 / duration_ps as f64;
    let sigma = scale * (1.0 / n0 + 1.0 / n1).sqrt();
    Ok(Histogram { edges_ps, counts, normalization: Some(Normalization { scale, sigma }) })
}

/// [`g2_histogram`] between two single-channel streams.
pub fn g2_from_streams(a: &TagStream, b: &TagStream, cfg: &CorrelationConfig) -> Result<Histogram> {
    let ta: Vec<u64> = a.records.iter().map(|r| r.timestamp).collect();
    let tb: Vec<u64> = b.records.iter().map(|r| r.timestamp).collect();
    g2_histogram(&ta, &tb, a.duration_ps.min(b.duration_ps), cfg)
}

/// Histogram of arrival times folded modulo the pulse period.
///
/// Bins start at the pulse onset (phase 0); the last bin is truncated at
/// the period when it is not a multiple of the bin width.
pub fn decay_histogram(timestamps: &[u64], pulse_period_ns: f64, cfg: &CorrelationConfig) -> Result<Histogram> {
    if !(pulse_period_ns.is_finite() && pulse_period_ns > 0.0) {
        return Err(Error::InvalidInput(format!("pulse period must be positive, got {pulse_period_ns} ns")));
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyChannel(0));
    }
    if cfg.bin_width_ps == 0 {
        return Err(Error::InvalidInput("bin width must be positive".into()));
    }
    let period = (pulse_period_ns * 1000.0).round() as u64;
    let nbins = period.div_ceil(cfg.bin_width_ps) as usize;
    let mut counts = vec![0u64; nbins];
    for &t in timestamps {
        counts[((t % period) / cfg.bin_width_ps) as usize] += 1;
    }
    let mut edges_ps: Vec<i64> = (0..nbins as i64).map(|k| k * cfg.bin_width_ps as i64).collect();
    edges_ps.push(period as i64);
    Ok(Histogram { edges_ps, counts, normalization: None })
}
