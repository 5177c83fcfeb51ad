//! Kinetic Monte Carlo photon streams.
//!
//! Trajectories of the three-level system are generated with the Gillespie
//! method: exponential dwell times per state, a photon at every radiative
//! e→g jump. Timestamps are quantized to 1 ps at emission.

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{self, ThreeLevelRates};
use crate::rng::derive_rng;

pub const PS_PER_NS: f64 = 1000.0;

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhotonRecord {
    /// Picoseconds since the start of the acquisition.
    pub timestamp: u64,
    pub channel: u8,
}

/// Time-ordered detection events over an acquisition of known length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagStream {
    pub duration_ps: u64,
    /// Channels the stream carries, including ones without events.
    pub channels: Vec<u8>,
    pub records: Vec<PhotonRecord>,
}

impl TagStream {
    pub fn new(duration_ps: u64, channels: Vec<u8>, mut records: Vec<PhotonRecord>) -> Self {
        records.sort_unstable();
        let mut channels = channels;
        channels.extend(records.iter().map(|r| r.channel));
        channels.sort_unstable();
        channels.dedup();
        Self { duration_ps, channels, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn timestamps(&self, channel: u8) -> Vec<u64> {
        self.records.iter().filter(|r| r.channel == channel).map(|r| r.timestamp).collect()
    }

    pub fn count(&self, channel: u8) -> usize {
        self.records.iter().filter(|r| r.channel == channel).count()
    }

    pub fn is_time_ordered(&self) -> bool {
        self.records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp)
    }

    pub fn duration_ns(&self) -> f64 {
        self.duration_ps as f64 / PS_PER_NS
    }

    /// Relabels every event onto `channel`.
    pub fn relabel(mut self, channel: u8) -> Self {
        for r in &mut self.records {
            r.channel = channel;
        }
        self.channels = vec![channel];
        self
    }

    /// Merges two streams over the same acquisition.
    pub fn merge(&self, other: &TagStream) -> TagStream {
        let mut records = self.records.clone();
        records.extend_from_slice(&other.records);
        let mut channels = self.channels.clone();
        channels.extend_from_slice(&other.channels);
        TagStream::new(self.duration_ps.max(other.duration_ps), channels, records)
    }
}

/// Detector and background model applied to an ideal photon stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorModel {
    /// Detection probability per photon.
    pub efficiency: f64,
    /// Non-paralyzable dead time, ps.
    pub dead_time_ps: u64,
    /// Dark counts, 1/ns.
    pub dark_rate: f64,
    /// Gaussian timing jitter, ps.
    pub jitter_sigma_ps: f64,
    /// Uncorrelated background counts, 1/ns.
    pub background_rate: f64,
    /// Extra background per mW of pump, 1/(ns·mW). Applied by the pipeline.
    pub background_per_mw: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dead_time_ps: 0,
            dark_rate: 0.0,
            jitter_sigma_ps: 0.0,
            background_rate: 0.0,
            background_per_mw: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidInput(format!("efficiency must be in [0,1], got {}", self.efficiency)));
        }
        for (name, v) in [
            ("dark_rate", self.dark_rate),
            ("jitter_sigma_ps", self.jitter_sigma_ps),
            ("background_rate", self.background_rate),
            ("background_per_mw", self.background_per_mw),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    /// The model with its power-proportional background folded in.
    pub fn at_power(&self, power_mw: f64) -> Self {
        Self { background_rate: self.background_rate + self.background_per_mw * power_mw, ..self.clone() }
    }
}

/// Rectangular excitation pulses starting at multiples of `period_ns`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    pub period_ns: f64,
    pub pulse_width_ns: f64,
}

impl Default for PulseConfig {
    /// 40 MHz repetition, 1 ns pulses.
    fn default() -> Self {
        Self { period_ns: 25.0, pulse_width_ns: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub duration_ns: f64,
    pub seed: u64,
    /// `None` for continuous-wave excitation. When pulsed, `gamma_ge` is the
    /// excitation rate during a pulse and zero between pulses.
    #[serde(default)]
    pub pulsed: Option<PulseConfig>,
    /// Number of independently seeded segments (run in parallel). The output
    /// depends on this number but not on the thread count.
    #[serde(default = "default_segments")]
    pub segments: usize,
}

fn default_segments() -> usize {
    1
}

impl SimConfig {
    pub fn cw(duration_ns: f64, seed: u64) -> Self {
        Self { duration_ns, seed, pulsed: None, segments: 1 }
    }

    pub fn pulsed(duration_ns: f64, seed: u64, pulse: PulseConfig) -> Self {
        Self { duration_ns, seed, pulsed: Some(pulse), segments: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_ns.is_finite() && self.duration_ns > 0.0) {
            return Err(Error::InvalidInput(format!("duration must be positive, got {} ns", self.duration_ns)));
        }
        if self.segments == 0 {
            return Err(Error::InvalidInput("segments must be at least 1".into()));
        }
        if let Some(p) = self.pulsed {
            if !(p.period_ns > 0.0 && p.pulse_width_ns > 0.0 && p.pulse_width_ns < p.period_ns) {
                return Err(Error::InvalidInput(format!(
                    "pulse width {} ns must be positive and shorter than the period {} ns",
                    p.pulse_width_ns, p.period_ns
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum State {
    Ground,
    Excited,
    Metastable,
}

fn exp_sample(rng: &mut ChaCha12Rng, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Time at which `on_time` ns of pump exposure has accumulated, starting at
/// `t`, when the pump is only on during `[k·period, k·period + width)`.
fn gated_wait(t: f64, on_time: f64, pulse: &PulseConfig) -> f64 {
    let (period, width) = (pulse.period_ns, pulse.pulse_width_ns);
    let phase = t.rem_euclid(period);
    let mut start = t - phase;
    let mut remaining = on_time;
    if phase < width {
        let avail = width - phase;
        if remaining < avail {
            return t + remaining;
        }
        remaining -= avail;
    }
    start += period;
    let skipped = (remaining / width).floor();
    start += skipped * period;
    remaining -= skipped * width;
    start + remaining.min(width)
}

fn to_ps(t_ns: f64) -> u64 {
    (t_ns * PS_PER_NS).round() as u64
}

/// Photons emitted in `[start, end)` ns by one trajectory that begins in
/// |g⟩ at `start − burn_in`.
fn simulate_segment(
    rates: &ThreeLevelRates,
    pulse: Option<&PulseConfig>,
    start: f64,
    end: f64,
    burn_in: f64,
    rng: &mut ChaCha12Rng,
) -> Vec<PhotonRecord> {
    let (a, b, c, d) = (rates.gamma_ge, rates.gamma_eg, rates.gamma_em, rates.gamma_mg);
    let decay = b + c;
    let mut out = Vec::new();
    let mut t = start - burn_in;
    let mut state = State::Ground;
    loop {
        match state {
            State::Ground => {
                if a == 0.0 {
                    break;
                }
                let needed = exp_sample(rng, a);
                t = match pulse {
                    Some(p) => gated_wait(t, needed, p),
                    None => t + needed,
                };
                state = State::Excited;
            }
            State::Excited => {
                t += exp_sample(rng, decay);
                if t >= end {
                    break;
                }
                let u: f64 = rng.random();
                if u * decay < b {
                    if t >= start {
                        out.push(PhotonRecord { timestamp: to_ps(t), channel: 0 });
                    }
                    state = State::Ground;
                } else {
                    state = State::Metastable;
                }
            }
            State::Metastable => {
                if d == 0.0 {
                    break;
                }
                t += exp_sample(rng, d);
                state = State::Ground;
            }
        }
        if t >= end {
            break;
        }
    }
    // Rounding can push the last photon onto the end boundary.
    let end_ps = to_ps(end);
    out.retain(|r| r.timestamp < end_ps);
    out
}

/// Upper bound on the slowest relaxation time, ns. Pulsed excitation is
/// slower on average than the on-pulse rate suggests, so the pump-free
/// modes and one period are included.
fn burn_in_scale(rates: &ThreeLevelRates, pulse: Option<&PulseConfig>) -> f64 {
    let mut scale = 1.0 / (rates.gamma_eg + rates.gamma_em);
    if rates.gamma_em > 0.0 {
        scale = scale.max(1.0 / rates.gamma_mg).max(kinetics::relaxation_time(rates));
    }
    match pulse {
        Some(p) => scale + p.period_ns,
        None => scale + 1.0 / rates.gamma_ge,
    }
}

/// Simulates the photon stream of one emitter on channel 0.
///
/// Every segment starts in |g⟩ one burn-in interval (20 relaxation times)
/// before its window, so the output is stationary from t = 0. Pulses start
/// at multiples of the period in absolute time.
pub fn simulate_photon_stream(rates: &ThreeLevelRates, cfg: &SimConfig) -> Result<TagStream> {
    rates.validate()?;
    cfg.validate()?;
    let duration_ps = to_ps(cfg.duration_ns);
    if rates.gamma_ge == 0.0 {
        warn!("gamma_ge = 0: the emitter is never excited, the stream is empty");
        return Ok(TagStream::new(duration_ps, vec![0], Vec::new()));
    }
    if rates.gamma_em > 0.0 && rates.gamma_mg == 0.0 {
        return Err(Error::AbsorbingState(crate::error::Level::Metastable));
    }
    let burn_in = 20.0 * burn_in_scale(rates, cfg.pulsed.as_ref());
    let seg_len = cfg.duration_ns / cfg.segments as f64;
    let parts: Vec<Vec<PhotonRecord>> = (0..cfg.segments)
        .into_par_iter()
        .map(|k| {
            let mut rng = derive_rng(cfg.seed, "simulate", k as u64);
            let start = k as f64 * seg_len;
            let end = if k + 1 == cfg.segments { cfg.duration_ns } else { (k + 1) as f64 * seg_len };
            simulate_segment(rates, cfg.pulsed.as_ref(), start, end, burn_in, &mut rng)
        })
        .collect();
    let records: Vec<PhotonRecord> = parts.into_iter().flatten().collect();
    Ok(TagStream { duration_ps, channels: vec![0], records })
}

/// Homogeneous Poisson events (uncorrelated light) on one channel.
pub fn simulate_poisson_stream(rate_per_ns: f64, duration_ns: f64, channel: u8, seed: u64) -> Result<TagStream> {
    if !(rate_per_ns.is_finite() && rate_per_ns >= 0.0) || !(duration_ns > 0.0) {
        return Err(Error::InvalidInput("Poisson stream needs rate >= 0 and duration > 0".into()));
    }
    let mut rng = derive_rng(seed, "poisson", u64::from(channel));
    let duration_ps = to_ps(duration_ns);
    let records = poisson_events(&mut rng, rate_per_ns, duration_ps)
        .into_iter()
        .map(|timestamp| PhotonRecord { timestamp, channel })
        .collect();
    Ok(TagStream { duration_ps, channels: vec![channel], records })
}

fn poisson_events(rng: &mut ChaCha12Rng, rate_per_ns: f64, duration_ps: u64) -> Vec<u64> {
    let mut out = Vec::new();
    if rate_per_ns <= 0.0 {
        return out;
    }
    let end = duration_ps as f64 / PS_PER_NS;
    let mut t = exp_sample(rng, rate_per_ns);
    while t < end {
        let ps = to_ps(t);
        if ps < duration_ps {
            out.push(ps);
        }
        t += exp_sample(rng, rate_per_ns);
    }
    out
}

/// Applies detection efficiency, dark/background counts, timing jitter and
/// non-paralyzable dead time, independently per channel.
///
/// Dark and background events are merged before jitter and dead time, so
/// the dead-time guarantee holds for every output event.
pub fn apply_detector(stream: &TagStream, det: &DetectorModel, seed: u64) -> Result<TagStream> {
    det.validate()?;
    let mut records = Vec::with_capacity(stream.records.len());
    for &ch in &stream.channels {
        let mut rng = derive_rng(seed, "detector", u64::from(ch));
        let mut times: Vec<u64> = stream
            .records
            .iter()
            .filter(|r| r.channel == ch)
            .filter(|_| det.efficiency >= 1.0 || rng.random::<f64>() < det.efficiency)
            .map(|r| r.timestamp)
            .collect();
        times.extend(poisson_events(&mut rng, det.dark_rate + det.background_rate, stream.duration_ps));
        if det.jitter_sigma_ps > 0.0 {
            let last = stream.duration_ps.saturating_sub(1) as f64;
            for t in &mut times {
                let z: f64 = StandardNormal.sample(&mut rng);
                *t = (*t as f64 + det.jitter_sigma_ps * z).round().clamp(0.0, last) as u64;
            }
        }
        times.sort_unstable();
        let mut last_kept: Option<u64> = None;
        for t in times {
            if let Some(prev) = last_kept {
                if det.dead_time_ps > 0 && t - prev < det.dead_time_ps {
                    continue;
                }
            }
            last_kept = Some(t);
            records.push(PhotonRecord { timestamp: t, channel: ch });
        }
    }
    Ok(TagStream::new(stream.duration_ps, stream.channels.clone(), records))
}

/// 50/50 beamsplitter: routes each event to channel 0 or 1 at random.
pub fn split_hbt(stream: &TagStream, seed: u64) -> (TagStream, TagStream) {
    let mut rng = derive_rng(seed, "hbt", 0);
    let (mut ch0, mut ch1) = (Vec::new(), Vec::new());
    for r in &stream.records {
        if rng.random::<bool>() {
            ch1.push(PhotonRecord { timestamp: r.timestamp, channel: 1 });
        } else {
            ch0.push(PhotonRecord { timestamp: r.timestamp, channel: 0 });
        }
    }
    (
        TagStream { duration_ps: stream.duration_ps, channels: vec![0], records: ch0 },
        TagStream { duration_ps: stream.duration_ps, channels: vec![1], records: ch1 },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gated_wait_inside_and_across_pulses() {
        let p = PulseConfig { period_ns: 25.0, pulse_width_ns: 1.0 };
        assert_eq!(gated_wait(0.2, 0.5, &p), 0.7);
        assert!((gated_wait(0.5, 0.7, &p) - 25.2).abs() < 1e-12);
        assert!((gated_wait(3.0, 2.5, &p) - 75.5).abs() < 1e-12);
        assert!((gated_wait(-10.0, 0.3, &p) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn no_pump_gives_empty_stream() {
        let r = ThreeLevelRates::new(0.0, 0.3, 0.01, 0.002).unwrap();
        let s = simulate_photon_stream(&r, &SimConfig::cw(1e5, 1)).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.channels, vec![0]);
    }

    #[test]
    fn same_seed_same_stream() {
        let r = ThreeLevelRates::new(0.1, 0.3, 0.01, 0.002).unwrap();
        let mut cfg = SimConfig::cw(1e6, 42);
        cfg.segments = 4;
        let a = simulate_photon_stream(&r, &cfg).unwrap();
        let b = simulate_photon_stream(&r, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.is_time_ordered());
        cfg.seed = 43;
        assert_ne!(a, simulate_photon_stream(&r, &cfg).unwrap());
    }

    #[test]
    fn pulsed_photons_follow_pulses() {
        let r = ThreeLevelRates::new(2.0, 1.0 / 3.45, 0.0, 0.0).unwrap();
        let cfg = SimConfig::pulsed(1e5, 5, PulseConfig::default());
        let s = simulate_photon_stream(&r, &cfg).unwrap();
        assert!(!s.is_empty());
        // At most one photon per pulse for a single two-level emitter with a
        // lifetime much shorter than the period.
        assert!(s.len() <= 4000);
    }

    #[test]
    fn ideal_detector_is_identity() {
        let r = ThreeLevelRates::new(0.1, 0.3, 0.01, 0.002).unwrap();
        let s = simulate_photon_stream(&r, &SimConfig::cw(1e5, 3)).unwrap();
        assert_eq!(apply_detector(&s, &DetectorModel::ideal(), 9).unwrap(), s);
    }

    #[test]
    fn dead_time_is_enforced() {
        let s = simulate_poisson_stream(0.05, 1e6, 0, 1).unwrap();
        let det =
            DetectorModel { dead_time_ps: 50_000, jitter_sigma_ps: 300.0, dark_rate: 0.01, ..DetectorModel::ideal() };
        let out = apply_detector(&s, &det, 2).unwrap();
        let t = out.timestamps(0);
        assert!(t.windows(2).all(|w| w[1] - w[0] >= 50_000));
    }

    #[test]
    fn split_of_empty_stream() {
        let s = TagStream::new(1000, vec![0], vec![]);
        let (a, b) = split_hbt(&s, 1);
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn invalid_configs() {
        let r = ThreeLevelRates::new(0.1, 0.3, 0.01, 0.002).unwrap();
        assert!(simulate_photon_stream(&r, &SimConfig::cw(0.0, 1)).is_err());
        let bad = PulseConfig { period_ns: 1.0, pulse_width_ns: 2.0 };
        assert!(simulate_photon_stream(&r, &SimConfig::pulsed(10.0, 1, bad)).is_err());
        let det = DetectorModel { efficiency: 1.5, ..DetectorModel::ideal() };
        assert!(apply_detector(&TagStream::new(10, vec![0], vec![]), &det, 1).is_err());
    }
}
