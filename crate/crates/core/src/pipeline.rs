//! Run configuration and the command pipelines behind the `spekit` binary.
//!
//! Every command reads a [`RunConfig`], works on measured input files when
//! `input` is set and on seeded synthetic data otherwise, and writes a JSON
//! report plus CSV plot data into the output directory. Outputs depend only
//! on the configuration (including the seed), never on the thread count.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::correlate::{self, CorrelationConfig, CorrelationMode, Histogram};
use crate::error::{Error, Result};
use crate::fitters::{
    self, FitOptions, FitResult, G2Fit, LinewidthPoint, LinewidthSeries, PeakShape, PolarizationFit, PolarizationPoint,
    SaturationConfig, SaturationModel, SaturationPoint,
};
use crate::io;
use crate::kinetics::{self, G2Params, LinearExtrapolation, PumpModel, RatePoint, RateSeries, ThreeLevelRates};
use crate::rng::derive_rng;
use crate::simulate::{self, DetectorModel, PulseConfig, SimConfig, TagStream};
use crate::spectra::{self, PeakModel, SpectralDecomposition, Spectrum, DEFAULT_EXCLUSION_NM};

/// The eight pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    G2,
    Lifetime,
    Saturation,
    Polarization,
    Spectrum,
    Linewidth,
    ReproduceFig2,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Simulate,
        Command::G2,
        Command::Lifetime,
        Command::Saturation,
        Command::Polarization,
        Command::Spectrum,
        Command::Linewidth,
        Command::ReproduceFig2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::G2 => "g2",
            Command::Lifetime => "lifetime",
            Command::Saturation => "saturation",
            Command::Polarization => "polarization",
            Command::Spectrum => "spectrum",
            Command::Linewidth => "linewidth",
            Command::ReproduceFig2 => "reproduce-fig2",
        }
    }
}

/// Pump-independent rates of the emitter, 1/ns. The default is an
/// E₁-like emitter with zero-power τ₁ = 3.33 ns and τ₂ = 675 ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitterRates {
    pub gamma_eg: f64,
    pub gamma_em: f64,
    pub gamma_mg: f64,
}

impl Default for EmitterRates {
    fn default() -> Self {
        Self { gamma_eg: 1.0 / 3.33 - 0.01, gamma_em: 0.01, gamma_mg: 1.0 / 675.0 }
    }
}

impl EmitterRates {
    pub fn at_power(&self, pump: &PumpModel, power_mw: f64) -> Result<ThreeLevelRates> {
        ThreeLevelRates::new(kinetics::pump_rate(power_mw, pump)?, self.gamma_eg, self.gamma_em, self.gamma_mg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub duration_ns: f64,
    pub segments: usize,
    /// Pulse train used by `lifetime`.
    pub pulse: PulseConfig,
}

impl Default for SimSection {
    fn default() -> Self {
        Self { duration_ns: 1e9, segments: 8, pulse: PulseConfig::default() }
    }
}

/// Histogram settings; unset bin width and window follow
/// [`CorrelationConfig::for_rates`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationSection {
    pub bin_width_ps: Option<u64>,
    pub window_ps: Option<u64>,
    pub mode: CorrelationMode,
}

impl Default for CorrelationSection {
    fn default() -> Self {
        Self { bin_width_ps: None, window_ps: None, mode: CorrelationMode::FullCorrelation }
    }
}

impl CorrelationSection {
    fn resolve(&self, rates: Option<&ThreeLevelRates>) -> Result<CorrelationConfig> {
        let base = match rates {
            Some(r) => CorrelationConfig::for_rates(r),
            None => CorrelationConfig {
                bin_width_ps: CorrelationConfig::DEFAULT_BIN_WIDTH_PS,
                window_ps: 1_000_000,
                mode: CorrelationMode::FullCorrelation,
            },
        };
        let cfg = CorrelationConfig {
            bin_width_ps: self.bin_width_ps.unwrap_or(base.bin_width_ps),
            window_ps: self.window_ps.unwrap_or(base.window_ps),
            mode: self.mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Saturation analysis and its synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationSection {
    pub eta_ex: f64,
    pub eta_col: f64,
    pub powers_mw: Vec<f64>,
    pub r_inf_cps: f64,
    pub p_sat_mw: f64,
    pub alpha_slope: f64,
    pub beta_dark: f64,
    /// Relative Gaussian noise of the synthetic rates.
    pub noise_rel: f64,
}

impl Default for SaturationSection {
    fn default() -> Self {
        Self {
            eta_ex: 1.0,
            eta_col: 1.0,
            powers_mw: vec![0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0],
            r_inf_cps: 1.942e6,
            p_sat_mw: 0.425,
            alpha_slope: 2.0e4,
            beta_dark: 500.0,
            noise_rel: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarizationSection {
    pub phi_deg: f64,
    pub amplitude_cps: f64,
    pub offset_cps: f64,
    pub step_deg: f64,
    pub noise_rel: f64,
    /// Dipole angles of an emitter ensemble to classify; empty skips it.
    pub ensemble_deg: Vec<f64>,
    pub tolerance_deg: f64,
}

impl Default for PolarizationSection {
    fn default() -> Self {
        Self {
            phi_deg: 45.0,
            amplitude_cps: 1.0e5,
            offset_cps: 5.0e3,
            step_deg: 10.0,
            noise_rel: 0.01,
            ensemble_deg: Vec::new(),
            tolerance_deg: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub n_peaks: usize,
    pub shapes: Vec<PeakShape>,
    /// `[lo, hi]` windows in nm removed before fitting.
    pub exclusion_nm: Vec<(f64, f64)>,
    /// Synthetic spectrum: peaks, constant baseline, grid and noise.
    pub peaks: Vec<PeakModel>,
    pub baseline: f64,
    pub range_nm: (f64, f64),
    pub samples: usize,
    pub noise_rel: f64,
    pub temperature_k: Option<f64>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            n_peaks: 2,
            shapes: Vec::new(),
            exclusion_nm: vec![DEFAULT_EXCLUSION_NM],
            peaks: vec![
                PeakModel { shape: PeakShape::Lorentzian, center_nm: 600.2, fwhm_nm: 0.4, area: 3.3e4 },
                PeakModel { shape: PeakShape::Lorentzian, center_nm: 608.0, fwhm_nm: 6.0, area: 6.7e4 },
            ],
            baseline: 100.0,
            range_nm: (570.0, 650.0),
            samples: 4001,
            noise_rel: 0.02,
            temperature_k: Some(18.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinewidthSection {
    /// Exponents compared; the first is the reported model.
    pub exponents: Vec<i32>,
    pub gamma0_nm: f64,
    pub coeff: f64,
    pub temperatures_k: Vec<f64>,
    pub noise_rel: f64,
}

impl Default for LinewidthSection {
    fn default() -> Self {
        let coeff = 1.0e-8;
        Self {
            exponents: vec![3, 5],
            gamma0_nm: 0.095 - coeff * 18f64.powi(3),
            coeff,
            temperatures_k: vec![18.0, 50.0, 80.0, 110.0, 140.0, 170.0, 200.0, 230.0, 260.0, 300.0],
            noise_rel: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2Section {
    pub powers_mw: Vec<f64>,
    pub duration_ns: f64,
    /// g²(0) must stay below this at every power up to `g2_zero_max_power_mw`.
    pub g2_zero_threshold: f64,
    pub g2_zero_max_power_mw: f64,
}

impl Default for Fig2Section {
    fn default() -> Self {
        Self {
            powers_mw: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            duration_ns: 2e9,
            g2_zero_threshold: 0.5,
            g2_zero_max_power_mw: 1.0,
        }
    }
}

/// Full configuration of a run, read from TOML. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub power_mw: f64,
    /// Measured input (tags for `g2`/`lifetime`, CSV for the fit commands).
    pub input: Option<PathBuf>,
    pub rates: EmitterRates,
    pub pump: PumpModel,
    pub detector: DetectorModel,
    pub sim: SimSection,
    pub correlation: CorrelationSection,
    pub fit: FitOptions,
    pub saturation: SaturationSection,
    pub polarization: PolarizationSection,
    pub spectrum: SpectrumSection,
    pub linewidth: LinewidthSection,
    pub fig2: Fig2Section,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            power_mw: 0.5,
            input: None,
            rates: EmitterRates::default(),
            pump: PumpModel { cross_section: 0.02 },
            detector: DetectorModel::default(),
            sim: SimSection::default(),
            correlation: CorrelationSection::default(),
            fit: FitOptions::default(),
            saturation: SaturationSection::default(),
            polarization: PolarizationSection::default(),
            spectrum: SpectrumSection::default(),
            linewidth: LinewidthSection::default(),
            fig2: Fig2Section::default(),
        }
    }
}

/// Command-line values that replace configuration entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub power_mw: Option<f64>,
    pub bin_width_ps: Option<u64>,
    pub window_ps: Option<u64>,
    pub input: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.power_mw {
            self.power_mw = p;
        }
        if let Some(b) = o.bin_width_ps {
            self.correlation.bin_width_ps = Some(b);
        }
        if let Some(w) = o.window_ps {
            self.correlation.window_ps = Some(w);
        }
        if let Some(i) = &o.input {
            self.input = Some(i.clone());
        }
    }

    /// Checks the parts every command relies on.
    pub fn validate(&self) -> Result<()> {
        let config = |e: Error| Error::Config(e.to_string());
        if !(self.power_mw.is_finite() && self.power_mw >= 0.0) {
            return Err(Error::Config(format!("power_mw must be non-negative, got {}", self.power_mw)));
        }
        PumpModel::new(self.pump.cross_section).map_err(config)?;
        self.detector.validate().map_err(config)?;
        ThreeLevelRates::new(0.0, self.rates.gamma_eg, self.rates.gamma_em, self.rates.gamma_mg).map_err(config)?;
        SimConfig {
            duration_ns: self.sim.duration_ns,
            seed: self.seed,
            pulsed: Some(self.sim.pulse),
            segments: self.sim.segments,
        }
        .validate()
        .map_err(config)?;
        Ok(())
    }

    fn rates_at(&self, power_mw: f64) -> Result<ThreeLevelRates> {
        self.rates.at_power(&self.pump, power_mw)
    }

    fn sim_config(&self, seed: u64, duration_ns: f64, pulsed: bool) -> SimConfig {
        SimConfig { duration_ns, seed, pulsed: pulsed.then_some(self.sim.pulse), segments: self.sim.segments }
    }
}

/// Runs `cmd`, writing its reports into `out_dir` (created if needed).
/// Returns the paths written, in a fixed order.
pub fn run_pipeline(cmd: Command, cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut out = Outputs { dir: out_dir.to_path_buf(), written: Vec::new() };
    match cmd {
        Command::Simulate => run_simulate(cfg, &mut out)?,
        Command::G2 => run_g2(cfg, &mut out)?,
        Command::Lifetime => run_lifetime(cfg, &mut out)?,
        Command::Saturation => run_saturation(cfg, &mut out)?,
        Command::Polarization => run_polarization(cfg, &mut out)?,
        Command::Spectrum => run_spectrum(cfg, &mut out)?,
        Command::Linewidth => run_linewidth(cfg, &mut out)?,
        Command::ReproduceFig2 => run_fig2(cfg, &mut out)?,
    }
    Ok(out.written)
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        io::write_json_file(p, value)
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let p = self.path(name);
        io::write_table_file(p, header, rows)
    }

    fn histogram(&mut self, name: &str, h: &Histogram) -> Result<()> {
        let p = self.path(name);
        h.write_csv(std::io::BufWriter::new(fs::File::create(p)?))?;
        Ok(())
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn noise(seed: u64, tag: &str) -> impl FnMut(f64) -> f64 {
    let mut rng = derive_rng(seed, tag, 0);
    move |sigma: f64| if sigma > 0.0 { Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng) } else { 0.0 }
}

/// Simulated HBT measurement: emitter → detector → beamsplitter, channels 0
/// and 1 each with its own detector.
pub fn simulate_hbt(
    rates: &ThreeLevelRates,
    sim: &SimConfig,
    detector: &DetectorModel,
    power_mw: f64,
) -> Result<(TagStream, TagStream)> {
    let stream = stage("simulate", simulate::simulate_photon_stream(rates, sim))?;
    let (a, b) = simulate::split_hbt(&stream, sim.seed);
    let det = detector.at_power(power_mw);
    let a = stage("detector", simulate::apply_detector(&a, &det, sim.seed))?;
    let b = stage("detector", simulate::apply_detector(&b, &det, sim.seed))?;
    Ok((a, b))
}

/// Mean normalized g² of the bins adjacent to τ = 0.
pub fn g2_at_zero(h: &Histogram) -> f64 {
    let centers = h.centers_ps();
    let values = h.normalized();
    let bw = (h.edges_ps[1] - h.edges_ps[0]) as f64;
    let near: Vec<f64> = centers.iter().zip(&values).filter(|(c, _)| c.abs() <= bw).map(|(_, v)| *v).collect();
    if near.is_empty() {
        f64::NAN
    } else {
        near.iter().sum::<f64>() / near.len() as f64
    }
}

#[derive(Serialize)]
struct SimulateReport {
    command: &'static str,
    seed: u64,
    power_mw: f64,
    rates: ThreeLevelRates,
    duration_ns: f64,
    counts: Vec<ChannelCount>,
    tag_file: String,
}

#[derive(Serialize)]
struct ChannelCount {
    channel: u8,
    events: usize,
    rate_cps: f64,
}

fn run_simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let rates = stage("kinetics", cfg.rates_at(cfg.power_mw))?;
    let sim = cfg.sim_config(cfg.seed, cfg.sim.duration_ns, false);
    let (a, b) = simulate_hbt(&rates, &sim, &cfg.detector, cfg.power_mw)?;
    let merged = a.merge(&b);
    let tags = out.path("tags.ptag");
    stage("write", io::write_timetags(&tags, &merged))?;
    let secs = merged.duration_ns() * 1e-9;
    let counts = merged
        .channels
        .iter()
        .map(|&c| ChannelCount { channel: c, events: merged.count(c), rate_cps: merged.count(c) as f64 / secs })
        .collect();
    out.json(
        "simulate.json",
        &SimulateReport {
            command: "simulate",
            seed: cfg.seed,
            power_mw: cfg.power_mw,
            rates,
            duration_ns: merged.duration_ns(),
            counts,
            tag_file: "tags.ptag".into(),
        },
    )
}

#[derive(Serialize)]
struct G2Report {
    command: &'static str,
    source: String,
    power_mw: Option<f64>,
    correlation: CorrelationConfig,
    counts: [usize; 2],
    duration_ns: f64,
    g2_zero: f64,
    antibunching: bool,
    /// Mean normalized value over the outer half of the window.
    tail_level: f64,
    fit: Option<G2Fit>,
    expected: Option<G2Params>,
    diagnosis: Option<String>,
}

fn load_two_channels(path: &Path) -> Result<(TagStream, TagStream)> {
    let s = stage("read", io::read_timetags(path))?;
    let pick = |ch: u8| {
        let records = s.records.iter().filter(|r| r.channel == ch).copied().collect();
        TagStream::new(s.duration_ps, vec![ch], records)
    };
    Ok((pick(0), pick(1)))
}

fn run_g2(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (a, b, source, rates) = match &cfg.input {
        Some(p) => {
            let (a, b) = load_two_channels(p)?;
            (a, b, p.display().to_string(), None)
        }
        None => {
            let rates = stage("kinetics", cfg.rates_at(cfg.power_mw))?;
            let sim = cfg.sim_config(cfg.seed, cfg.sim.duration_ns, false);
            let (a, b) = simulate_hbt(&rates, &sim, &cfg.detector, cfg.power_mw)?;
            (a, b, "synthetic".to_string(), Some(rates))
        }
    };
    let corr = stage("correlate", cfg.correlation.resolve(rates.as_ref()))?;
    let hist = stage("correlate", correlate::g2_from_streams(&a, &b, &corr))?;
    out.histogram("g2_histogram.csv", &hist)?;
    let values = hist.normalized();
    let n = values.len();
    let outer: Vec<f64> = values[..n / 4].iter().chain(&values[n - n / 4..]).copied().collect();
    let tail_level = outer.iter().sum::<f64>() / outer.len().max(1) as f64;
    let (fit, diagnosis) = match fitters::fit_g2(&hist, None, &cfg.fit) {
        Ok(f) => (Some(f), None),
        Err(Error::NoAntibunching { min }) => {
            (None, Some(format!("no antibunching (smoothed minimum {min:.3}); histogram reported without a fit")))
        }
        Err(e) => return Err(e.in_stage("fit")),
    };
    if let Some(f) = &fit {
        let rows = dense_grid(0.0, corr.window_ps as f64 / 1000.0, 2001)
            .map(|t| vec![t, f.norm * f.params.eval(t)])
            .collect::<Vec<_>>();
        out.table("g2_fit.csv", &["tau_ns", "g2_fit"], &rows)?;
    }
    let expected = match rates {
        Some(r) => kinetics::g2_params_from_rates(&r).ok(),
        None => None,
    };
    out.json(
        "g2.json",
        &G2Report {
            command: "g2",
            source,
            power_mw: rates.map(|_| cfg.power_mw),
            correlation: corr,
            counts: [a.len(), b.len()],
            duration_ns: a.duration_ns().min(b.duration_ns()),
            g2_zero: g2_at_zero(&hist),
            antibunching: fit.is_some(),
            tail_level,
            diagnosis: diagnosis.or_else(|| fit.as_ref().and_then(|f| f.fit.diagnosis.clone())),
            fit,
            expected,
        },
    )
}

fn dense_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

#[derive(Serialize)]
struct LifetimeReport {
    command: &'static str,
    source: String,
    pulse: PulseConfig,
    bin_width_ps: u64,
    events: usize,
    lifetime_ns: f64,
    sigma_ns: f64,
    fit: FitResult,
    expected_ns: Option<f64>,
}

fn run_lifetime(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (times, source, expected) = match &cfg.input {
        Some(p) => {
            let s = stage("read", io::read_timetags(p))?;
            (s.timestamps(0), p.display().to_string(), None)
        }
        None => {
            let rates = stage("kinetics", cfg.rates_at(cfg.power_mw))?;
            let sim = cfg.sim_config(cfg.seed, cfg.sim.duration_ns, true);
            let s = stage("simulate", simulate::simulate_photon_stream(&rates, &sim))?;
            let s = stage("detector", simulate::apply_detector(&s, &cfg.detector.at_power(cfg.power_mw), cfg.seed))?;
            (s.timestamps(0), "synthetic".into(), Some(1.0 / (rates.gamma_eg + rates.gamma_em)))
        }
    };
    let bin = cfg.correlation.bin_width_ps.unwrap_or(CorrelationConfig::DEFAULT_BIN_WIDTH_PS);
    let corr = CorrelationConfig { bin_width_ps: bin, window_ps: bin, mode: CorrelationMode::FullCorrelation };
    let hist = stage("correlate", correlate::decay_histogram(&times, cfg.sim.pulse.period_ns, &corr))?;
    out.histogram("decay_histogram.csv", &hist)?;
    let fit = stage("fit", fitters::fit_lifetime(&hist, &cfg.fit))?;
    if let Some(m) = fitters::DecayModel::from_fit(&fit) {
        let centers = hist.centers_ns();
        let peak = (0..hist.len()).max_by_key(|&i| (hist.counts[i], std::cmp::Reverse(i))).unwrap_or(0);
        let t0 = centers.get(peak + 1).copied().unwrap_or(0.0);
        let rows: Vec<Vec<f64>> =
            dense_grid(t0, cfg.sim.pulse.period_ns, 1001).map(|t| vec![t, m.eval(t - t0)]).collect();
        out.table("lifetime_fit.csv", &["time_ns", "counts_fit"], &rows)?;
    }
    out.json(
        "lifetime.json",
        &LifetimeReport {
            command: "lifetime",
            source,
            pulse: cfg.sim.pulse,
            bin_width_ps: bin,
            events: times.len(),
            lifetime_ns: fit.value("tau"),
            sigma_ns: fit.sigma("tau").unwrap_or(0.0),
            fit,
            expected_ns: expected,
        },
    )
}

#[derive(Serialize)]
struct SaturationReport {
    command: &'static str,
    source: String,
    config: SaturationConfig,
    fit: FitResult,
    model: Option<SaturationModel>,
    /// Emitter rate `R_INF/2` reached at `P = P_SAT`, cps.
    half_saturation_rate_cps: Option<f64>,
}

fn synthetic_saturation(cfg: &RunConfig) -> Vec<SaturationPoint> {
    let s = &cfg.saturation;
    let mut draw = noise(cfg.seed, "saturation");
    let model = SaturationModel {
        r_inf: s.r_inf_cps,
        p_sat: s.p_sat_mw,
        eta_ex: s.eta_ex,
        eta_col: s.eta_col,
        alpha_slope: s.alpha_slope,
        beta_dark: s.beta_dark,
    };
    s.powers_mw
        .iter()
        .map(|&p| {
            let r = model.eval(p);
            let sigma = (s.noise_rel * r).max(r.sqrt()).max(1.0);
            SaturationPoint { power_mw: p, rate_cps: r + draw(s.noise_rel * r), sigma_cps: sigma }
        })
        .collect()
}

fn run_saturation(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (points, source) = match &cfg.input {
        Some(p) => (stage("read", io::read_records_file::<SaturationPoint>(p))?, p.display().to_string()),
        None => (synthetic_saturation(cfg), "synthetic".into()),
    };
    let sc = SaturationConfig { eta_ex: cfg.saturation.eta_ex, eta_col: cfg.saturation.eta_col };
    let fit = stage("fit", fitters::fit_saturation(&points, &sc, &cfg.fit))?;
    let model = SaturationModel::from_fit(&fit, &sc);
    let path = out.path("saturation_points.csv");
    io::write_records_file(path, &points)?;
    if let Some(m) = &model {
        let pmax = points.iter().map(|p| p.power_mw).fold(0.0, f64::max);
        let rows: Vec<Vec<f64>> = dense_grid(0.0, pmax, 501).map(|p| vec![p, m.eval(p)]).collect();
        out.table("saturation_fit.csv", &["power_mw", "rate_cps"], &rows)?;
    }
    out.json(
        "saturation.json",
        &SaturationReport {
            command: "saturation",
            source,
            config: sc,
            half_saturation_rate_cps: model.map(|m| 0.5 * m.r_inf),
            model,
            fit,
        },
    )
}

#[derive(Serialize)]
struct PolarizationReport {
    command: &'static str,
    source: String,
    result: PolarizationFit,
    ensemble: Option<spectra::PolarizationClusters>,
}

fn run_polarization(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let s = &cfg.polarization;
    let (points, source) = match &cfg.input {
        Some(p) => (stage("read", io::read_records_file::<PolarizationPoint>(p))?, p.display().to_string()),
        None => {
            if !(s.step_deg > 0.0 && s.step_deg <= 30.0) {
                return Err(Error::Config(format!("polarization.step_deg must be in (0, 30], got {}", s.step_deg)));
            }
            let mut draw = noise(cfg.seed, "polarization");
            let n = (180.0 / s.step_deg).round() as usize;
            let pts = (0..n)
                .map(|i| {
                    let t = i as f64 * s.step_deg;
                    let v = (t + s.phi_deg).to_radians().sin();
                    let r = s.offset_cps + s.amplitude_cps * v * v;
                    PolarizationPoint {
                        theta_deg: t,
                        rate_cps: r + draw(s.noise_rel * r),
                        sigma_cps: (s.noise_rel * r).max(1.0),
                    }
                })
                .collect();
            (pts, "synthetic".into())
        }
    };
    let result = stage("fit", fitters::fit_polarization(&points, &cfg.fit))?;
    let ensemble = if s.ensemble_deg.is_empty() {
        None
    } else {
        Some(stage("classify", spectra::classify_polarization(&s.ensemble_deg, s.tolerance_deg))?)
    };
    let path = out.path("polarization_points.csv");
    io::write_records_file(path, &points)?;
    let rows: Vec<Vec<f64>> = dense_grid(0.0, 360.0, 721)
        .map(|t| {
            let v = (t + result.phi_deg).to_radians().sin();
            vec![t, result.offset + result.amplitude * v * v]
        })
        .collect();
    out.table("polarization_fit.csv", &["theta_deg", "rate_cps"], &rows)?;
    out.json("polarization.json", &PolarizationReport { command: "polarization", source, result, ensemble })
}

#[derive(Serialize)]
struct SpectrumReport {
    command: &'static str,
    source: String,
    temperature_k: Option<f64>,
    exclusion_nm: Vec<(f64, f64)>,
    peaks: Vec<PeakModel>,
    baseline: f64,
    baseline_slope: f64,
    decomposition: Option<SpectralDecomposition>,
    fit: FitResult,
}

fn run_spectrum(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let s = &cfg.spectrum;
    let (spec, source) = match &cfg.input {
        Some(p) => (stage("read", io::read_spectrum_file(p))?, p.display().to_string()),
        None => {
            if s.samples < 10 || !(s.range_nm.1 > s.range_nm.0) {
                return Err(Error::Config("spectrum needs samples >= 10 and an increasing range".into()));
            }
            let mut draw = noise(cfg.seed, "spectrum");
            let x: Vec<f64> = dense_grid(s.range_nm.0, s.range_nm.1, s.samples).collect();
            let y = x
                .iter()
                .map(|&w| {
                    let v = s.baseline + s.peaks.iter().map(|p| p.eval(w)).sum::<f64>();
                    (v + draw(s.noise_rel * v)).max(0.0)
                })
                .collect();
            (stage("spectrum", Spectrum::new(x, y, s.temperature_k))?, "synthetic".into())
        }
    };
    let fit = stage("fit", spectra::fit_peaks(&spec, s.n_peaks, &s.shapes, &s.exclusion_nm, &cfg.fit))?;
    // The narrowest peak is the zero-phonon line; the rest form the sideband.
    let decomposition = if fit.peaks.len() >= 2 {
        let zi =
            (0..fit.peaks.len()).min_by(|&a, &b| fit.peaks[a].fwhm_nm.total_cmp(&fit.peaks[b].fwhm_nm)).unwrap_or(0);
        let psb: Vec<PeakModel> = fit.peaks.iter().enumerate().filter(|(i, _)| *i != zi).map(|(_, p)| *p).collect();
        Some(stage("dwf", spectra::debye_waller(&fit.peaks[zi], &psb))?)
    } else {
        None
    };
    let path = out.path("spectrum_data.csv");
    io::write_spectrum_file(path, &spec)?;
    let (lo, hi) = (spec.wavelength_nm[0], spec.wavelength_nm[spec.len() - 1]);
    let rows: Vec<Vec<f64>> = dense_grid(lo, hi, 10 * spec.len()).map(|w| vec![w, fit.eval(w)]).collect();
    out.table("spectrum_fit.csv", &["wavelength_nm", "counts_fit"], &rows)?;
    out.json(
        "spectrum.json",
        &SpectrumReport {
            command: "spectrum",
            source,
            temperature_k: spec.temperature_k,
            exclusion_nm: s.exclusion_nm.clone(),
            peaks: fit.peaks.clone(),
            baseline: fit.baseline,
            baseline_slope: fit.baseline_slope,
            decomposition,
            fit: fit.fit,
        },
    )
}

#[derive(Serialize)]
struct LinewidthFitEntry {
    exponent: i32,
    residual_norm: f64,
    fit: FitResult,
}

#[derive(Serialize)]
struct LinewidthReport {
    command: &'static str,
    source: String,
    fits: Vec<LinewidthFitEntry>,
    /// Exponent with the smallest residual norm.
    best_exponent: i32,
}

fn run_linewidth(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let s = &cfg.linewidth;
    if s.exponents.is_empty() {
        return Err(Error::Config("linewidth.exponents is empty".into()));
    }
    let (points, source) = match &cfg.input {
        Some(p) => (stage("read", io::read_records_file::<LinewidthPoint>(p))?, p.display().to_string()),
        None => {
            let mut draw = noise(cfg.seed, "linewidth");
            let pts = s
                .temperatures_k
                .iter()
                .map(|&t| {
                    let g = s.gamma0_nm + s.coeff * t.powi(s.exponents[0]);
                    LinewidthPoint {
                        temperature_k: t,
                        fwhm_nm: (g + draw(s.noise_rel * g)).abs(),
                        sigma_nm: s.noise_rel * g,
                    }
                })
                .collect();
            (pts, "synthetic".into())
        }
    };
    let series = stage("linewidth", LinewidthSeries::new(points))?;
    let mut fits = Vec::new();
    for &n in &s.exponents {
        let fit = stage("fit", fitters::fit_linewidth_power(&series, n, &cfg.fit))?;
        fits.push(LinewidthFitEntry { exponent: n, residual_norm: fit.residual_norm, fit });
    }
    let best_exponent =
        fits.iter().min_by(|a, b| a.residual_norm.total_cmp(&b.residual_norm)).map(|f| f.exponent).unwrap_or(3);
    let path = out.path("linewidth_points.csv");
    io::write_records_file(path, &series.points)?;
    let tmax = series.points.iter().map(|p| p.temperature_k).fold(0.0, f64::max);
    let mut header = vec!["temperature_k".to_string()];
    header.extend(fits.iter().map(|f| format!("fwhm_nm_t{}", f.exponent)));
    let rows: Vec<Vec<f64>> = dense_grid(0.0, tmax, 601)
        .map(|t| {
            let mut row = vec![t];
            row.extend(fits.iter().map(|f| f.fit.value("gamma0") + f.fit.value("coeff") * t.powi(f.exponent)));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.table("linewidth_fit.csv", &header, &rows)?;
    out.json("linewidth.json", &LinewidthReport { command: "linewidth", source, fits, best_exponent })
}

/// One power of the power series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fig2Point {
    pub power_mw: f64,
    pub events: [usize; 2],
    pub g2_zero: f64,
    pub params: G2Params,
    /// Bunching amplitude implied by the rates at this power.
    pub alpha_predicted: f64,
    pub norm: f64,
    pub converged: bool,
    pub inv_tau1_per_ns: f64,
    pub sigma_inv_tau1: f64,
    pub inv_tau2_per_ns: f64,
    pub sigma_inv_tau2: f64,
}

/// Power-series analysis: g² fits at each power and their zero-power
/// extrapolation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fig2Report {
    pub command: String,
    pub seed: u64,
    pub points: Vec<Fig2Point>,
    pub inv_tau1: LinearExtrapolation,
    pub inv_tau2: LinearExtrapolation,
    /// `1/intercept`, ns.
    pub tau1_zero_ns: f64,
    pub tau2_zero_ns: f64,
    /// Zero-power limits of the configured rates, ns.
    pub expected_tau1_zero_ns: f64,
    pub expected_tau2_zero_ns: f64,
    pub g2_zero_threshold: f64,
    pub g2_zero_max_power_mw: f64,
    pub g2_zero_below_threshold: bool,
}

/// Runs the power series in memory and returns the report plus the
/// per-power histograms.
pub fn fig2_series(cfg: &RunConfig) -> Result<(Fig2Report, Vec<Histogram>)> {
    let f = &cfg.fig2;
    if f.powers_mw.len() < 2 {
        return Err(Error::Config("fig2.powers_mw needs at least two powers".into()));
    }
    let mut seeds = derive_rng(cfg.seed, "fig2", 0);
    let mut points = Vec::new();
    let mut hists = Vec::new();
    for (i, &p) in f.powers_mw.iter().enumerate() {
        let seed: u64 = seeds.random();
        let label = format!("power {p} mW");
        let rates = stage(&label, cfg.rates_at(p))?;
        let sim = cfg.sim_config(seed, f.duration_ns, false);
        let (a, b) = simulate_hbt(&rates, &sim, &cfg.detector, p).map_err(|e| e.in_stage(&label))?;
        let corr = stage(&label, cfg.correlation.resolve(Some(&rates)))?;
        let hist = stage(&label, correlate::g2_from_streams(&a, &b, &corr).map_err(|e| e.in_stage("correlate")))?;
        let fit = stage(&label, fitters::fit_g2(&hist, None, &cfg.fit).map_err(|e| e.in_stage("fit")))?;
        let prm = fit.params;
        log::info!("power {i}: {p} mW, tau1 = {:.3} ns, tau2 = {:.1} ns", prm.tau1, prm.tau2);
        points.push(Fig2Point {
            power_mw: p,
            events: [a.len(), b.len()],
            g2_zero: g2_at_zero(&hist),
            params: prm,
            alpha_predicted: stage(&label, kinetics::g2_params_from_rates(&rates))?.alpha_bunching,
            norm: fit.norm,
            converged: fit.fit.converged,
            inv_tau1_per_ns: 1.0 / prm.tau1,
            sigma_inv_tau1: prm.sigma.tau1 / (prm.tau1 * prm.tau1),
            inv_tau2_per_ns: 1.0 / prm.tau2,
            sigma_inv_tau2: prm.sigma.tau2 / (prm.tau2 * prm.tau2),
        });
        hists.push(hist);
    }
    let series = |v: fn(&Fig2Point) -> (f64, f64)| {
        RateSeries::new(
            points
                .iter()
                .map(|q| {
                    let (value, sigma) = v(q);
                    RatePoint { power_mw: q.power_mw, value, sigma }
                })
                .collect(),
        )
    };
    let inv_tau1 = stage(
        "extrapolate",
        series(|q| (q.inv_tau1_per_ns, q.sigma_inv_tau1)).and_then(|s| kinetics::extrapolate_zero_power(&s)),
    )?;
    let inv_tau2 = stage(
        "extrapolate",
        series(|q| (q.inv_tau2_per_ns, q.sigma_inv_tau2)).and_then(|s| kinetics::extrapolate_zero_power(&s)),
    )?;
    let below = points.iter().filter(|q| q.power_mw <= f.g2_zero_max_power_mw).all(|q| q.g2_zero < f.g2_zero_threshold);
    let report = Fig2Report {
        command: "reproduce-fig2".into(),
        seed: cfg.seed,
        tau1_zero_ns: 1.0 / inv_tau1.intercept,
        tau2_zero_ns: 1.0 / inv_tau2.intercept,
        expected_tau1_zero_ns: 1.0 / (cfg.rates.gamma_eg + cfg.rates.gamma_em),
        expected_tau2_zero_ns: 1.0 / cfg.rates.gamma_mg,
        g2_zero_threshold: f.g2_zero_threshold,
        g2_zero_max_power_mw: f.g2_zero_max_power_mw,
        g2_zero_below_threshold: below,
        points,
        inv_tau1,
        inv_tau2,
    };
    Ok((report, hists))
}

fn run_fig2(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (report, hists) = fig2_series(cfg)?;
    for (i, h) in hists.iter().enumerate() {
        out.histogram(&format!("fig2_g2_power{i}.csv"), h)?;
    }
    let rows: Vec<Vec<f64>> = report
        .points
        .iter()
        .map(|q| {
            vec![
                q.power_mw,
                q.inv_tau1_per_ns,
                q.sigma_inv_tau1,
                q.inv_tau2_per_ns,
                q.sigma_inv_tau2,
                q.params.alpha_bunching,
                q.alpha_predicted,
                q.g2_zero,
            ]
        })
        .collect();
    out.table(
        "fig2_rates.csv",
        &[
            "power_mw",
            "inv_tau1_per_ns",
            "sigma_inv_tau1_per_ns",
            "inv_tau2_per_ns",
            "sigma_inv_tau2_per_ns",
            "alpha_bunching",
            "alpha_predicted",
            "g2_zero",
        ],
        &rows,
    )?;
    let pmax = report.points.iter().map(|q| q.power_mw).fold(0.0, f64::max);
    let lines: Vec<Vec<f64>> =
        dense_grid(0.0, pmax, 101).map(|p| vec![p, report.inv_tau1.eval(p), report.inv_tau2.eval(p)]).collect();
    out.table("fig2_extrapolation.csv", &["power_mw", "inv_tau1_per_ns", "inv_tau2_per_ns"], &lines)?;
    out.json("fig2.json", &report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = RunConfig::from_toml("sed = 3").unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides { seed: Some(9), power_mw: Some(0.7), bin_width_ps: Some(512), ..Default::default() });
        assert_eq!((cfg.seed, cfg.power_mw, cfg.correlation.bin_width_ps), (9, 0.7, Some(512)));
    }
}
