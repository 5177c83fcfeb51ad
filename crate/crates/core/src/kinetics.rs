//! Three-level rate equations: ground |g⟩, excited |e⟩ and metastable |m⟩.
//!
//! The populations obey `ṗ = M p` with
//!
//! ```text
//!     | -γge     γeg        γmg |
//! M = |  γge  -γeg-γem       0  |
//!     |   0      γem      -γmg  |
//! ```
//!
//! (transitions g→m and m→e are neglected). `M` has one zero eigenvalue and
//! two eigenvalues `-k₁`, `-k₂` that are the roots of `λ² + sλ + q = 0` with
//! `s = γge+γeg+γem+γmg` and `q = γge·γem + γge·γmg + γeg·γmg + γem·γmg`.
//! Any deviation from steady state therefore satisfies `y'' + s·y' + q·y = 0`,
//! which gives every quantity here in closed form.
//!
//! All rates are in 1/ns, times in ns and optical powers in mW.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Level, Result};

/// Transition rates of the three-level model, in 1/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeLevelRates {
    /// Pump-dependent excitation g→e.
    pub gamma_ge: f64,
    /// Radiative decay e→g.
    pub gamma_eg: f64,
    /// Shelving e→m.
    pub gamma_em: f64,
    /// Deshelving m→g.
    pub gamma_mg: f64,
}

impl ThreeLevelRates {
    pub fn new(gamma_ge: f64, gamma_eg: f64, gamma_em: f64, gamma_mg: f64) -> Result<Self> {
        let rates = Self { gamma_ge, gamma_eg, gamma_em, gamma_mg };
        rates.validate()?;
        Ok(rates)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma_ge, self.gamma_eg, self.gamma_em, self.gamma_mg];
        if all.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidRates(format!("rates must be finite and nonnegative, got {all:?}")));
        }
        if self.gamma_eg <= 0.0 {
            return Err(Error::InvalidRates("gamma_eg must be positive".into()));
        }
        Ok(())
    }

    /// Same decay rates with a different excitation rate.
    pub fn with_pump(self, gamma_ge: f64) -> Self {
        Self { gamma_ge, ..self }
    }

    /// Rate matrix acting on `(p_g, p_e, p_m)`.
    pub fn rate_matrix(&self) -> [[f64; 3]; 3] {
        let (a, b, c, d) = self.unpack();
        [[-a, b, d], [a, -b - c, 0.0], [0.0, c, -d]]
    }

    fn unpack(&self) -> (f64, f64, f64, f64) {
        (self.gamma_ge, self.gamma_eg, self.gamma_em, self.gamma_mg)
    }

    fn trace_sum(&self) -> f64 {
        self.gamma_ge + self.gamma_eg + self.gamma_em + self.gamma_mg
    }

    fn product(&self) -> f64 {
        let (a, b, c, d) = self.unpack();
        a * c + a * d + b * d + c * d
    }

    /// `s² − 4q` written as `(a+b+c−d)² − 4ac` to avoid cancellation.
    fn discriminant(&self) -> f64 {
        let (a, b, c, d) = self.unpack();
        (a + b + c - d).powi(2) - 4.0 * a * c
    }
}

/// Level occupation probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelPopulations {
    pub ground: f64,
    pub excited: f64,
    pub metastable: f64,
}

impl LevelPopulations {
    pub const GROUND: Self = Self { ground: 1.0, excited: 0.0, metastable: 0.0 };

    pub fn new(ground: f64, excited: f64, metastable: f64) -> Result<Self> {
        let p = Self { ground, excited, metastable };
        let arr = p.as_array();
        if arr.iter().any(|x| !(0.0..=1.0).contains(x)) || (arr.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("populations must lie in [0,1] and sum to 1, got {arr:?}")));
        }
        Ok(p)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.ground, self.excited, self.metastable]
    }

    pub fn total(&self) -> f64 {
        self.ground + self.excited + self.metastable
    }
}

/// Linear excitation model: `γge = cross_section · P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpModel {
    /// Excitation rate per unit power, 1/(ns·mW).
    pub cross_section: f64,
}

impl PumpModel {
    pub fn new(cross_section: f64) -> Result<Self> {
        if !(cross_section.is_finite() && cross_section > 0.0) {
            return Err(Error::InvalidInput(format!("cross_section must be positive, got {cross_section}")));
        }
        Ok(Self { cross_section })
    }
}

/// Excitation rate (1/ns) at optical power `power_mw`.
pub fn pump_rate(power_mw: f64, pump: &PumpModel) -> Result<f64> {
    if !(power_mw.is_finite() && power_mw >= 0.0) {
        return Err(Error::InvalidInput(format!("power must be nonnegative, got {power_mw} mW")));
    }
    Ok(pump.cross_section * power_mw)
}

/// Standard deviations attached to [`G2Params`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct G2Sigmas {
    pub tau1: f64,
    pub tau2: f64,
    pub alpha_bunching: f64,
}

/// Parameters of `g²(τ) = 1 − (1+α)·exp(−τ/τ₁) + α·exp(−τ/τ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Params {
    /// Antibunching time, ns.
    pub tau1: f64,
    /// Bunching (shelving) time, ns.
    pub tau2: f64,
    pub alpha_bunching: f64,
    #[serde(default)]
    pub sigma: G2Sigmas,
}

impl G2Params {
    pub fn new(tau1: f64, tau2: f64, alpha_bunching: f64) -> Result<Self> {
        let p = Self { tau1, tau2, alpha_bunching, sigma: G2Sigmas::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau1 > 0.0 && self.tau2 > self.tau1 && self.alpha_bunching >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "g2 parameters need tau1 > 0, tau2 > tau1, alpha >= 0 (got {}, {}, {})",
                self.tau1, self.tau2, self.alpha_bunching
            )));
        }
        Ok(())
    }

    pub fn eval(&self, tau: f64) -> f64 {
        g2_biexponential(tau.abs(), self.tau1, self.tau2, self.alpha_bunching)
    }
}

pub fn g2_biexponential(tau: f64, tau1: f64, tau2: f64, alpha: f64) -> f64 {
    1.0 - (1.0 + alpha) * (-tau / tau1).exp() + alpha * (-tau / tau2).exp()
}

/// One point of a power series of a fitted rate (e.g. `1/τ₁`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub power_mw: f64,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub points: Vec<RatePoint>,
}

impl RateSeries {
    pub fn new(points: Vec<RatePoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!("rate series needs at least 2 points, got {}", points.len())));
        }
        for p in &points {
            if !(p.power_mw.is_finite() && p.power_mw > 0.0) {
                return Err(Error::InvalidInput(format!("powers must be positive, got {}", p.power_mw)));
            }
            if !(p.sigma.is_finite() && p.sigma > 0.0) {
                return Err(Error::InvalidInput(format!("sigmas must be positive, got {}", p.sigma)));
            }
            if !p.value.is_finite() {
                return Err(Error::InvalidInput("rate values must be finite".into()));
            }
        }
        let mut powers: Vec<f64> = points.iter().map(|p| p.power_mw).collect();
        powers.sort_by(f64::total_cmp);
        if powers.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("powers must be distinct".into()));
        }
        Ok(Self { points })
    }
}

/// Straight-line fit `value = intercept + slope·P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearExtrapolation {
    /// Value at zero power, 1/ns.
    pub intercept: f64,
    /// 1/(ns·mW).
    pub slope: f64,
    pub sigma_intercept: f64,
    pub sigma_slope: f64,
    pub covariance: f64,
    /// False when all input sigmas were equal and the ordinary fit was used.
    pub weighted: bool,
}

impl LinearExtrapolation {
    pub fn eval(&self, power_mw: f64) -> f64 {
        self.intercept + self.slope * power_mw
    }
}

/// Eigen-structure of the non-stationary part of the rate matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relaxation {
    /// Two distinct real modes `exp(−k·t)`, `fast > slow`.
    Distinct { fast: f64, slow: f64 },
    /// Repeated real mode.
    Degenerate { rate: f64 },
    /// Damped oscillation `exp(−decay·t)·cos(freq·t)`.
    Oscillating { decay: f64, freq: f64 },
}

/// Relative threshold on the discriminant below which the two modes are
/// treated as degenerate.
const DEGENERACY_TOL: f64 = 1e-12;

pub fn relaxation_modes(rates: &ThreeLevelRates) -> Relaxation {
    let s = rates.trace_sum();
    let disc = rates.discriminant();
    if disc.abs() <= DEGENERACY_TOL * s * s {
        Relaxation::Degenerate { rate: 0.5 * s }
    } else if disc > 0.0 {
        let fast = 0.5 * (s + disc.sqrt());
        Relaxation::Distinct { fast, slow: rates.product() / fast }
    } else {
        Relaxation::Oscillating { decay: 0.5 * s, freq: 0.5 * (-disc).sqrt() }
    }
}

/// Slowest relaxation time of the populations, ns.
pub fn relaxation_time(rates: &ThreeLevelRates) -> f64 {
    match relaxation_modes(rates) {
        Relaxation::Distinct { slow, .. } => 1.0 / slow,
        Relaxation::Degenerate { rate } => 1.0 / rate,
        Relaxation::Oscillating { decay, .. } => 1.0 / decay,
    }
}

/// Steady-state populations (null vector of the rate matrix, normalized).
pub fn steady_state(rates: &ThreeLevelRates) -> Result<LevelPopulations> {
    rates.validate()?;
    let (a, b, c, d) = rates.unpack();
    if a == 0.0 {
        return Ok(LevelPopulations::GROUND);
    }
    let w = if d > 0.0 {
        [(b + c) * d, a * d, a * c]
    } else if c == 0.0 {
        [b, a, 0.0]
    } else {
        return Err(Error::AbsorbingState(Level::Metastable));
    };
    let total: f64 = w.iter().sum();
    Ok(LevelPopulations { ground: w[0] / total, excited: w[1] / total, metastable: w[2] / total })
}

/// `(e^{−st/2}·cosh ωt, e^{−st/2}·sinh(ωt)/ω)` for the two nonzero modes.
fn mode_kernels(rates: &ThreeLevelRates, t: f64) -> (f64, f64) {
    let s = rates.trace_sum();
    let omega_sq = 0.25 * rates.discriminant();
    let x = omega_sq * t * t;
    if x.abs() < 1e-2 {
        let damp = (-0.5 * s * t).exp();
        let c = 1.0 + x / 2.0 + x * x / 24.0 + x * x * x / 720.0 + x.powi(4) / 40320.0;
        let sh = t * (1.0 + x / 6.0 + x * x / 120.0 + x * x * x / 5040.0 + x.powi(4) / 362_880.0);
        return (damp * c, damp * sh);
    }
    if omega_sq > 0.0 {
        let root = omega_sq.sqrt();
        let fast = 0.5 * s + root;
        let slow = rates.product() / fast;
        let (es, ef) = ((-slow * t).exp(), (-fast * t).exp());
        (0.5 * (es + ef), (es - ef) / (fast - slow))
    } else {
        let freq = (-omega_sq).sqrt();
        let damp = (-0.5 * s * t).exp();
        (damp * (freq * t).cos(), damp * (freq * t).sin() / freq)
    }
}

/// Populations at time `t` (ns) starting from `initial`.
pub fn propagate(rates: &ThreeLevelRates, initial: &LevelPopulations, t: f64) -> Result<LevelPopulations> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput(format!("time must be nonnegative, got {t}")));
    }
    let ss = steady_state(rates)?.as_array();
    if rates.product() == 0.0 {
        // q = 0 means a second stationary state (|m⟩ never empties).
        return Err(Error::AbsorbingState(Level::Metastable));
    }
    let m = rates.rate_matrix();
    let p0 = initial.as_array();
    let s = rates.trace_sum();
    let (kc, ks) = mode_kernels(rates, t);
    let mut out = [0.0; 3];
    for i in 0..3 {
        let y0 = p0[i] - ss[i];
        let dy0: f64 = (0..3).map(|j| m[i][j] * p0[j]).sum();
        out[i] = ss[i] + y0 * kc + (dy0 + 0.5 * s * y0) * ks;
    }
    Ok(LevelPopulations { ground: out[0], excited: out[1], metastable: out[2] })
}

/// `K = γge / p_e(∞)`, so that `g²(τ) = 1 − C(τ) + (K − s/2)·S(τ)`.
fn excitation_over_steady_excited(rates: &ThreeLevelRates) -> f64 {
    let (a, b, c, d) = rates.unpack();
    if c == 0.0 {
        a + b
    } else {
        a + b + c + a * c / d
    }
}

/// Exact `g²(τ) = p_e(τ)/p_e(∞)` with `p(0) = |g⟩`, evaluated on `tau_grid` (ns).
///
/// Uses the closed-form two-mode solution; degenerate and oscillating
/// spectra are handled by the same kernels, with a series expansion near
/// `ωτ = 0`.
pub fn g2_exact(rates: &ThreeLevelRates, tau_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    rates.validate()?;
    if rates.gamma_ge == 0.0 {
        return Err(Error::ZeroPump);
    }
    if tau_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidInput("tau grid must be finite and nonnegative".into()));
    }
    if tau_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("tau grid must be sorted".into()));
    }
    steady_state(rates)?;
    let k = excitation_over_steady_excited(rates);
    let half_s = 0.5 * rates.trace_sum();
    Ok(tau_grid
        .iter()
        .map(|&tau| {
            let (kc, ks) = mode_kernels(rates, tau);
            (tau, 1.0 - kc + (k - half_s) * ks)
        })
        .collect())
}

/// Bi-exponential parameters equivalent to [`g2_exact`].
///
/// `1/τ₁` and `1/τ₂` are the fast and slow relaxation rates and `α` is the
/// amplitude of the slow mode, so the returned curve reproduces `g2_exact`
/// up to rounding.
pub fn g2_params_from_rates(rates: &ThreeLevelRates) -> Result<G2Params> {
    rates.validate()?;
    if rates.gamma_ge == 0.0 {
        return Err(Error::ZeroPump);
    }
    steady_state(rates)?;
    let (a, b, c, d) = rates.unpack();
    if c == 0.0 {
        // |m⟩ is never populated: pure two-level antibunching.
        let fast = a + b;
        if !(d > 0.0 && d < fast) {
            return Err(Error::NotBiexponential(
                "gamma_em = 0 and the metastable mode is not slower than the antibunching mode".into(),
            ));
        }
        return Ok(G2Params { tau1: 1.0 / fast, tau2: 1.0 / d, alpha_bunching: 0.0, sigma: G2Sigmas::default() });
    }
    let (fast, slow) = match relaxation_modes(rates) {
        Relaxation::Distinct { fast, slow } => (fast, slow),
        Relaxation::Degenerate { .. } => return Err(Error::DegenerateEigenvalues),
        Relaxation::Oscillating { .. } => {
            return Err(Error::NotBiexponential("complex eigenvalues give an oscillating g2".into()))
        }
    };
    let k = excitation_over_steady_excited(rates);
    let half_s = 0.5 * rates.trace_sum();
    let alpha = -0.5 + (k - half_s) / (fast - slow);
    if alpha < 0.0 {
        return Err(Error::NotBiexponential(format!(
            "deshelving rate {d} is faster than the antibunching rate {fast}; slow-mode amplitude {alpha:.3e} is negative"
        )));
    }
    Ok(G2Params { tau1: 1.0 / fast, tau2: 1.0 / slow, alpha_bunching: alpha, sigma: G2Sigmas::default() })
}

/// Weighted straight-line fit of a power series, evaluated at zero power.
///
/// With unequal sigmas the fit is weighted by `1/σ²` and the covariance uses
/// the sigmas as absolute errors. With equal sigmas it reduces to ordinary
/// least squares and the covariance is scaled by the residual variance when
/// more than two points are available.
pub fn extrapolate_zero_power(series: &RateSeries) -> Result<LinearExtrapolation> {
    let series = RateSeries::new(series.points.clone())?;
    let pts = &series.points;
    let first_sigma = pts[0].sigma;
    let weighted = pts.iter().any(|p| p.sigma != first_sigma);
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let w = if weighted { 1.0 / (p.sigma * p.sigma) } else { 1.0 };
        sw += w;
        sx += w * p.power_mw;
        sy += w * p.value;
        sxx += w * p.power_mw * p.power_mw;
        sxy += w * p.power_mw * p.value;
    }
    let det = sw * sxx - sx * sx;
    if det <= 0.0 {
        return Err(Error::InvalidInput("powers do not span a line".into()));
    }
    let intercept = (sxx * sy - sx * sxy) / det;
    let slope = (sw * sxy - sx * sy) / det;
    let scale = if weighted {
        1.0
    } else if pts.len() > 2 {
        let rss: f64 = pts.iter().map(|p| (p.value - intercept - slope * p.power_mw).powi(2)).sum();
        rss / (pts.len() - 2) as f64
    } else {
        first_sigma * first_sigma
    };
    Ok(LinearExtrapolation {
        intercept,
        slope,
        sigma_intercept: (scale * sxx / det).sqrt(),
        sigma_slope: (scale * sw / det).sqrt(),
        covariance: -scale * sx / det,
        weighted,
    })
}

/// Fraction of returns to |g⟩ that are radiative.
///
/// Defined by steady-state flux balance: radiative flux `γeg·p_e` divided by
/// the total flux into the ground state `γeg·p_e + γmg·p_m`. Since
/// `γmg·p_m = γem·p_e` in steady state this equals `γeg/(γeg+γem)`; that
/// ratio is also returned when there is no pumping.
pub fn quantum_efficiency(rates: &ThreeLevelRates) -> Result<f64> {
    let (_, b, c, _) = rates.unpack();
    if !(b + c > 0.0) {
        return Err(Error::InvalidRates("all decay rates are zero".into()));
    }
    rates.validate()?;
    let ss = steady_state(rates)?;
    let radiative = b * ss.excited;
    let returned = radiative + rates.gamma_mg * ss.metastable;
    if returned > 0.0 {
        Ok(radiative / returned)
    } else {
        Ok(b / (b + c))
    }
}
