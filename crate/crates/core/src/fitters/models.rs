//! Model functions for the least-squares engine.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

/// A scalar model `y = f(x; p)`.
pub trait Model: Sync {
    fn param_names(&self) -> Vec<String>;

    fn n_params(&self) -> usize {
        self.param_names().len()
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64;

    /// `∂f/∂pⱼ`. The default uses central differences.
    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) {
        let mut q = p.to_vec();
        for j in 0..p.len() {
            let h = 6e-6 * p[j].abs().max(1.0);
            q[j] = p[j] + h;
            let up = self.eval(x, &q);
            q[j] = p[j] - h;
            let down = self.eval(x, &q);
            q[j] = p[j];
            grad[j] = (up - down) / (2.0 * h);
        }
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// `intercept + slope·x`
#[derive(Debug, Clone, Copy)]
pub struct Line;

impl Model for Line {
    fn param_names(&self) -> Vec<String> {
        names(&["intercept", "slope"])
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] + p[1] * x
    }
    fn gradient(&self, x: f64, _p: &[f64], g: &mut [f64]) {
        g[0] = 1.0;
        g[1] = x;
    }
}

/// `amplitude·exp(−x/tau) + baseline`
#[derive(Debug, Clone, Copy)]
pub struct Exponential;

impl Model for Exponential {
    fn param_names(&self) -> Vec<String> {
        names(&["tau", "amplitude", "baseline"])
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[1] * (-x / p[0]).exp() + p[2]
    }
    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        let e = (-x / p[0]).exp();
        g[0] = p[1] * e * x / (p[0] * p[0]);
        g[1] = e;
        g[2] = 1.0;
    }
}

/// `norm·(1 − (1+α)·exp(−|τ|/τ₁) + α·exp(−|τ|/τ₂))`, τ in ns.
#[derive(Debug, Clone, Copy)]
pub struct G2Model;

impl Model for G2Model {
    fn param_names(&self) -> Vec<String> {
        names(&["tau1", "tau2", "alpha_bunching", "norm"])
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let t = x.abs();
        p[3] * (1.0 - (1.0 + p[2]) * (-t / p[0]).exp() + p[2] * (-t / p[1]).exp())
    }
    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        let t = x.abs();
        let (e1, e2) = ((-t / p[0]).exp(), (-t / p[1]).exp());
        g[0] = -p[3] * (1.0 + p[2]) * e1 * t / (p[0] * p[0]);
        g[1] = p[3] * p[2] * e2 * t / (p[1] * p[1]);
        g[2] = p[3] * (e2 - e1);
        g[3] = 1.0 - (1.0 + p[2]) * e1 + p[2] * e2;
    }
}

/// `R_eff·P/(P_eff + P) + alpha_slope·P + beta_dark`, P in mW, rates in cps.
///
/// `R_eff = η_COL·R_INF` and `P_eff = η_EX·P_SAT`.
#[derive(Debug, Clone, Copy)]
pub struct Saturation;

impl Model for Saturation {
    fn param_names(&self) -> Vec<String> {
        names(&["r_eff", "p_eff", "alpha_slope", "beta_dark"])
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] * x / (p[1] + x) + p[2] * x + p[3]
    }
    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        let den = p[1] + x;
        g[0] = x / den;
        g[1] = -p[0] * x / (den * den);
        g[2] = x;
        g[3] = 1.0;
    }
}

/// `offset + amplitude·sin²(θ + φ)` with θ and φ in degrees.
#[derive(Debug, Clone, Copy)]
pub struct Polarization;

impl Model for Polarization {
    fn param_names(&self) -> Vec<String> {
        names(&["amplitude", "offset", "phi"])
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let s = (x + p[2]).to_radians().sin();
        p[1] + p[0] * s * s
    }
    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        let a = (x + p[2]).to_radians();
        g[0] = a.sin() * a.sin();
        g[1] = 1.0;
        g[2] = p[0] * (2.0 * a).sin() * PI / 180.0;
    }
}

/// `gamma0 + coeff·xⁿ`
#[derive(Debug, Clone, Copy)]
pub struct PowerLaw {
    pub exponent: i32,
}

impl Model for PowerLaw {
    fn param_names(&self) -> Vec<String> {
        names(&["gamma0", "coeff"])
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] + p[1] * x.powi(self.exponent)
    }
    fn gradient(&self, x: f64, _p: &[f64], g: &mut [f64]) {
        g[0] = 1.0;
        g[1] = x.powi(self.exponent);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakShape {
    Lorentzian,
    Gaussian,
}

impl PeakShape {
    /// Area-normalized profile with the given center and full width at half maximum.
    pub fn profile(self, x: f64, center: f64, fwhm: f64) -> f64 {
        match self {
            PeakShape::Lorentzian => {
                let hw = 0.5 * fwhm;
                hw / PI / ((x - center).powi(2) + hw * hw)
            }
            PeakShape::Gaussian => {
                let sigma = fwhm / (2.0 * (2.0 * LN_2).sqrt());
                (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
            }
        }
    }

    /// Profile value and its derivatives with respect to center and fwhm.
    pub fn profile_with_derivatives(self, x: f64, center: f64, fwhm: f64) -> (f64, f64, f64) {
        let d = x - center;
        match self {
            PeakShape::Lorentzian => {
                let hw = 0.5 * fwhm;
                let q = d * d + hw * hw;
                let v = hw / PI / q;
                let dc = hw / PI * 2.0 * d / (q * q);
                let dhw = (d * d - hw * hw) / (PI * q * q);
                (v, dc, 0.5 * dhw)
            }
            PeakShape::Gaussian => {
                let k = 1.0 / (2.0 * (2.0 * LN_2).sqrt());
                let s = fwhm * k;
                let v = (-d * d / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
                let dc = v * d / (s * s);
                let ds = v * (d * d / (s * s * s) - 1.0 / s);
                (v, dc, k * ds)
            }
        }
    }

    /// Peak height of a unit-area profile.
    pub fn height_per_area(self, fwhm: f64) -> f64 {
        self.profile(0.0, 0.0, fwhm)
    }
}

/// Sum of peaks plus a linear baseline `b₀ + b₁·(x − x_ref)`.
///
/// Parameters are `[center, fwhm, area]` per peak followed by
/// `[baseline, baseline_slope]`.
#[derive(Debug, Clone)]
pub struct MultiPeak {
    pub shapes: Vec<PeakShape>,
    pub x_ref: f64,
}

impl Model for MultiPeak {
    fn param_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(3 * self.shapes.len() + 2);
        for i in 0..self.shapes.len() {
            out.push(format!("center_{i}"));
            out.push(format!("fwhm_{i}"));
            out.push(format!("area_{i}"));
        }
        out.push("baseline".into());
        out.push("baseline_slope".into());
        out
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let k = 3 * self.shapes.len();
        let peaks: f64 =
            self.shapes.iter().enumerate().map(|(i, s)| p[3 * i + 2] * s.profile(x, p[3 * i], p[3 * i + 1])).sum();
        peaks + p[k] + p[k + 1] * (x - self.x_ref)
    }
    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        for (i, s) in self.shapes.iter().enumerate() {
            let (v, dc, dw) = s.profile_with_derivatives(x, p[3 * i], p[3 * i + 1]);
            let area = p[3 * i + 2];
            g[3 * i] = area * dc;
            g[3 * i + 1] = area * dw;
            g[3 * i + 2] = v;
        }
        let k = 3 * self.shapes.len();
        g[k] = 1.0;
        g[k + 1] = x - self.x_ref;
    }
}

/// Named models for [`crate::fitters::fit_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelId {
    Line,
    Exponential,
    G2,
    Saturation,
    Polarization,
    PowerLaw { exponent: i32 },
    Peaks { shapes: Vec<PeakShape>, x_ref: f64 },
}

impl ModelId {
    pub fn build(&self) -> Box<dyn Model> {
        match self {
            ModelId::Line => Box::new(Line),
            ModelId::Exponential => Box::new(Exponential),
            ModelId::G2 => Box::new(G2Model),
            ModelId::Saturation => Box::new(Saturation),
            ModelId::Polarization => Box::new(Polarization),
            ModelId::PowerLaw { exponent } => Box::new(PowerLaw { exponent: *exponent }),
            ModelId::Peaks { shapes, x_ref } => Box::new(MultiPeak { shapes: shapes.clone(), x_ref: *x_ref }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_gradient(m: &dyn Model, x: f64, p: &[f64]) {
        let mut analytic = vec![0.0; p.len()];
        m.gradient(x, p, &mut analytic);
        let mut q = p.to_vec();
        for j in 0..p.len() {
            let h = 1e-7 * p[j].abs().max(1e-3);
            q[j] = p[j] + h;
            let up = m.eval(x, &q);
            q[j] = p[j] - h;
            let down = m.eval(x, &q);
            q[j] = p[j];
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic[j].abs().max(1e-8);
            assert!((numeric - analytic[j]).abs() / scale < 1e-5, "param {j}: {numeric} vs {}", analytic[j]);
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        check_gradient(&Exponential, 2.0, &[3.45, 100.0, 1.0]);
        check_gradient(&G2Model, -7.0, &[3.3, 675.0, 0.3, 1.02]);
        check_gradient(&Saturation, 0.3, &[1.9e6, 0.425, 2e4, 500.0]);
        check_gradient(&Polarization, 20.0, &[1000.0, 50.0, 45.0]);
        check_gradient(&PowerLaw { exponent: 3 }, 120.0, &[0.09, 7e-8]);
        let peaks = MultiPeak { shapes: vec![PeakShape::Lorentzian, PeakShape::Gaussian], x_ref: 585.0 };
        let p = [581.2, 0.095, 400.0, 589.0, 9.0, 800.0, 10.0, 0.3];
        for x in [581.15, 581.3, 586.0, 595.0] {
            check_gradient(&peaks, x, &p);
        }
    }

    #[test]
    fn profiles_have_unit_area_and_given_width() {
        for shape in [PeakShape::Lorentzian, PeakShape::Gaussian] {
            let (c, w) = (581.2, 0.4);
            let h = shape.profile(c, c, w);
            assert!((shape.profile(c + w / 2.0, c, w) / h - 0.5).abs() < 1e-12);
            // Midpoint rule over c ± 500 nm.
            let n = 2_000_000;
            let dx = 1000.0 / n as f64;
            let area: f64 = (0..n).map(|i| shape.profile(c - 500.0 + (i as f64 + 0.5) * dx, c, w)).sum::<f64>() * dx;
            let expected = match shape {
                // Lorentzian tails beyond ±500 nm hold 2·hw/(π·500) of the area.
                PeakShape::Lorentzian => 1.0 - 2.0 * 0.2 / (PI * 500.0),
                PeakShape::Gaussian => 1.0,
            };
            assert!((area - expected).abs() < 1e-4, "{shape:?}: {area}");
        }
    }
}
