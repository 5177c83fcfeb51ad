//! Least-squares engine and the photophysics model library.
//!
//! Every fit returns a [`FitResult`] whose sigmas come from the covariance
//! matrix at the optimum.

mod engine;
mod g2;
mod lifetime;
mod linewidth;
pub mod models;
mod polarization;
mod saturation;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use engine::{fit_curve, Bounds, FitData, FitOptions};
pub use g2::{fit_g2, fit_g2_points, g2_fit_data, G2Fit};
pub use lifetime::{fit_decay_points, fit_lifetime, DecayModel};
pub use linewidth::{fit_linewidth_power, fit_linewidth_t3, LinewidthPoint, LinewidthSeries};
pub use models::{Model, ModelId, PeakShape};
pub use polarization::{fit_polarization, PolarizationFit, PolarizationPoint};
pub use saturation::{fit_saturation, SaturationConfig, SaturationModel, SaturationPoint};

use crate::error::{Error, Result};

/// Outcome of one least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Row-major, in the order of `names`.
    pub covariance: Vec<Vec<f64>>,
    /// `sqrt(χ²)`.
    pub residual_norm: f64,
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Scaled gradient at the returned parameters.
    pub gradient_norm: f64,
    /// Why a fit was flagged, when it was.
    pub diagnosis: Option<String>,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.values[i])
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.sigmas[i])
    }

    /// Value of a parameter that the fit is known to have.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name).unwrap_or_else(|| panic!("fit has no parameter {name}"))
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            0.0
        } else {
            self.chi2 / self.dof as f64
        }
    }

    pub(crate) fn flag(mut self, diagnosis: impl Into<String>) -> Self {
        self.converged = false;
        self.diagnosis = Some(diagnosis.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results serialize")
    }
}

/// JSON layout: `params`, `sigmas`, `covariance`, `converged`, `iterations`
/// plus goodness-of-fit fields. `params` and `sigmas` keep parameter order.
#[derive(Serialize, Deserialize)]
struct FitResultWire {
    params: IndexMap<String, f64>,
    sigmas: IndexMap<String, f64>,
    covariance: Vec<Vec<f64>>,
    converged: bool,
    iterations: usize,
    residual_norm: f64,
    chi2: f64,
    dof: usize,
    gradient_norm: f64,
    #[serde(default)]
    diagnosis: Option<String>,
}

impl Serialize for FitResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FitResultWire {
            params: self.names.iter().cloned().zip(self.values.iter().copied()).collect(),
            sigmas: self.names.iter().cloned().zip(self.sigmas.iter().copied()).collect(),
            covariance: self.covariance.clone(),
            converged: self.converged,
            iterations: self.iterations,
            residual_norm: self.residual_norm,
            chi2: self.chi2,
            dof: self.dof,
            gradient_norm: self.gradient_norm,
            diagnosis: self.diagnosis.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FitResult {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = FitResultWire::deserialize(d)?;
        let names: Vec<String> = w.params.keys().cloned().collect();
        let sigmas = names.iter().map(|n| w.sigmas.get(n).copied().unwrap_or(0.0)).collect();
        Ok(FitResult {
            values: w.params.values().copied().collect(),
            names,
            sigmas,
            covariance: w.covariance,
            residual_norm: w.residual_norm,
            chi2: w.chi2,
            dof: w.dof,
            converged: w.converged,
            iterations: w.iterations,
            gradient_norm: w.gradient_norm,
            diagnosis: w.diagnosis,
        })
    }
}

/// Fits a named model with named initial values.
///
/// Missing names in `init` are an error; `bounds` defaults to unbounded.
pub fn fit_model(
    model: &ModelId,
    data: &FitData,
    init: &[(&str, f64)],
    bounds: Option<&Bounds>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let m = model.build();
    let names = m.param_names();
    let mut start = Vec::with_capacity(names.len());
    for name in &names {
        let v = init
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::InvalidInput(format!("missing initial value for {name}")))?;
        start.push(v);
    }
    let unbounded = Bounds::unbounded(names.len());
    fit_curve(m.as_ref(), data, &start, bounds.unwrap_or(&unbounded), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_keys_and_round_trip() {
        let data = FitData::unweighted(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 3.1, 4.9, 7.0]).unwrap();
        let fit = fit_model(&ModelId::Line, &data, &[("slope", 1.0), ("intercept", 0.0)], None, &FitOptions::default())
            .unwrap();
        let json = fit.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["params", "sigmas", "covariance", "converged", "iterations"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let keys: Vec<&String> = v["params"].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["intercept", "slope"]);
        let back: FitResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fit);
    }

    #[test]
    fn missing_initial_value() {
        let data = FitData::unweighted(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert!(fit_model(&ModelId::Line, &data, &[("slope", 1.0)], None, &FitOptions::default()).is_err());
    }
}
