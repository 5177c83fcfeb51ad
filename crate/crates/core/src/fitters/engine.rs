//! Damped Gauss-Newton (Levenberg-Marquardt) least squares with box bounds.
//!
//! Minimizes `χ² = Σ ((yᵢ − f(xᵢ; p)) / σᵢ)²`. The damping term uses
//! Marquardt's diagonal scaling and Nielsen's update rule; trial points are
//! projected onto the bounds. The iteration stops on the first of:
//!
//! * scaled gradient `maxⱼ |Jⱼ·r| / (‖Jⱼ‖·‖r‖)` below `gradient_tol`,
//! * relative step below `step_tol`,
//! * no step lowering the scaled gradient once the predicted χ² decrease
//!   is below `cost_tol` relative (the floating-point floor),
//! * `max_iterations` reached (reported as not converged).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{FitResult, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    /// Relative χ² change treated as rounding noise.
    pub cost_tol: f64,
    /// Multiply the covariance by the reduced χ² (relative sigmas).
    pub scale_covariance: bool,
    /// Return a pseudo-inverse covariance and a diagnosis instead of
    /// [`Error::SingularJacobian`].
    pub allow_singular: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            cost_tol: 1e-15,
            scale_covariance: true,
            allow_singular: false,
        }
    }
}

/// Data points with standard deviations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FitData {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let d = Self { x, y, sigma };
        d.validate()?;
        Ok(d)
    }

    /// Unit weights.
    pub fn unweighted(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let sigma = vec![1.0; y.len()];
        Self::new(x, y, sigma)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() || self.x.len() != self.sigma.len() {
            return Err(Error::InvalidInput("x, y and sigma must have equal lengths".into()));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("data must be finite".into()));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidInput("sigmas must be positive".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.iter().map(|v| v * c).collect(),
            sigma: self.sigma.iter().map(|v| v * c).collect(),
        }
    }
}

/// Box constraints and fixed parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fixed: Vec<bool>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n], fixed: vec![false; n] }
    }

    pub fn with_lower(mut self, i: usize, v: f64) -> Self {
        self.lower[i] = v;
        self
    }

    pub fn with_upper(mut self, i: usize, v: f64) -> Self {
        self.upper[i] = v;
        self
    }

    pub fn with_fixed(mut self, i: usize) -> Self {
        self.fixed[i] = true;
        self
    }

    fn project(&self, p: &mut [f64]) {
        for (j, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }
}

struct Problem<'a> {
    model: &'a dyn Model,
    data: &'a FitData,
    free: Vec<usize>,
}

impl Problem<'_> {
    /// Weighted residuals `(y − f)/σ`.
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.data.len(),
            self.data
                .x
                .iter()
                .zip(&self.data.y)
                .zip(&self.data.sigma)
                .map(|((&x, &y), &s)| (y - self.model.eval(x, p)) / s),
        )
    }

    /// Jacobian of the weighted model `f/σ` with respect to the free parameters.
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let n = self.model.n_params();
        let mut grad = vec![0.0; n];
        let mut jac = DMatrix::zeros(self.data.len(), self.free.len());
        for (i, (&x, &s)) in self.data.x.iter().zip(&self.data.sigma).enumerate() {
            self.model.gradient(x, p, &mut grad);
            for (k, &j) in self.free.iter().enumerate() {
                jac[(i, k)] = grad[j] / s;
            }
        }
        jac
    }
}

fn chi2(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

/// Cosine between the residual vector and each Jacobian column, ignoring
/// parameters pinned at a bound by a gradient that points outward.
fn scaled_gradient(jac: &DMatrix<f64>, r: &DVector<f64>, p: &[f64], free: &[usize], bounds: &Bounds) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = jac.transpose() * r;
    let mut worst: f64 = 0.0;
    for (k, &j) in free.iter().enumerate() {
        let cn = jac.column(k).norm();
        if cn == 0.0 {
            continue;
        }
        // Increasing p_j lowers χ² when g_k > 0.
        if (g[k] > 0.0 && p[j] >= bounds.upper[j]) || (g[k] < 0.0 && p[j] <= bounds.lower[j]) {
            continue;
        }
        worst = worst.max(g[k].abs() / (cn * rn));
    }
    worst
}

/// Fits `model` to `data` from `init`.
///
/// Returns `converged = false` (not an error) when the iteration limit is
/// hit. A Jacobian that is singular at the solution is reported as
/// [`Error::SingularJacobian`] naming the degenerate parameters.
pub fn fit_curve(
    model: &dyn Model,
    data: &FitData,
    init: &[f64],
    bounds: &Bounds,
    opts: &FitOptions,
) -> Result<FitResult> {
    data.validate()?;
    let n = model.n_params();
    let names = model.param_names();
    if init.len() != n || bounds.lower.len() != n || bounds.upper.len() != n || bounds.fixed.len() != n {
        return Err(Error::InvalidInput(format!("model has {n} parameters")));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial parameters must be finite".into()));
    }
    for j in 0..n {
        if !(bounds.lower[j] <= init[j] && init[j] <= bounds.upper[j]) {
            return Err(Error::InvalidInput(format!(
                "initial {} = {} is outside [{}, {}]",
                names[j], init[j], bounds.lower[j], bounds.upper[j]
            )));
        }
    }
    let free: Vec<usize> = (0..n).filter(|&j| !bounds.fixed[j]).collect();
    if data.len() < free.len() {
        return Err(Error::InvalidInput(format!("{} points cannot determine {} parameters", data.len(), free.len())));
    }
    let prob = Problem { model, data, free };
    let nf = prob.free.len();

    let mut p = init.to_vec();
    let mut r = prob.residuals(&p);
    let mut cost = chi2(&r);
    if !cost.is_finite() {
        return Err(Error::FitFailed("model is not finite at the initial parameters".into()));
    }
    let mut jac = prob.jacobian(&p);
    let mut iterations = 0;
    let mut converged =
        cost == 0.0 || nf == 0 || scaled_gradient(&jac, &r, &p, &prob.free, bounds) <= opts.gradient_tol;
    let mut mu = -1.0;
    let mut nu = 2.0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let max_diag = (0..nf).map(|k| jtj[(k, k)]).fold(0.0, f64::max);
        if max_diag == 0.0 {
            break;
        }
        if mu < 0.0 {
            mu = 1e-3;
        }
        let diag: Vec<f64> = (0..nf).map(|k| jtj[(k, k)].max(1e-15 * max_diag)).collect();
        let mut a = jtj.clone();
        let mut g = g;
        for k in 0..nf {
            a[(k, k)] += mu * diag[k];
        }
        // Parameters held at a bound by the gradient drop out of the step.
        for (k, &j) in prob.free.iter().enumerate() {
            if (g[k] < 0.0 && p[j] <= bounds.lower[j]) || (g[k] > 0.0 && p[j] >= bounds.upper[j]) {
                a.row_mut(k).fill(0.0);
                a.column_mut(k).fill(0.0);
                a[(k, k)] = 1.0;
                g[k] = 0.0;
            }
        }
        let Some(chol) = a.cholesky() else {
            mu *= nu;
            nu *= 2.0;
            if mu > 1e20 {
                break;
            }
            continue;
        };
        let delta = chol.solve(&g);
        let mut trial = p.clone();
        for (k, &j) in prob.free.iter().enumerate() {
            trial[j] += delta[k];
        }
        bounds.project(&mut trial);
        let step = DVector::from_iterator(nf, prob.free.iter().map(|&j| trial[j] - p[j]));
        let r_new = prob.residuals(&trial);
        let cost_new = chi2(&r_new);
        let predicted_r = &r - &jac * &step;
        let predicted = cost - chi2(&predicted_r);
        let actual = cost - cost_new;
        let rho = if predicted > 0.0 { actual / predicted } else { -1.0 };

        let rel_step = prob.free.iter().map(|&j| (trial[j] - p[j]).abs() / (p[j].abs() + 1e-300)).fold(0.0, f64::max);
        // Below this the χ² change is rounding noise and cannot rank steps;
        // the gradient decides instead.
        let unmeasurable = cost_new.is_finite() && predicted >= 0.0 && predicted <= opts.cost_tol * cost;
        if cost_new.is_finite() && actual > 0.0 && rho > 0.0 && !unmeasurable {
            p = trial;
            r = r_new;
            cost = cost_new;
            jac = prob.jacobian(&p);
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if cost == 0.0
                || rel_step <= opts.step_tol
                || scaled_gradient(&jac, &r, &p, &prob.free, bounds) <= opts.gradient_tol
            {
                converged = true;
            }
        } else if unmeasurable {
            let jac_new = prob.jacobian(&trial);
            let g_old = scaled_gradient(&jac, &r, &p, &prob.free, bounds);
            let g_new = scaled_gradient(&jac_new, &r_new, &trial, &prob.free, bounds);
            if g_new >= g_old || rel_step <= opts.step_tol {
                // Floating-point floor of the minimum.
                converged = true;
                break;
            }
            p = trial;
            r = r_new;
            cost = cost_new;
            jac = jac_new;
            mu /= 3.0;
            nu = 2.0;
            if g_new <= opts.gradient_tol {
                converged = true;
            }
        } else {
            if rel_step <= opts.step_tol {
                converged = true;
                break;
            }
            mu *= nu;
            nu *= 2.0;
            if mu > 1e20 {
                break;
            }
        }
    }

    let gradient = scaled_gradient(&jac, &r, &p, &prob.free, bounds);
    let dof = data.len().saturating_sub(nf);
    let (covariance, degenerate) = covariance(&jac, &prob.free, n, &names, cost, dof, opts.scale_covariance)?;
    if let Some(params) = &degenerate {
        if !opts.allow_singular {
            return Err(Error::SingularJacobian(params.clone()));
        }
    }
    let sigmas = (0..n).map(|j| covariance[j][j].max(0.0).sqrt()).collect();
    let result = FitResult {
        names,
        values: p,
        sigmas,
        covariance,
        residual_norm: cost.sqrt(),
        chi2: cost,
        dof,
        converged,
        iterations,
        gradient_norm: gradient,
        diagnosis: None,
    };
    Ok(match degenerate {
        Some(params) => result.flag(format!("singular Jacobian: degenerate parameters {}", params.join(", "))),
        None => result,
    })
}

/// Covariance of all parameters (fixed ones get zero rows) and, when the
/// normal matrix is singular, the parameters spanning its null space. In
/// that case the covariance is the pseudo-inverse restricted to the
/// well-determined directions.
fn covariance(
    jac: &DMatrix<f64>,
    free: &[usize],
    n: usize,
    names: &[String],
    cost: f64,
    dof: usize,
    scale: bool,
) -> Result<(Vec<Vec<f64>>, Option<Vec<String>>)> {
    let nf = free.len();
    let mut full = vec![vec![0.0; n]; n];
    if nf == 0 {
        return Ok((full, None));
    }
    let jtj = jac.transpose() * jac;
    // Correlation-scaled normal matrix: unit diagonal, so its conditioning
    // reflects parameter degeneracy and not units.
    let d: Vec<f64> = (0..nf).map(|k| if jtj[(k, k)] > 0.0 { jtj[(k, k)].sqrt() } else { 1.0 }).collect();
    let corr = DMatrix::from_fn(nf, nf, |i, j| jtj[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(corr);
    let cutoff = 1e-13 * nf as f64;
    let mut degenerate = Vec::new();
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= cutoff {
            let v = eig.eigenvectors.column(i);
            for k in 0..nf {
                let name = &names[free[k]];
                if v[k].abs() > 0.1 && !degenerate.contains(name) {
                    degenerate.push(name.clone());
                }
            }
        }
    }
    degenerate.sort_by_key(|name| names.iter().position(|x| x == name));
    let inv_eig = eig.eigenvalues.map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_eig) * eig.eigenvectors.transpose();
    let factor = if scale && dof > 0 { cost / dof as f64 } else { 1.0 };
    for (a, &ja) in free.iter().enumerate() {
        for (b, &jb) in free.iter().enumerate() {
            let v = 0.5 * (inv[(a, b)] + inv[(b, a)]) / (d[a] * d[b]);
            full[ja][jb] = factor * v;
        }
    }
    Ok((full, if degenerate.is_empty() { None } else { Some(degenerate) }))
}
