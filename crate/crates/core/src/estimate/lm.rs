//! Bounded, weighted Levenberg-Marquardt.
//!
//! Minimizes `sum ((y_i - f_i(p)) / sigma_i)^2` with box constraints enforced
//! by projecting every trial step. Analytic Jacobians are used when the model
//! provides one, otherwise central differences.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub trait CurveModel {
    fn n_params(&self) -> usize;

    fn predict(&self, p: &[f64]) -> Result<Vec<f64>>;

    /// `d f_i / d p_j`, if available in closed form.
    fn jacobian(&self, _p: &[f64]) -> Option<Result<DMatrix<f64>>> {
        None
    }

    fn param_names(&self) -> Vec<String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn project(&self, p: &mut [f64]) {
        for (i, x) in p.iter_mut().enumerate() {
            *x = x.clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when the relative parameter change falls below this.
    pub xtol: f64,
    /// Relative step for central-difference Jacobians.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, xtol: 1e-10, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// `(J^T W J)^-1` at the solution.
    pub covariance: DMatrix<f64>,
    pub chi_square: f64,
    /// Weighted residuals `(y - f) / sigma`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub objective_history: Vec<f64>,
    /// Parameter combination the data barely constrain, if any.
    pub weak_direction: Option<String>,
}

fn chi2(model: &dyn CurveModel, y: &[f64], sigma: &[f64], p: &[f64]) -> Result<(f64, Vec<f64>)> {
    let f = model.predict(p)?;
    let r: Vec<f64> = f.iter().zip(y).zip(sigma).map(|((fi, yi), si)| (yi - fi) / si).collect();
    Ok((r.iter().map(|x| x * x).sum(), r))
}

fn finite_difference(model: &dyn CurveModel, p: &[f64], bounds: &Bounds, step: f64) -> Result<DMatrix<f64>> {
    let n = model.predict(p)?.len();
    let mut j = DMatrix::zeros(n, p.len());
    for k in 0..p.len() {
        let h = step * p[k].abs().max(1e-3);
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[k] = (p[k] + h).min(bounds.upper[k]);
        lo[k] = (p[k] - h).max(bounds.lower[k]);
        let width = hi[k] - lo[k];
        if width <= 0.0 {
            continue;
        }
        let fh = model.predict(&hi)?;
        let fl = model.predict(&lo)?;
        for i in 0..n {
            j[(i, k)] = (fh[i] - fl[i]) / width;
        }
    }
    Ok(j)
}

fn jacobian(model: &dyn CurveModel, p: &[f64], bounds: &Bounds, opts: &LmOptions) -> Result<DMatrix<f64>> {
    match model.jacobian(p) {
        Some(j) => j,
        None => finite_difference(model, p, bounds, opts.fd_step),
    }
}

fn weighted(j: &DMatrix<f64>, sigma: &[f64]) -> DMatrix<f64> {
    let mut w = j.clone();
    for (i, s) in sigma.iter().enumerate() {
        w.row_mut(i).scale_mut(1.0 / s);
    }
    w
}

/// Below this singular-value ratio of the column-scaled Jacobian a direction
/// is reported as weak; the fit still succeeds.
const WEAK_RATIO: f64 = 1e-5;

/// Checks the weighted Jacobian for unidentifiable directions and names the
/// offending parameter combination. A nearly flat direction comes back as
/// `Ok(Some(combination))`.
fn check_identifiable(jw: &DMatrix<f64>, names: &[String]) -> Result<Option<String>> {
    let ncols = jw.ncols();
    let norms: Vec<f64> = (0..ncols).map(|k| jw.column(k).norm()).collect();
    for (k, n) in norms.iter().enumerate() {
        if *n == 0.0 {
            return Err(Error::Degenerate { combination: names[k].clone() });
        }
    }
    let mut scaled = jw.clone();
    for (k, n) in norms.iter().enumerate() {
        scaled.column_mut(k).scale_mut(1.0 / n);
    }
    let svd = scaled.svd(false, true);
    let sv = &svd.singular_values;
    let (imin, smin) = sv.iter().enumerate().fold((0, f64::INFINITY), |a, (i, &s)| if s < a.1 { (i, s) } else { a });
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smin > WEAK_RATIO * smax {
        return Ok(None);
    }
    let vt = svd.v_t.expect("requested V^T");
    let combo: Vec<String> = (0..ncols)
        .filter(|&k| vt[(imin, k)].abs() > 1e-3)
        .map(|k| format!("{:+.3}*{}", vt[(imin, k)], names[k]))
        .collect();
    if smin <= 1e-9 * smax {
        return Err(Error::Degenerate { combination: combo.join(" ") });
    }
    Ok(Some(combo.join(" ")))
}

pub fn levenberg_marquardt(
    model: &dyn CurveModel,
    y: &[f64],
    sigma: &[f64],
    initial: &[f64],
    bounds: &Bounds,
    opts: &LmOptions,
) -> Result<LmOutcome> {
    let np = model.n_params();
    assert_eq!(initial.len(), np);
    assert_eq!(y.len(), sigma.len());
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("all uncertainties must be positive".into()));
    }
    let mut p = initial.to_vec();
    bounds.project(&mut p);
    let (mut cost, _) = chi2(model, y, sigma, &p)?;
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = cost == 0.0;

    while !converged {
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence { iterations, last: p });
        }
        iterations += 1;
        let jw = weighted(&jacobian(model, &p, bounds, opts)?, sigma);
        let (_, r) = chi2(model, y, sigma, &p)?;
        let jtj = jw.transpose() * &jw;
        let grad = jw.transpose() * DVector::from_vec(r);
        // parameters held at a bound by an outward gradient stay put
        let active: Vec<bool> = (0..np)
            .map(|k| (p[k] <= bounds.lower[k] && grad[k] < 0.0) || (p[k] >= bounds.upper[k] && grad[k] > 0.0))
            .collect();
        let mut grad = grad;
        for k in 0..np {
            if active[k] {
                grad[k] = 0.0;
            }
        }
        loop {
            let mut a = jtj.clone();
            for k in 0..np {
                if active[k] {
                    a.row_mut(k).fill(0.0);
                    a.column_mut(k).fill(0.0);
                    a[(k, k)] = 1.0;
                } else {
                    a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
                }
            }
            let step = match a.clone().cholesky() {
                Some(c) => c.solve(&grad),
                None => match a.lu().solve(&grad) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        if lambda > 1e20 {
                            converged = true;
                            break;
                        }
                        continue;
                    }
                },
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            bounds.project(&mut trial);
            let dp: f64 = trial.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let pn: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            let small = dp <= opts.xtol * (pn + opts.xtol);
            let (trial_cost, _) = chi2(model, y, sigma, &trial)?;
            if trial_cost.is_finite() && trial_cost <= cost {
                p = trial;
                cost = trial_cost;
                history.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                if small || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if small || lambda > 1e20 {
                // no downhill step left at this resolution
                converged = true;
                break;
            }
        }
    }

    let jw = weighted(&jacobian(model, &p, bounds, opts)?, sigma);
    let weak_direction = check_identifiable(&jw, &model.param_names())?;
    let info = jw.transpose() * &jw;
    let singular = || Error::Degenerate { combination: model.param_names().join(", ") };
    let full = info.clone().try_inverse().ok_or_else(singular)?;
    let (cost, residuals) = chi2(model, y, sigma, &p)?;
    // A parameter held at a bound is fixed as far as the others are
    // concerned: their block is inverted alone. The held parameter keeps its
    // marginal variance as a scale.
    let grad = jw.transpose() * DVector::from_vec(residuals.clone());
    let held: Vec<bool> = (0..np)
        .map(|k| (p[k] <= bounds.lower[k] && grad[k] <= 0.0) || (p[k] >= bounds.upper[k] && grad[k] >= 0.0))
        .collect();
    let cov = if held.iter().any(|h| *h) {
        let free: Vec<usize> = (0..np).filter(|&k| !held[k]).collect();
        let sub = DMatrix::from_fn(free.len(), free.len(), |a, b| info[(free[a], free[b])]);
        let sub_inv = sub.try_inverse().ok_or_else(singular)?;
        let mut c = DMatrix::zeros(np, np);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                c[(i, j)] = sub_inv[(a, b)];
            }
        }
        for k in (0..np).filter(|&k| held[k]) {
            c[(k, k)] = full[(k, k)];
        }
        c
    } else {
        full
    };
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(LmOutcome {
        params: p,
        covariance: cov,
        chi_square: cost,
        residuals,
        iterations,
        objective_history: history,
        weak_direction,
    })
}

/// View of a model with some parameters held at fixed values.
pub struct Pinned<'a> {
    pub inner: &'a dyn CurveModel,
    /// `Some(v)` pins parameter `k` to `v`.
    pub pins: Vec<Option<f64>>,
}

impl Pinned<'_> {
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut it = free.iter();
        self.pins.iter().map(|p| p.unwrap_or_else(|| *it.next().expect("free parameter count"))).collect()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.pins.len()).filter(|&k| self.pins[k].is_none()).collect()
    }
}

impl CurveModel for Pinned<'_> {
    fn n_params(&self) -> usize {
        self.free_indices().len()
    }

    fn predict(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.inner.predict(&self.expand(p))
    }

    fn jacobian(&self, p: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let cols = self.free_indices();
        self.inner.jacobian(&self.expand(p)).map(|j| j.map(|j| j.select_columns(cols.iter())))
    }

    fn param_names(&self) -> Vec<String> {
        let names = self.inner.param_names();
        self.free_indices().into_iter().map(|k| names[k].clone()).collect()
    }
}

/// Fit to observed fractions with binomial weights evaluated at the model
/// prediction, refitting until the weights stop moving. Returns the last
/// outcome with the total number of LM iterations.
pub fn fit_binomial_irls(
    model: &dyn CurveModel,
    y: &[f64],
    n_trials: &[f64],
    initial: &[f64],
    bounds: &Bounds,
    opts: &LmOptions,
) -> Result<LmOutcome> {
    let mut p = initial.to_vec();
    let mut sigma: Vec<f64> = y.iter().zip(n_trials).map(|(y, n)| super::binomial_sigma(*y, *n)).collect();
    let mut total = 0;
    for _ in 0..30 {
        let mut out = levenberg_marquardt(model, y, &sigma, &p, bounds, opts)?;
        total += out.iterations;
        let pred = model.predict(&out.params)?;
        let next: Vec<f64> = pred.iter().zip(n_trials).map(|(f, n)| super::binomial_sigma(*f, *n)).collect();
        let moved = next.iter().zip(&sigma).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
        let done = moved < 1e-6 && out.params.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        p = out.params.clone();
        sigma = next;
        if done {
            out.iterations = total;
            return Ok(out);
        }
    }
    let mut out = levenberg_marquardt(model, y, &sigma, &p, bounds, opts)?;
    out.iterations += total;
    Ok(out)
}
