//! Exponential contrast decay `C(t) = C0 exp(-t / T2)`, times in t_L.

use super::lm::{levenberg_marquardt, Bounds, CurveModel, LmOptions, Pinned};
use super::FitResult;
use crate::error::{domain, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastPoint {
    pub t_over_tl: f64,
    pub contrast: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContrastOptions {
    /// Holds `C0` at this value instead of fitting it.
    pub fix_c0: Option<f64>,
    pub lm: LmOptions,
}

struct Decay<'a> {
    t: &'a [f64],
}

impl CurveModel for Decay<'_> {
    fn n_params(&self) -> usize {
        2
    }

    fn predict(&self, p: &[f64]) -> Result<Vec<f64>> {
        Ok(self.t.iter().map(|t| p[0] * (-t / p[1]).exp()).collect())
    }

    fn jacobian(&self, p: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let mut j = DMatrix::zeros(self.t.len(), 2);
        for (i, t) in self.t.iter().enumerate() {
            let e = (-t / p[1]).exp();
            j[(i, 0)] = e;
            j[(i, 1)] = p[0] * e * t / (p[1] * p[1]);
        }
        Some(Ok(j))
    }

    fn param_names(&self) -> Vec<String> {
        vec!["C0".into(), "T2".into()]
    }
}

/// Needs at least as many points as free parameters. A contrast that grows
/// with time is still fitted but flagged `increasing_contrast`.
pub fn fit_contrast_decay(points: &[ContrastPoint], opts: &ContrastOptions) -> Result<FitResult> {
    let n_free = if opts.fix_c0.is_some() { 1 } else { 2 };
    if points.len() < n_free {
        return Err(domain(format!("contrast fit needs at least {n_free} points")));
    }
    for p in points {
        if !(p.t_over_tl >= 0.0) || !(p.sigma > 0.0) || !p.contrast.is_finite() {
            return Err(domain("contrast points need t >= 0, finite contrast and sigma > 0"));
        }
    }
    if let Some(c0) = opts.fix_c0 {
        if !(0.0..=1.0).contains(&c0) || c0 == 0.0 {
            return Err(domain("fixed C0 must lie in (0, 1]"));
        }
    }
    let t: Vec<f64> = points.iter().map(|p| p.t_over_tl).collect();
    let y: Vec<f64> = points.iter().map(|p| p.contrast).collect();
    let s: Vec<f64> = points.iter().map(|p| p.sigma).collect();

    // log-linear start from the positive points
    let pos: Vec<(f64, f64)> = t.iter().zip(&y).filter(|(_, c)| **c > 0.0).map(|(t, c)| (*t, c.ln())).collect();
    let (mut c0, mut t2) = (y.iter().cloned().fold(0.0, f64::max).max(1e-3), 1.0);
    if pos.len() >= 2 {
        let m = pos.len() as f64;
        let tx = pos.iter().map(|p| p.0).sum::<f64>() / m;
        let ly = pos.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pos.iter().map(|p| (p.0 - tx) * (p.1 - ly)).sum();
        let sxx: f64 = pos.iter().map(|p| (p.0 - tx).powi(2)).sum();
        if sxx > 0.0 && sxy < 0.0 {
            t2 = -sxx / sxy;
            c0 = (ly + tx / t2).exp();
        }
    }
    let full = Decay { t: &t };
    let model = Pinned { inner: &full, pins: vec![opts.fix_c0, None] };
    let (start, bounds) = match opts.fix_c0 {
        Some(_) => (vec![t2], Bounds { lower: vec![1e-9], upper: vec![1e9] }),
        None => (vec![c0.min(1.0), t2], Bounds { lower: vec![0.0, 1e-9], upper: vec![1.0, 1e9] }),
    };
    let out = levenberg_marquardt(&model, &y, &s, &start, &bounds, &opts.lm)?;
    let mut fit = FitResult::from_outcome("contrast_decay", &model.param_names(), &out, points.len());

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    let rising = order.windows(2).all(|w| y[w[1]] >= y[w[0]]) && y[order[order.len() - 1]] > y[order[0]];
    if rising {
        fit.flags.push("increasing_contrast".into());
    }
    Ok(fit)
}
