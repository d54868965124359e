//! Ramsey fringe fits.
//!
//! Model in observed dark fraction:
//! `y = offset + (C/2) cos(2 pi (delta - nu0) T)`.
//! The fringe phase and the center frequency are the same degree of freedom
//! at fixed `T`, so `nu0` is fitted and the phase `-2 pi nu0 T` is derived.

use super::lm::{fit_binomial_irls, Bounds, CurveModel, LmOptions, Pinned};
use super::{FitResult, Parameter};
use crate::detection::CountRecord;
use crate::error::{domain, Error, Result};
use nalgebra::{DMatrix, Matrix3, Vector3};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeOptions {
    /// Starting value (or fixed value) of the Ramsey wait time in seconds.
    pub wait_time: f64,
    pub fit_wait_time: bool,
    pub lm: LmOptions,
}

impl Default for FringeOptions {
    fn default() -> Self {
        FringeOptions { wait_time: 27e-3, fit_wait_time: true, lm: LmOptions::default() }
    }
}

struct FringeCurve<'a> {
    detuning: &'a [f64],
}

const NAMES: [&str; 4] = ["offset", "contrast", "center_hz", "wait_time_s"];

impl CurveModel for FringeCurve<'_> {
    fn n_params(&self) -> usize {
        4
    }

    fn predict(&self, p: &[f64]) -> Result<Vec<f64>> {
        Ok(self.detuning.iter().map(|d| p[0] + 0.5 * p[1] * (2.0 * PI * (d - p[2]) * p[3]).cos()).collect())
    }

    fn jacobian(&self, p: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let mut j = DMatrix::zeros(self.detuning.len(), 4);
        for (i, d) in self.detuning.iter().enumerate() {
            let arg = 2.0 * PI * (d - p[2]) * p[3];
            let (s, c) = arg.sin_cos();
            j[(i, 0)] = 1.0;
            j[(i, 1)] = 0.5 * c;
            j[(i, 2)] = 0.5 * p[1] * s * 2.0 * PI * p[3];
            j[(i, 3)] = -0.5 * p[1] * s * 2.0 * PI * (d - p[2]);
        }
        Some(Ok(j))
    }

    fn param_names(&self) -> Vec<String> {
        NAMES.iter().map(|s| s.to_string()).collect()
    }
}

/// Linear least squares of `y` on `[1, cos(wx), sin(wx)]`.
fn harmonic(x: &[f64], y: &[f64], w: f64) -> Option<(Vector3<f64>, f64)> {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (xi, yi) in x.iter().zip(y) {
        let (s, c) = (w * xi).sin_cos();
        let v = Vector3::new(1.0, c, s);
        a += v * v.transpose();
        b += v * *yi;
    }
    let coef = a.lu().solve(&b)?;
    let rss = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let (s, c) = (w * xi).sin_cos();
            (yi - coef[0] - coef[1] * c - coef[2] * s).powi(2)
        })
        .sum();
    Some((coef, rss))
}

/// Discrete frequency scan over fringe periods within 25% of the nominal
/// one; returns `[offset, contrast, center, T]`.
fn initial_fringe(x: &[f64], y: &[f64], wait_time: f64, scan_t: bool) -> Result<[f64; 4]> {
    let steps = if scan_t { 201 } else { 1 };
    let mut best: Option<(f64, f64, Vector3<f64>)> = None;
    for k in 0..steps {
        let t = if scan_t { wait_time * (0.75 + 0.5 * k as f64 / (steps - 1) as f64) } else { wait_time };
        if let Some((coef, rss)) = harmonic(x, y, 2.0 * PI * t) {
            if best.as_ref().is_none_or(|b| rss < b.0) {
                best = Some((rss, t, coef));
            }
        }
    }
    let (_, t, coef) = best.ok_or_else(|| domain("fringe scan is singular"))?;
    let amp = coef[1].hypot(coef[2]);
    // cos(w x - w nu0) = cos(w x) cos(w nu0) + sin(w x) sin(w nu0)
    let mut nu0 = coef[2].atan2(coef[1]) / (2.0 * PI * t);
    let mid = 0.5 * (x[0] + x[x.len() - 1]);
    let period = 1.0 / t;
    nu0 += ((mid - nu0) / period).round() * period;
    Ok([coef[0].clamp(0.0, 1.0), (2.0 * amp).min(1.0), nu0, t])
}

/// Fits `(detuning_hz, counts)` pairs; detunings must be increasing.
pub fn fit_fringe(scan: &[(f64, CountRecord)], opts: &FringeOptions) -> Result<FitResult> {
    if scan.len() < 6 {
        return Err(domain("fringe fit needs at least 6 points"));
    }
    if !(opts.wait_time > 0.0) {
        return Err(domain("wait time must be positive"));
    }
    if scan.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(domain("detunings must be strictly increasing"));
    }
    if scan.iter().any(|(_, r)| r.n_trials == 0 || r.n_dark > r.n_trials) {
        return Err(domain("every fringe point needs a valid count record"));
    }
    let x: Vec<f64> = scan.iter().map(|s| s.0).collect();
    let y: Vec<f64> = scan.iter().map(|s| s.1.dark_fraction()).collect();
    let n: Vec<f64> = scan.iter().map(|s| s.1.n_trials as f64).collect();
    if (x[x.len() - 1] - x[0]) * opts.wait_time < 1.0 {
        return Err(domain("fringe scan must span at least one period"));
    }
    let init = initial_fringe(&x, &y, opts.wait_time, opts.fit_wait_time)?;
    let full = FringeCurve { detuning: &x };
    let pins = vec![None, None, None, if opts.fit_wait_time { None } else { Some(opts.wait_time) }];
    let model = Pinned { inner: &full, pins };
    let free = model.free_indices();
    let start: Vec<f64> = free.iter().map(|&k| init[k]).collect();
    let lower = [0.0, 0.0, f64::NEG_INFINITY, 1e-9];
    let upper = [1.0, 1.0, f64::INFINITY, f64::INFINITY];
    let bounds =
        Bounds { lower: free.iter().map(|&k| lower[k]).collect(), upper: free.iter().map(|&k| upper[k]).collect() };

    let out = match fit_binomial_irls(&model, &y, &n, &start, &bounds, &opts.lm) {
        Ok(out) => out,
        Err(Error::Degenerate { .. }) => return low_snr_fit(&x, &y, &n, &init, opts),
        Err(e) => return Err(e),
    };
    let mut fit = FitResult::from_outcome("ramsey_fringe", &model.param_names(), &out, x.len());
    let full_p = model.expand(&out.params);
    let t = full_p[3];
    let var_t = fit.index("wait_time_s").map_or(0.0, |i| fit.covariance[i][i]);
    let var_nu = fit.covariance[2][2];
    let cov_nt = fit.index("wait_time_s").map_or(0.0, |i| fit.covariance[2][i]);
    fit.derived.push(Parameter { name: "period_hz".into(), value: 1.0 / t, sigma: var_t.sqrt() / (t * t) });
    // phase = -2 pi nu0 T
    let nu0 = full_p[2];
    let var_phase = (2.0 * PI).powi(2) * (t * t * var_nu + nu0 * nu0 * var_t + 2.0 * t * nu0 * cov_nt);
    fit.derived.push(Parameter {
        name: "phase_rad".into(),
        value: -2.0 * PI * nu0 * t,
        sigma: var_phase.max(0.0).sqrt(),
    });
    if fit.parameters[1].value < 3.0 * fit.parameters[1].sigma {
        fit.flags.push("low_snr".into());
    }
    Ok(fit)
}

/// Contrast compatible with zero: the frequency parameters are not
/// identifiable, so only offset and contrast are fitted and the rest is
/// reported from the frequency scan without an error bar.
fn low_snr_fit(x: &[f64], y: &[f64], n: &[f64], init: &[f64; 4], opts: &FringeOptions) -> Result<FitResult> {
    let full = FringeCurve { detuning: x };
    let model = Pinned { inner: &full, pins: vec![None, None, Some(init[2]), Some(init[3])] };
    let bounds = Bounds { lower: vec![0.0, 0.0], upper: vec![1.0, 1.0] };
    let start = [init[0], init[1].max(1e-3)];
    let out = fit_binomial_irls(&model, y, n, &start, &bounds, &opts.lm)?;
    let mut fit = FitResult::from_outcome("ramsey_fringe", &model.param_names(), &out, x.len());
    for (k, name) in [(2usize, "center_hz"), (3, "wait_time_s")] {
        fit.parameters.push(Parameter { name: name.into(), value: init[k], sigma: f64::NAN });
    }
    for row in fit.covariance.iter_mut() {
        row.extend([f64::NAN, f64::NAN]);
    }
    fit.covariance.push(vec![f64::NAN; 4]);
    fit.covariance.push(vec![f64::NAN; 4]);
    fit.flags.push("low_snr".into());
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ramsey::{synthesize_fringe_scan, RamseySettings};

    fn grid(n: usize, half_span: f64) -> Vec<f64> {
        (0..n).map(|k| -half_span + 2.0 * half_span * k as f64 / (n - 1) as f64).collect()
    }

    fn noiseless(settings: &RamseySettings, nu0: f64, det: &[f64]) -> Vec<(f64, CountRecord)> {
        let n = 1_000_000_000_000_000u64;
        det.iter()
            .map(|&d| {
                let p = crate::ramsey::fringe_probability(d - nu0, settings);
                (d, CountRecord { n_trials: n, n_dark: (p * n as f64).round() as u64 })
            })
            .collect()
    }

    #[test]
    fn noiseless_scan_recovers_center_and_period() {
        let s = RamseySettings::default();
        let scan = noiseless(&s, 3.0, &grid(41, 60.0));
        let fit = fit_fringe(&scan, &FringeOptions { wait_time: 0.025, ..Default::default() }).unwrap();
        assert!((fit.value("center_hz").unwrap() - 3.0).abs() < 1e-9);
        assert!((fit.derived_value("period_hz").unwrap().value - 1.0 / 0.027).abs() < 1e-8);
        assert!((fit.value("contrast").unwrap() - 0.55).abs() < 1e-9);
        assert!(!fit.has_flag("low_snr"));
    }

    #[test]
    fn noisy_scan_period_and_zero_shift() {
        let s = RamseySettings::default();
        let det = grid(41, 60.0);
        let a = fit_fringe(&synthesize_fringe_scan(&s, &det, 3000, 1).unwrap(), &FringeOptions::default()).unwrap();
        let b = fit_fringe(&synthesize_fringe_scan(&s, &det, 3000, 2).unwrap(), &FringeOptions::default()).unwrap();
        let p = a.derived_value("period_hz").unwrap();
        assert!((p.value - 37.037).abs() < 0.1 && (p.value - 37.037).abs() < 3.0 * p.sigma.max(1e-3));
        let shift = a.value("center_hz").unwrap() - b.value("center_hz").unwrap();
        let err = a.sigma("center_hz").unwrap().hypot(b.sigma("center_hz").unwrap());
        assert!(shift.abs() < 3.0 * err, "{shift} {err}");
    }

    #[test]
    fn flat_scan_is_flagged() {
        let s = RamseySettings { contrast0: 0.0, ..Default::default() };
        let scan = synthesize_fringe_scan(&s, &grid(30, 60.0), 200, 4).unwrap();
        let fit = fit_fringe(&scan, &FringeOptions::default()).unwrap();
        assert!(fit.has_flag("low_snr"));
        assert!(fit.value("contrast").unwrap() < 0.2);
    }

    #[test]
    fn rejects_short_scans() {
        let s = RamseySettings::default();
        let scan = noiseless(&s, 0.0, &grid(5, 60.0));
        assert!(fit_fringe(&scan, &FringeOptions::default()).is_err());
        let narrow = noiseless(&s, 0.0, &grid(10, 5.0));
        assert!(fit_fringe(&narrow, &FringeOptions::default()).is_err());
    }
}
