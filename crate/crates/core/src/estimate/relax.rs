//! Relaxation-curve fits in observed (dark-fraction) space.
//!
//! The tracked population `u` is the upper qubit level: `|up>` for the
//! Zeeman ion, the whole `F = 1` manifold for the hyperfine ion. Readout
//! maps the lower level to dark, so `p_dark = eta_down - (eta_down - eta_up) u`.

use super::lm::{fit_binomial_irls, Bounds, CurveModel, LmOptions};
use super::{FitResult, MeasurementSet, Parameter};
use crate::detection::{invert, DetectionModel};
use crate::error::{domain, Result};
use crate::rate_model::{two_timescale_fit_model, ChannelRuleSet, FourLevelRates, SpinPopulation, FOUR_LEVEL_LABELS};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Multiplicative systematic on every time in units of t_L, from the
/// absolute density calibration. Reported next to the fit, never mixed into
/// the statistical error.
pub const DENSITY_SYSTEMATIC: f64 = 0.40;

pub struct TwoLevelCurve<'a> {
    pub times: &'a [f64],
    pub detection: DetectionModel,
}

impl TwoLevelCurve<'_> {
    pub const NAMES: [&'static str; 3] = ["p0", "p_inf", "T1"];
}

impl CurveModel for TwoLevelCurve<'_> {
    fn n_params(&self) -> usize {
        3
    }

    fn predict(&self, p: &[f64]) -> Result<Vec<f64>> {
        let d = self.detection.contrast();
        Ok(self
            .times
            .iter()
            .map(|t| {
                let e = (-t / p[2]).exp();
                let u = p[1] + (p[0] - p[1]) * e;
                self.detection.eta_dark_given_down - d * u
            })
            .collect())
    }

    fn jacobian(&self, p: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let d = self.detection.contrast();
        let mut j = DMatrix::zeros(self.times.len(), 3);
        for (i, t) in self.times.iter().enumerate() {
            let e = (-t / p[2]).exp();
            j[(i, 0)] = -d * e;
            j[(i, 1)] = -d * (1.0 - e);
            j[(i, 2)] = -d * (p[0] - p[1]) * e * t / (p[2] * p[2]);
        }
        Some(Ok(j))
    }

    fn param_names(&self) -> Vec<String> {
        Self::NAMES.iter().map(|s| s.to_string()).collect()
    }
}

/// Deterministic starting point: `p_inf` from the mean of the last third,
/// `p0` from the first point, `T1` from a log-linear regression of
/// `|u - p_inf|`.
pub fn initial_two_level(times: &[f64], upper: &[f64]) -> [f64; 3] {
    let n = times.len();
    let tail = (n / 3).max(1);
    let p_inf = (upper[n - tail..].iter().sum::<f64>() / tail as f64).clamp(0.0, 1.0);
    let p0 = upper[0].clamp(0.0, 1.0);
    let span = times[n - 1] - times[0];
    let amp = (p0 - p_inf).abs();
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(upper)
        .filter(|(_, u)| (*u - p_inf).abs() > 0.1 * amp && amp > 0.0)
        .map(|(t, u)| (*t, (*u - p_inf).abs().ln()))
        .collect();
    let mut t1 = span / 3.0;
    if pts.len() >= 2 {
        let m = pts.len() as f64;
        let tx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let ly = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - tx) * (p.1 - ly)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - tx).powi(2)).sum();
        if sxx > 0.0 && sxy < 0.0 {
            t1 = -sxx / sxy;
        }
    }
    if !(t1.is_finite() && t1 > 0.0) {
        t1 = 1.0;
    }
    [p0, p_inf, t1]
}

fn upper_from_dark(fractions: &[f64], detection: &DetectionModel) -> Result<Vec<f64>> {
    fractions.iter().map(|f| invert(*f, detection).map(|c| 1.0 - c.raw)).collect()
}

/// Two-level fit of `u(t) = p_inf + (p0 - p_inf) exp(-t/T1)` against raw dark
/// fractions. Times and `T1` are in units of t_L.
pub fn fit_two_level(data: &MeasurementSet, detection: &DetectionModel, opts: &LmOptions) -> Result<FitResult> {
    data.validate()?;
    detection.validate()?;
    if data.records.len() < 4 {
        return Err(domain("two-level fit needs at least 4 time points"));
    }
    let times = data.times();
    let y = data.fractions();
    let n = data.trials();
    let model = TwoLevelCurve { times: &times, detection: *detection };
    let init = initial_two_level(&times, &upper_from_dark(&y, detection)?);
    let bounds = Bounds { lower: vec![0.0, 0.0, 1e-9], upper: vec![1.0, 1.0, f64::INFINITY] };
    let out = fit_binomial_irls(&model, &y, &n, &init, &bounds, opts)?;
    let mut fit = FitResult::from_outcome("two_level", &model.param_names(), &out, times.len());
    let t1 = out.params[2];
    fit.derived.push(Parameter { name: "T1_density_systematic".into(), value: DENSITY_SYSTEMATIC * t1, sigma: 0.0 });
    for (k, name) in ["p0", "p_inf"].iter().enumerate() {
        if out.params[k] <= 0.0 || out.params[k] >= 1.0 {
            fit.flags.push(format!("{name}_at_bound"));
        }
    }
    Ok(fit)
}

/// What a series of the four-level measurement maps to dark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Plain hyperfine readout: `|0,0>` dark, all of `F = 1` bright.
    Manifold,
    /// One `F = 1` sublevel is swapped into the dark state before readout.
    Sublevel(String),
}

impl Readout {
    fn dark_population(&self, p: &[f64]) -> Result<f64> {
        match self {
            Readout::Manifold => Ok(p[3]),
            Readout::Sublevel(label) => FOUR_LEVEL_LABELS
                .iter()
                .position(|l| l == label)
                .filter(|&i| i < 3)
                .map(|i| p[i])
                .ok_or_else(|| domain(format!("unknown readout sublevel {label}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutSeries {
    pub readout: Readout,
    pub data: MeasurementSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourLevelFitOptions {
    pub rules: ChannelRuleSet,
    pub initial_state: SpinPopulation,
    /// Pins the steady `F = 1` population; the pump rate then follows from
    /// the other five rates.
    pub steady_upper: Option<f64>,
    pub start: FourLevelRates,
    pub lm: LmOptions,
}

impl FourLevelFitOptions {
    pub fn new(rules: ChannelRuleSet, initial_state: SpinPopulation) -> Self {
        FourLevelFitOptions {
            rules,
            initial_state,
            steady_upper: None,
            start: FourLevelRates {
                transfer_to_minus: 0.3,
                transfer_to_plus: 0.3,
                transfer_back: 0.3,
                decay_from_center: 0.3,
                decay_from_edges: 0.3,
                pump: 0.1,
            },
            lm: LmOptions::default(),
        }
    }
}

struct FourLevelCurve<'a> {
    series: &'a [ReadoutSeries],
    times: Vec<f64>,
    detection: DetectionModel,
    opts: &'a FourLevelFitOptions,
}

impl FourLevelCurve<'_> {
    fn rates(&self, p: &[f64]) -> Result<FourLevelRates> {
        let mut v = p.to_vec();
        if self.opts.steady_upper.is_some() {
            v.push(0.0);
        }
        let r = FourLevelRates::from_slice(&v)?;
        match self.opts.steady_upper {
            Some(target) => r.with_steady_upper(target, &self.opts.rules),
            None => Ok(r),
        }
    }
}

impl CurveModel for FourLevelCurve<'_> {
    fn n_params(&self) -> usize {
        if self.opts.steady_upper.is_some() {
            5
        } else {
            6
        }
    }

    fn predict(&self, p: &[f64]) -> Result<Vec<f64>> {
        let rates = self.rates(p)?;
        let pred = two_timescale_fit_model(&rates, &self.opts.rules, &self.opts.initial_state, &self.times)?;
        let mut out = Vec::new();
        for s in self.series {
            for r in &s.data.records {
                let k = self.times.partition_point(|t| *t < r.t_over_tl);
                let x = s.readout.dark_population(&pred.populations[k])?;
                out.push(crate::detection::forward_model(x, &self.detection));
            }
        }
        Ok(out)
    }

    fn param_names(&self) -> Vec<String> {
        FourLevelRates::PARAM_NAMES[..self.n_params()].iter().map(|s| s.to_string()).collect()
    }
}

/// Fit of the six four-level rates (five with a pinned steady state) to one
/// or more readout series sharing the same initial state. Uses central
/// finite-difference Jacobians.
pub fn fit_four_level(
    series: &[ReadoutSeries],
    detection: &DetectionModel,
    opts: &FourLevelFitOptions,
) -> Result<FitResult> {
    detection.validate()?;
    opts.initial_state.validate()?;
    if series.is_empty() {
        return Err(domain("four-level fit needs at least one readout series"));
    }
    let mut times = Vec::new();
    let (mut y, mut n) = (Vec::new(), Vec::new());
    for s in series {
        s.data.validate()?;
        s.readout.dark_population(&[0.0; 4])?;
        times.extend(s.data.times());
        y.extend(s.data.fractions());
        n.extend(s.data.trials());
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.len() < 8 {
        return Err(domain("four-level fit needs at least 8 distinct time points"));
    }
    let model = FourLevelCurve { series, times: times.clone(), detection: *detection, opts };
    let np = model.n_params();
    let init = opts.start.to_array()[..np].to_vec();
    let bounds = Bounds { lower: vec![1e-9; np], upper: vec![1e3; np] };
    let out = fit_binomial_irls(&model, &y, &n, &init, &bounds, &opts.lm)?;
    let mut fit = FitResult::from_outcome("four_level", &model.param_names(), &out, y.len());
    let rates = model.rates(&out.params)?;
    if opts.steady_upper.is_some() {
        fit.derived.push(Parameter { name: "pump".into(), value: rates.pump, sigma: f64::NAN });
    }
    fit.derived.push(Parameter {
        name: "steady_upper".into(),
        value: rates.steady_upper(&opts.rules)?,
        sigma: if opts.steady_upper.is_some() { 0.0 } else { f64::NAN },
    });
    let spec = two_timescale_fit_model(&rates, &opts.rules, &opts.initial_state, &[])?;
    for (k, r) in spec.relaxation_rates.iter().enumerate() {
        fit.derived.push(Parameter { name: format!("relaxation_rate_{k}"), value: *r, sigma: f64::NAN });
    }
    Ok(fit)
}

#[derive(Debug, Clone)]
pub enum RelaxationData {
    TwoLevel(MeasurementSet),
    FourLevel { series: Vec<ReadoutSeries>, options: Box<FourLevelFitOptions> },
}

pub fn fit_relaxation(data: &RelaxationData, detection: &DetectionModel) -> Result<FitResult> {
    match data {
        RelaxationData::TwoLevel(m) => fit_two_level(m, detection, &LmOptions::default()),
        RelaxationData::FourLevel { series, options } => fit_four_level(series, detection, options),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{CountRecord, DetectionPreset};
    use crate::error::Error;
    use crate::estimate::synth::{expected_two_level, synthesize_two_level, TwoLevelTruth};
    use crate::estimate::Metadata;

    fn grid() -> Vec<f64> {
        (0..16).map(|k| 0.6 * f64::from(k)).collect()
    }

    #[test]
    fn noiseless_recovery() {
        let truth = TwoLevelTruth { p0: 1.0, p_inf: 0.609, t1: 2.5 };
        let det = DetectionPreset::Yb174F2Bath.model();
        let data = expected_two_level(&grid(), &truth, &det);
        let fit = fit_two_level(&data, &det, &LmOptions::default()).unwrap();
        assert!((fit.value("T1").unwrap() - 2.5).abs() < 1e-8);
        assert!((fit.value("p_inf").unwrap() - 0.609).abs() < 1e-8);
        assert!((fit.value("p0").unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn observed_space_equals_corrected_space() {
        let truth = TwoLevelTruth { p0: 0.9, p_inf: 0.423, t1: 1.6 };
        let det = DetectionModel::new(0.81, 0.03).unwrap();
        let observed = expected_two_level(&grid(), &truth, &det);
        let a = fit_two_level(&observed, &det, &LmOptions::default()).unwrap();
        let n = 1e15;
        let corrected = MeasurementSet::new(
            observed
                .records
                .iter()
                .map(|r| {
                    let p = invert(r.record.dark_fraction(), &det).unwrap().raw;
                    super::super::TimedRecord {
                        t_over_tl: r.t_over_tl,
                        record: CountRecord::new(n as u64, (p * n).round() as u64).unwrap(),
                    }
                })
                .collect(),
            Metadata::default(),
        )
        .unwrap();
        let b = fit_two_level(&corrected, &DetectionModel::IDEAL, &LmOptions::default()).unwrap();
        for name in ["p0", "p_inf", "T1"] {
            assert!((a.value(name).unwrap() - b.value(name).unwrap()).abs() < 1e-9, "{name}");
        }
    }

    #[test]
    fn noisy_recovery_within_three_sigma() {
        let truth = TwoLevelTruth { p0: 1.0, p_inf: 0.609, t1: 2.5 };
        let det = DetectionPreset::Yb174F2Bath.model();
        let data = synthesize_two_level(&grid(), &truth, &det, 3000, 11).unwrap();
        let fit = fit_two_level(&data, &det, &LmOptions::default()).unwrap();
        let z = (fit.value("T1").unwrap() - 2.5) / fit.sigma("T1").unwrap();
        assert!(z.abs() < 3.0, "{z}");
        assert!(fit.reduced_chi_square < 3.0);
        let c = &fit.covariance;
        assert!((c[0][2] - c[2][0]).abs() < 1e-15);
    }

    #[test]
    fn flat_curve_is_degenerate() {
        let truth = TwoLevelTruth { p0: 0.5, p_inf: 0.5, t1: 2.0 };
        let det = DetectionModel::IDEAL;
        let data = expected_two_level(&grid(), &truth, &det);
        match fit_two_level(&data, &det, &LmOptions::default()) {
            Err(Error::Degenerate { combination }) => assert!(combination.contains("T1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_short_and_unsorted_sets() {
        let det = DetectionModel::IDEAL;
        let truth = TwoLevelTruth { p0: 1.0, p_inf: 0.5, t1: 1.0 };
        let data = expected_two_level(&grid()[..3], &truth, &det);
        assert!(fit_two_level(&data, &det, &LmOptions::default()).is_err());
        let mut bad = expected_two_level(&grid(), &truth, &det);
        bad.records.swap(2, 3);
        assert!(fit_two_level(&bad, &det, &LmOptions::default()).is_err());
    }

    #[test]
    fn four_level_noiseless_recovery_with_pinned_steady_state() {
        use crate::physics::SpinState;
        use crate::rate_model::{build_rule_set, four_level_states};
        let rules = build_rule_set(&four_level_states(), SpinState::new(2, 2).unwrap()).unwrap();
        let truth = FourLevelRates {
            transfer_to_minus: 0.05,
            transfer_to_plus: 0.4,
            transfer_back: 0.2,
            decay_from_center: 0.5,
            decay_from_edges: 0.25,
            pump: 0.0,
        }
        .with_steady_upper(0.163, &rules)
        .unwrap();
        let init = SpinPopulation::pure(4, 1);
        let times: Vec<f64> = (0..12).map(|k| 0.5 * f64::from(k)).collect();
        let readouts = vec![
            Readout::Manifold,
            Readout::Sublevel("|1,-1>".into()),
            Readout::Sublevel("|1,0>".into()),
            Readout::Sublevel("|1,1>".into()),
        ];
        let det = DetectionPreset::Yb171Hyperfine.model();
        let series =
            crate::estimate::synth::synthesize_four_level(&truth, &rules, &init, &times, &readouts, &det, None, 0)
                .unwrap();
        let mut opts = FourLevelFitOptions::new(rules, init);
        opts.steady_upper = Some(0.163);
        let fit = fit_four_level(&series, &det, &opts).unwrap();
        for (k, name) in FourLevelRates::PARAM_NAMES[..5].iter().enumerate() {
            assert!((fit.value(name).unwrap() - truth.to_array()[k]).abs() < 1e-6, "{name}");
        }
        assert!((fit.derived_value("steady_upper").unwrap().value - 0.163).abs() < 1e-9);
        assert!(fit.derived.iter().filter(|p| p.name.starts_with("relaxation_rate")).count() >= 2);
    }
}
