//! Readout model: maps true qubit populations to observed dark fractions and
//! back, with binomial and calibration uncertainties.
//!
//! `eta_dark_given_down` is the probability that the lower (dark) state is
//! registered dark; `eta_dark_given_up` the probability that the upper
//! (bright) state is misread as dark.

use crate::error::{domain, Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Probability mass within one standard deviation of a normal distribution.
pub const ONE_SIGMA: f64 = 0.682_689_492_137_085_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionModel {
    pub eta_dark_given_down: f64,
    pub eta_dark_given_up: f64,
}

impl DetectionModel {
    pub const IDEAL: DetectionModel = DetectionModel { eta_dark_given_down: 1.0, eta_dark_given_up: 0.0 };

    pub fn new(eta_dark_given_down: f64, eta_dark_given_up: f64) -> Result<Self> {
        let m = DetectionModel { eta_dark_given_down, eta_dark_given_up };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (down, up) = (self.eta_dark_given_down, self.eta_dark_given_up);
        if !(0.0..=1.0).contains(&down) || !(0.0..=1.0).contains(&up) {
            return Err(domain("detection efficiencies must lie in [0, 1]"));
        }
        if !(up < down) {
            return Err(Error::NonInvertible);
        }
        Ok(())
    }

    pub fn contrast(&self) -> f64 {
        self.eta_dark_given_down - self.eta_dark_given_up
    }
}

/// Uncertainty of one detection efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaUncertainty {
    Symmetric(f64),
    /// Quoted as `+sigma` only (value pinned at a physical bound); treated as
    /// a half-normal with scale `sigma`.
    OneSidedUpper(f64),
}

impl EtaUncertainty {
    pub fn std_dev(&self) -> f64 {
        match *self {
            EtaUncertainty::Symmetric(s) => s,
            EtaUncertainty::OneSidedUpper(s) => s * (1.0 - 2.0 / std::f64::consts::PI).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionUncertainty {
    pub eta_dark_given_down: EtaUncertainty,
    pub eta_dark_given_up: EtaUncertainty,
}

impl DetectionUncertainty {
    pub const ZERO: DetectionUncertainty = DetectionUncertainty {
        eta_dark_given_down: EtaUncertainty::Symmetric(0.0),
        eta_dark_given_up: EtaUncertainty::Symmetric(0.0),
    };
}

/// Calibrated readout tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionPreset {
    /// Zeeman qubit, bath in the upper hyperfine manifold.
    Yb174F2Bath,
    /// Zeeman qubit, bath in the lower hyperfine manifold.
    Yb174F1Bath,
    /// Hyperfine clock qubit.
    Yb171Hyperfine,
    Ideal,
}

impl DetectionPreset {
    pub const ALL: [DetectionPreset; 4] = [
        DetectionPreset::Yb174F2Bath,
        DetectionPreset::Yb174F1Bath,
        DetectionPreset::Yb171Hyperfine,
        DetectionPreset::Ideal,
    ];

    pub fn model(&self) -> DetectionModel {
        let (down_err, up) = match self {
            DetectionPreset::Yb174F2Bath => (0.19, 0.03),
            DetectionPreset::Yb174F1Bath => (0.10, 0.00),
            DetectionPreset::Yb171Hyperfine => (0.02, 0.07),
            DetectionPreset::Ideal => (0.0, 0.0),
        };
        DetectionModel { eta_dark_given_down: 1.0 - down_err, eta_dark_given_up: up }
    }

    pub fn uncertainty(&self) -> DetectionUncertainty {
        use EtaUncertainty::*;
        let (down, up) = match self {
            DetectionPreset::Yb174F2Bath => (Symmetric(0.01), Symmetric(0.01)),
            DetectionPreset::Yb174F1Bath => (Symmetric(0.01), OneSidedUpper(0.01)),
            DetectionPreset::Yb171Hyperfine => (Symmetric(0.01), Symmetric(0.03)),
            DetectionPreset::Ideal => (Symmetric(0.0), Symmetric(0.0)),
        };
        DetectionUncertainty { eta_dark_given_down: down, eta_dark_given_up: up }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub n_trials: u64,
    pub n_dark: u64,
}

impl CountRecord {
    pub fn new(n_trials: u64, n_dark: u64) -> Result<Self> {
        if n_dark > n_trials {
            return Err(domain(format!("{n_dark} dark events exceed {n_trials} trials")));
        }
        Ok(CountRecord { n_trials, n_dark })
    }

    pub fn dark_fraction(&self) -> f64 {
        if self.n_trials == 0 {
            return f64::NAN;
        }
        self.n_dark as f64 / self.n_trials as f64
    }
}

/// Observed dark fraction for a true lower-state population `p_down`.
pub fn forward_model(p_down: f64, model: &DetectionModel) -> f64 {
    model.eta_dark_given_down * p_down + model.eta_dark_given_up * (1.0 - p_down)
}

/// Corrected population. `value` is clamped to `[0, 1]`, `raw` is not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corrected {
    pub value: f64,
    pub raw: f64,
    pub out_of_range: bool,
}

/// `p_down = (p_dark - eta_up) / (eta_down - eta_up)`.
pub fn invert(p_dark_obs: f64, model: &DetectionModel) -> Result<Corrected> {
    if !(model.eta_dark_given_down > model.eta_dark_given_up) {
        return Err(Error::NonInvertible);
    }
    let raw = (p_dark_obs - model.eta_dark_given_up) / model.contrast();
    let value = raw.clamp(0.0, 1.0);
    Ok(Corrected { value, raw, out_of_range: value != raw })
}

fn z_for(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(domain(format!("confidence level {confidence} outside (0, 1)")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + confidence / 2.0))
}

/// Wilson score interval for the dark fraction.
pub fn binomial_interval(rec: &CountRecord, confidence: f64) -> Result<(f64, f64)> {
    if rec.n_trials == 0 {
        return Err(domain("interval needs at least one trial"));
    }
    let z = z_for(confidence)?;
    let n = rec.n_trials as f64;
    let p = rec.dark_fraction();
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    let lo = if rec.n_dark == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if rec.n_dark == rec.n_trials { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

/// Corrected lower-state population and its first-order standard error,
/// combining the binomial error of the record with the efficiency
/// uncertainties in quadrature.
pub fn propagate_correction_error(
    rec: &CountRecord,
    model: &DetectionModel,
    unc: &DetectionUncertainty,
) -> Result<(Corrected, f64)> {
    model.validate()?;
    if rec.n_trials == 0 {
        return Err(domain("record has no trials"));
    }
    let p = rec.dark_fraction();
    let corrected = invert(p, model)?;
    let d = model.contrast();
    let (a, b) = (model.eta_dark_given_up, model.eta_dark_given_down);
    let sigma_p = (p * (1.0 - p) / rec.n_trials as f64).sqrt();
    let d_dp = 1.0 / d;
    let d_da = (p - b) / (d * d);
    let d_db = -(p - a) / (d * d);
    let var = (d_dp * sigma_p).powi(2)
        + (d_da * unc.eta_dark_given_up.std_dev()).powi(2)
        + (d_db * unc.eta_dark_given_down.std_dev()).powi(2);
    Ok((corrected, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_for;
    use proptest::prelude::*;
    use rand_distr::{Binomial, Distribution, Normal as RNormal};

    #[test]
    fn forward_cases() {
        assert_eq!(forward_model(0.37, &DetectionModel::IDEAL), 0.37);
        let hf = DetectionPreset::Yb171Hyperfine.model();
        assert!((forward_model(1.0, &hf) - 0.98).abs() < 1e-15);
        let f2 = DetectionPreset::Yb174F2Bath.model();
        assert!((forward_model(0.0, &f2) - 0.03).abs() < 1e-15);
        assert!((f2.eta_dark_given_down - 0.81).abs() < 1e-15);
    }

    #[test]
    fn invert_cases() {
        let m = DetectionPreset::Yb174F2Bath.model();
        assert_eq!(invert(m.eta_dark_given_up, &m).unwrap().value, 0.0);
        let c = invert(0.01, &m).unwrap();
        assert!(c.out_of_range && c.value == 0.0 && c.raw < 0.0);
        let degenerate = DetectionModel { eta_dark_given_down: 0.4, eta_dark_given_up: 0.4 };
        assert!(matches!(invert(0.4, &degenerate), Err(Error::NonInvertible)));
        assert!(DetectionModel::new(0.4, 0.5).is_err());
        // corrected upper population of the stretched-bath hyperfine row
        let hf = DetectionPreset::Yb171Hyperfine.model();
        let observed = forward_model(1.0 - 0.163, &hf);
        assert!((1.0 - invert(observed, &hf).unwrap().value - 0.163).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_cases() {
        let (lo, hi) = binomial_interval(&CountRecord::new(3000, 1500).unwrap(), ONE_SIGMA).unwrap();
        assert!(((hi - lo) / 2.0 - 0.009127).abs() < 2e-6);
        assert!(((hi - lo) / 2.0 - (0.25f64 / 3000.0).sqrt()).abs() < 1e-5);
        let (lo0, _) = binomial_interval(&CountRecord::new(50, 0).unwrap(), ONE_SIGMA).unwrap();
        assert_eq!(lo0, 0.0);
        let (a, b) = binomial_interval(&CountRecord::new(200, 37).unwrap(), 0.95).unwrap();
        let (c, d) = binomial_interval(&CountRecord::new(200, 163).unwrap(), 0.95).unwrap();
        assert!((a - (1.0 - d)).abs() < 1e-14 && (b - (1.0 - c)).abs() < 1e-14);
        assert!(binomial_interval(&CountRecord::new(0, 0).unwrap(), ONE_SIGMA).is_err());
        assert!(CountRecord::new(3, 4).is_err());
    }

    #[test]
    fn wilson_coverage_at_one_sigma() {
        let (n, p) = (3000u64, 0.3);
        let bin = Binomial::new(n, p).unwrap();
        let mut rng = rng_for(11, 0);
        let draws = 10_000;
        let covered = (0..draws)
            .filter(|_| {
                let k = bin.sample(&mut rng);
                let (lo, hi) = binomial_interval(&CountRecord::new(n, k).unwrap(), ONE_SIGMA).unwrap();
                lo <= p && p <= hi
            })
            .count();
        let frac = covered as f64 / draws as f64;
        assert!((0.66..=0.71).contains(&frac), "coverage {frac}");
    }

    #[test]
    fn propagation_limits() {
        let rec = CountRecord::new(3000, 1800).unwrap();
        let (c, s) = propagate_correction_error(&rec, &DetectionModel::IDEAL, &DetectionUncertainty::ZERO).unwrap();
        assert_eq!(c.value, 0.6);
        assert!((s - (0.24f64 / 3000.0).sqrt()).abs() < 1e-15);
        let m = DetectionPreset::Yb174F2Bath.model();
        let (_, s2) = propagate_correction_error(&rec, &m, &DetectionUncertainty::ZERO).unwrap();
        assert!((s2 - (0.24f64 / 3000.0).sqrt() / 0.78).abs() < 1e-15);
    }

    #[test]
    fn propagation_matches_resampling() {
        let rec = CountRecord::new(3000, 1800).unwrap();
        let preset = DetectionPreset::Yb174F2Bath;
        let m = preset.model();
        let (_, sigma) = propagate_correction_error(&rec, &m, &preset.uncertainty()).unwrap();

        // resampling oracle: redraw counts and efficiencies, correct, take spread
        let mut rng = rng_for(5, 0);
        let bin = Binomial::new(3000, 0.6).unwrap();
        let ed = RNormal::new(m.eta_dark_given_down, 0.01).unwrap();
        let eu = RNormal::new(m.eta_dark_given_up, 0.01).unwrap();
        let samples: Vec<f64> = (0..100_000)
            .map(|_| {
                let p = bin.sample(&mut rng) as f64 / 3000.0;
                let (b, a) = (ed.sample(&mut rng), eu.sample(&mut rng));
                (p - a) / (b - a)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt();
        assert!((sigma - sd).abs() / sd < 0.10, "first order {sigma}, resampled {sd}");
    }

    #[test]
    fn one_sided_uncertainty_is_half_normal() {
        let u = EtaUncertainty::OneSidedUpper(0.01);
        assert!((u.std_dev() - 0.01 * 0.602_810_6).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn forward_invert_round_trip(p in 0.0f64..=1.0, up in 0.0f64..0.5, gap in 0.01f64..0.5) {
            let m = DetectionModel::new((up + gap).min(1.0), up).unwrap();
            let back = invert(forward_model(p, &m), &m).unwrap();
            prop_assert!((back.raw - p).abs() < 1e-12);
        }

        #[test]
        fn forward_is_increasing(p in 0.0f64..0.99, up in 0.0f64..0.5, gap in 0.01f64..0.5) {
            let m = DetectionModel::new((up + gap).min(1.0), up).unwrap();
            prop_assert!(forward_model(p + 0.01, &m) > forward_model(p, &m));
        }
    }
}
