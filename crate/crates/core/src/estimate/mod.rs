//! Inverse problems: recover relaxation times, steady states, fringe
//! parameters and decomposed rates from count records.

pub mod bootstrap;
pub mod contrast;
pub mod decomposition;
pub mod fringe;
pub mod lm;
pub mod relax;
pub mod synth;

pub use bootstrap::{bootstrap, BootstrapSummary};
pub use contrast::{fit_contrast_decay, ContrastOptions, ContrastPoint};
pub use decomposition::{derive_rate_decomposition, RateDecomposition};
pub use fringe::{fit_fringe, FringeOptions};
pub use relax::{
    fit_four_level, fit_relaxation, fit_two_level, FourLevelFitOptions, Readout, ReadoutSeries, RelaxationData,
};

use crate::detection::CountRecord;
use crate::error::{domain, Result};
use lm::LmOutcome;
use serde::{Deserialize, Serialize};

/// One count record at an interaction time (units of t_L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedRecord {
    pub t_over_tl: f64,
    pub record: CountRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub ion: Option<String>,
    pub bath: Option<String>,
    pub detection: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub records: Vec<TimedRecord>,
    pub metadata: Metadata,
}

impl MeasurementSet {
    pub fn new(records: Vec<TimedRecord>, metadata: Metadata) -> Result<Self> {
        let m = MeasurementSet { records, metadata };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if !(r.t_over_tl >= 0.0) {
                return Err(domain(format!("record {i}: negative time")));
            }
            if r.record.n_trials == 0 {
                return Err(domain(format!("record {i}: no trials")));
            }
            if r.record.n_dark > r.record.n_trials {
                return Err(domain(format!("record {i}: dark count exceeds trials")));
            }
            if i > 0 && !(r.t_over_tl > self.records[i - 1].t_over_tl) {
                return Err(domain(format!("record {i}: times must be strictly increasing")));
            }
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t_over_tl).collect()
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.record.dark_fraction()).collect()
    }

    pub fn trials(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.record.n_trials as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    #[serde(with = "nan_null")]
    pub value: f64,
    /// `null` in JSON when the parameter has no error bar.
    #[serde(with = "nan_null")]
    pub sigma: f64,
}

/// Output of every fitter. The JSON field order is part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub parameters: Vec<Parameter>,
    /// Row-major, same order as `parameters`.
    #[serde(with = "nan_null_rows")]
    pub covariance: Vec<Vec<f64>>,
    /// `null` when there are no degrees of freedom left.
    #[serde(with = "nan_null")]
    pub reduced_chi_square: f64,
    pub residuals: Vec<f64>,
    pub n_iterations: usize,
    /// Quantities computed from the parameters (fringe period, phase, ...).
    pub derived: Vec<Parameter>,
    pub flags: Vec<String>,
}

impl FitResult {
    pub(crate) fn from_outcome(model: &str, names: &[String], out: &LmOutcome, n_points: usize) -> Self {
        let np = out.params.len();
        let covariance: Vec<Vec<f64>> = (0..np).map(|i| (0..np).map(|j| out.covariance[(i, j)]).collect()).collect();
        let parameters = names
            .iter()
            .enumerate()
            .map(|(i, n)| Parameter { name: n.clone(), value: out.params[i], sigma: covariance[i][i].max(0.0).sqrt() })
            .collect();
        let dof = n_points.saturating_sub(np);
        FitResult {
            model: model.into(),
            parameters,
            covariance,
            reduced_chi_square: if dof > 0 { out.chi_square / dof as f64 } else { f64::NAN },
            residuals: out.residuals.clone(),
            n_iterations: out.iterations,
            derived: Vec::new(),
            flags: out.weak_direction.iter().map(|c| format!("weakly_constrained: {c}")).collect(),
        }
    }

    /// Result assembled from external estimates, e.g. quoted values.
    pub fn from_estimates(model: &str, values: &[(&str, f64, f64)], correlation: Option<&[Vec<f64>]>) -> Self {
        let n = values.len();
        let covariance = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let rho = match correlation {
                            Some(c) => c[i][j],
                            None if i == j => 1.0,
                            None => 0.0,
                        };
                        rho * values[i].2 * values[j].2
                    })
                    .collect()
            })
            .collect();
        FitResult {
            model: model.into(),
            parameters: values
                .iter()
                .map(|(n, v, s)| Parameter { name: n.to_string(), value: *v, sigma: *s })
                .collect(),
            covariance,
            reduced_chi_square: f64::NAN,
            residuals: Vec::new(),
            n_iterations: 0,
            derived: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.parameters[i].value)
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.parameters[i].sigma)
    }

    pub fn covariance_of(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.covariance[self.index(a)?][self.index(b)?])
    }

    pub fn derived_value(&self, name: &str) -> Option<&Parameter> {
        self.derived.iter().find(|p| p.name == name)
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

/// Binomial standard error of an observed fraction, evaluated at the model
/// prediction and kept away from 0 and 1.
pub(crate) fn binomial_sigma(p: f64, n: f64) -> f64 {
    let floor = 0.5 / n;
    let p = p.clamp(floor, 1.0 - floor);
    (p * (1.0 - p) / n).sqrt()
}

/// Non-finite floats travel as JSON `null` and come back as NaN.
mod nan_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

mod nan_null_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Option<f64>>> =
            m.iter().map(|r| r.iter().map(|v| v.is_finite().then_some(*v)).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let rows = Vec::<Vec<Option<f64>>>::deserialize(d)?;
        Ok(rows.into_iter().map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect())
    }
}
