//! Synthetic count records for generator round trips.

use super::relax::{Readout, ReadoutSeries};
use super::{MeasurementSet, Metadata, TimedRecord};
use crate::detection::{forward_model, CountRecord, DetectionModel};
use crate::error::{domain, Result};
use crate::rate_model::{two_timescale_fit_model, ChannelRuleSet, FourLevelRates, SpinPopulation};
use crate::seeding::rng_for;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

/// Trial count that stands in for "no shot noise".
pub const NOISELESS_TRIALS: u64 = 1_000_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelTruth {
    pub p0: f64,
    pub p_inf: f64,
    /// Units of t_L.
    pub t1: f64,
}

impl TwoLevelTruth {
    pub fn upper(&self, t: f64) -> f64 {
        self.p_inf + (self.p0 - self.p_inf) * (-t / self.t1).exp()
    }

    pub fn dark(&self, t: f64, detection: &DetectionModel) -> f64 {
        forward_model(1.0 - self.upper(t), detection)
    }
}

fn expected(p: f64, n: u64) -> CountRecord {
    CountRecord { n_trials: n, n_dark: (p.clamp(0.0, 1.0) * n as f64).round() as u64 }
}

fn sample<R: rand::Rng>(p: f64, n: u64, rng: &mut R) -> Result<CountRecord> {
    let b = Binomial::new(n, p.clamp(0.0, 1.0)).map_err(|e| domain(e.to_string()))?;
    Ok(CountRecord { n_trials: n, n_dark: b.sample(rng) })
}

/// Dark counts at the exact expectation with [`NOISELESS_TRIALS`] trials.
pub fn expected_two_level(times: &[f64], truth: &TwoLevelTruth, detection: &DetectionModel) -> MeasurementSet {
    MeasurementSet {
        records: times
            .iter()
            .map(|&t| TimedRecord { t_over_tl: t, record: expected(truth.dark(t, detection), NOISELESS_TRIALS) })
            .collect(),
        metadata: Metadata::default(),
    }
}

/// Binomial dark counts, `n_trials` per time point. Point `i` draws from
/// stream `i` of `seed`.
pub fn synthesize_two_level(
    times: &[f64],
    truth: &TwoLevelTruth,
    detection: &DetectionModel,
    n_trials: u64,
    seed: u64,
) -> Result<MeasurementSet> {
    let records = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut rng = rng_for(seed, i as u64);
            Ok(TimedRecord { t_over_tl: t, record: sample(truth.dark(t, detection), n_trials, &mut rng)? })
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementSet::new(records, Metadata::default())
}

/// One series per readout for the four-level model. `n_trials = None`
/// gives noiseless records.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_four_level(
    rates: &FourLevelRates,
    rules: &ChannelRuleSet,
    initial: &SpinPopulation,
    times: &[f64],
    readouts: &[Readout],
    detection: &DetectionModel,
    n_trials: Option<u64>,
    seed: u64,
) -> Result<Vec<ReadoutSeries>> {
    let pred = two_timescale_fit_model(rates, rules, initial, times)?;
    let mut stream = 0u64;
    readouts
        .iter()
        .map(|r| {
            let records = times
                .iter()
                .zip(&pred.populations)
                .map(|(&t, p)| {
                    let x = match r {
                        Readout::Manifold => p[3],
                        Readout::Sublevel(label) => {
                            let i = pred
                                .labels
                                .iter()
                                .position(|l| l == label)
                                .ok_or_else(|| domain(format!("unknown sublevel {label}")))?;
                            p[i]
                        }
                    };
                    let dark = forward_model(x, detection);
                    let record = match n_trials {
                        None => expected(dark, NOISELESS_TRIALS),
                        Some(n) => {
                            let mut rng = rng_for(seed, stream);
                            sample(dark, n, &mut rng)?
                        }
                    };
                    stream += 1;
                    Ok(TimedRecord { t_over_tl: t, record })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ReadoutSeries { readout: r.clone(), data: MeasurementSet::new(records, Metadata::default())? })
        })
        .collect()
}
