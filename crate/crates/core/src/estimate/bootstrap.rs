//! Parametric binomial bootstrap of any fitter that consumes count records.

use super::FitResult;
use crate::detection::CountRecord;
use crate::error::{domain, Error, Result};
use crate::seeding::rng_for;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSpread {
    pub name: String,
    pub mean: f64,
    pub std_dev: f64,
    /// Percentile interval at `confidence`.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub parameters: Vec<ParameterSpread>,
    pub confidence: f64,
    pub n_resamples: usize,
    pub n_failed: usize,
    pub seed: u64,
}

impl BootstrapSummary {
    pub fn get(&self, name: &str) -> Option<&ParameterSpread> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Each resample redraws every record's dark count from a binomial at its
/// observed fraction, using stream `i` of `seed` for resample `i`. Fails when
/// more than 20% of the refits fail.
pub fn bootstrap<F>(
    records: &[CountRecord],
    fitter: F,
    n_resamples: usize,
    seed: u64,
    confidence: f64,
    workers: usize,
) -> Result<BootstrapSummary>
where
    F: Fn(&[CountRecord]) -> Result<FitResult> + Sync,
{
    if n_resamples == 0 {
        return Err(domain("bootstrap needs at least one resample"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(domain("confidence must lie in (0, 1)"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invariant(e.to_string()))?;
    let one = |i: usize| -> Result<Vec<(String, f64)>> {
        let mut rng = rng_for(seed, i as u64);
        let resampled = records
            .iter()
            .map(|r| {
                let b = Binomial::new(r.n_trials, r.dark_fraction()).map_err(|e| domain(e.to_string()))?;
                Ok(CountRecord { n_trials: r.n_trials, n_dark: b.sample(&mut rng) })
            })
            .collect::<Result<Vec<_>>>()?;
        let fit = fitter(&resampled)?;
        Ok(fit.parameters.into_iter().map(|p| (p.name, p.value)).collect())
    };
    let results: Vec<Result<Vec<(String, f64)>>> = pool.install(|| (0..n_resamples).into_par_iter().map(one).collect());
    let ok: Vec<Vec<(String, f64)>> = results.into_iter().filter_map(|r| r.ok()).collect();
    let failed = n_resamples - ok.len();
    if failed * 5 > n_resamples || ok.is_empty() {
        return Err(Error::UnstableBootstrap { failed, total: n_resamples });
    }
    let names: Vec<String> = ok[0].iter().map(|p| p.0.clone()).collect();
    let tail = 0.5 * (1.0 - confidence);
    let parameters = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut v: Vec<f64> = ok.iter().map(|r| r[k].1).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            v.sort_by(f64::total_cmp);
            ParameterSpread {
                name: name.clone(),
                mean: m,
                std_dev: sd,
                lower: percentile(&v, tail),
                upper: percentile(&v, 1.0 - tail),
            }
        })
        .collect();
    Ok(BootstrapSummary { parameters, confidence, n_resamples, n_failed: failed, seed })
}
