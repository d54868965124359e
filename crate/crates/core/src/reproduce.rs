//! End-to-end synthetic pipeline for the measured relaxation table.
//!
//! For each (ion, bath) row the profile configuration is turned into a rate
//! matrix, evolved from the prepared upper state, pushed through the
//! detection model and sampled binomially. The counts are then fitted with
//! the two-level model exactly as measured data would be, and the fitted
//! numbers are compared with the reference values.

use crate::config::{Isotope, Profile, RunConfig};
use crate::detection::{forward_model, CountRecord};
use crate::error::{Error, Result};
use crate::estimate::decomposition::Estimate;
use crate::estimate::lm::LmOptions;
use crate::estimate::{
    derive_rate_decomposition, fit_contrast_decay, fit_two_level, ContrastOptions, ContrastPoint, FitResult,
    MeasurementSet, Metadata, TimedRecord,
};
use crate::physics::SpinState;
use crate::ramsey::{simulate_ramsey_mc, RamseyMcResult};
use crate::rate_model::{n_level_evolution, SpinPopulation};
use crate::seeding::{derive_seed, rng_for};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

/// One reference row. `t1` is absent where the table gives none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub profile: Profile,
    pub t1: Option<Estimate>,
    /// Steady upper population (`|up>` or all of `F = 1`).
    pub p_inf: Estimate,
    pub t2: Option<Estimate>,
}

const fn est(value: f64, sigma: f64) -> Estimate {
    Estimate { value, sigma }
}

/// The reference table, hyperfine rows first.
pub const TABLE1: [TableRow; 6] = [
    TableRow { profile: Profile::Yb171F1M1, t1: Some(est(1.73, 0.17)), p_inf: est(0.000, 0.005), t2: None },
    TableRow {
        profile: Profile::Yb171F2P2,
        t1: Some(est(3.39, 0.16)),
        p_inf: est(0.163, 0.013),
        t2: Some(est(1.4, 0.2)),
    },
    TableRow { profile: Profile::Yb174F2P2, t1: Some(est(2.50, 0.39)), p_inf: est(0.609, 0.015), t2: None },
    TableRow { profile: Profile::Yb174F2M2, t1: None, p_inf: est(0.423, 0.026), t2: None },
    TableRow { profile: Profile::Yb174F1P1, t1: Some(est(1.60, 0.24)), p_inf: est(0.563, 0.017), t2: None },
    TableRow { profile: Profile::Yb174F1M1, t1: None, p_inf: est(0.457, 0.021), t2: None },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Options {
    pub trials_per_point: u64,
    /// Synthetic repetitions per row for the coverage study; 0 skips it.
    pub repetitions: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for Table1Options {
    fn default() -> Self {
        Table1Options { trials_per_point: 3000, repetitions: 0, seed: 1, workers: 1 }
    }
}

/// Spin-exchange / spin-relaxation split, normalized to T1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeSplit {
    /// Qubit state whose spin exchange is open (`down` for `|2,2>`).
    pub open_state: String,
    pub se_times_t1: Estimate,
    pub sr_times_t1: Estimate,
}

/// Fraction of repetitions whose 1-sigma interval covers the truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    pub repetitions: usize,
    pub failed_fits: usize,
    pub t1: f64,
    pub p_inf: f64,
    /// Repetitions where the fitted `p_inf` sits on a bound.
    pub p_inf_at_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowResult {
    pub ion: String,
    pub bath: String,
    pub reference: TableRow,
    /// Generating values (borrowed T1 where the table has none).
    pub truth_t1: f64,
    pub truth_p_inf: f64,
    pub t1: Estimate,
    pub p_inf: Estimate,
    /// `|fit - truth| / sigma`.
    pub t1_pull: f64,
    pub p_inf_pull: f64,
    pub split: Option<SeSplit>,
    pub t2: Option<Estimate>,
    pub truth_t2: Option<f64>,
    pub coverage: Option<Coverage>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Report {
    pub trials_per_point: u64,
    pub seed: u64,
    pub rows: Vec<RowResult>,
}

/// Evaluation grid of the synthetic measurement (t_L).
pub fn time_grid(cfg: &RunConfig) -> Vec<f64> {
    let n = cfg.ensemble.n_points;
    (0..n).map(|k| cfg.ensemble.t_max * k as f64 / (n - 1) as f64).collect()
}

/// Expected dark fraction at each time, from the configured rate matrix.
pub fn expected_dark(cfg: &RunConfig, times: &[f64]) -> Result<Vec<f64>> {
    let rm = cfg.rate_matrix()?;
    let det = cfg.detection_model()?;
    let start = cfg.initial_trajectory()?.spin;
    let p0 = SpinPopulation::pure(rm.n_states(), start);
    let upper = cfg.upper_indices();
    times
        .iter()
        .map(|&t| {
            let p = n_level_evolution(&rm, &p0, t)?;
            let u: f64 = upper.iter().map(|&i| p.p[i]).sum();
            Ok(forward_model((1.0 - u).clamp(0.0, 1.0), &det))
        })
        .collect()
}

/// Binomial counts for one repetition; point `i` draws from stream `i` of
/// `seed`.
pub fn sample_counts(times: &[f64], dark: &[f64], n_trials: u64, seed: u64) -> Result<MeasurementSet> {
    let records = times
        .iter()
        .zip(dark)
        .enumerate()
        .map(|(i, (&t, &p))| {
            let mut rng = rng_for(seed, i as u64);
            let b = Binomial::new(n_trials, p).map_err(|e| Error::Domain(e.to_string()))?;
            Ok(TimedRecord { t_over_tl: t, record: CountRecord::new(n_trials, b.sample(&mut rng))? })
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementSet::new(records, Metadata::default())
}

/// Configuration used for a row: the profile defaults, with the reference
/// T1 where the row has one.
pub fn row_config(row: &TableRow) -> RunConfig {
    let mut cfg = row.profile.defaults();
    if let (Some(t1), Some(_)) = (row.t1, cfg.kinetics.t1) {
        cfg.kinetics.t1 = Some(t1.value);
    }
    cfg
}

/// Slow relaxation time and steady upper population implied by `cfg`.
pub fn truth_of(cfg: &RunConfig) -> Result<(f64, f64)> {
    let rm = cfg.rate_matrix()?;
    let ss = rm.steady_state()?;
    let p: f64 = cfg.upper_indices().iter().map(|&i| ss.p[i]).sum();
    let t1 = match (cfg.kinetics.t1, cfg.kinetics.four_level) {
        (Some(t1), _) => t1,
        (None, Some(r)) => 1.0 / (r.decay_from_edges + r.pump),
        _ => return Err(Error::Domain("kinetics carry no relaxation time".into())),
    };
    Ok((t1, p))
}

fn mirrored(fit: &FitResult) -> FitResult {
    let mut m = fit.clone();
    if let Some(k) = m.index("p_inf") {
        m.parameters[k].value = 1.0 - m.parameters[k].value;
        for (i, row) in m.covariance.iter_mut().enumerate() {
            if i != k {
                row[k] = -row[k];
            }
        }
        for j in 0..m.covariance[k].len() {
            if j != k {
                m.covariance[k][j] = -m.covariance[k][j];
            }
        }
    }
    m
}

/// SE/SR split for a Zeeman row; the open direction follows the bath state.
pub fn se_split(fit: &FitResult, cfg: &RunConfig) -> Result<SeSplit> {
    let rules = cfg.rules()?;
    let up_open = rules.se_connects(SpinState::UP, SpinState::DOWN);
    let down_open = rules.se_connects(SpinState::DOWN, SpinState::UP);
    if up_open && down_open {
        return Err(Error::Domain("spin exchange open in both directions".into()));
    }
    let (f, open) = if up_open { (mirrored(fit), "up") } else { (fit.clone(), "down") };
    let d = derive_rate_decomposition(&f, true)?;
    Ok(SeSplit { open_state: open.into(), se_times_t1: d.se_down_times_t1, sr_times_t1: d.sr_times_t1 })
}

/// Contrast points of a Ramsey Monte Carlo run. Points with zero binomial
/// error (no decay yet, or none left) carry no weight and are dropped.
pub fn mc_contrast_points(mc: &RamseyMcResult) -> Vec<ContrastPoint> {
    mc.t_over_tl
        .iter()
        .zip(&mc.contrast)
        .zip(&mc.contrast_stderr)
        .filter(|(_, s)| **s > 0.0)
        .map(|((t, c), s)| ContrastPoint { t_over_tl: *t, contrast: *c, sigma: *s })
        .collect()
}

pub fn exposure_grid(cfg: &RunConfig) -> Vec<f64> {
    let n = cfg.ramsey.n_exposures;
    (0..n).map(|k| cfg.ramsey.exposure_max * k as f64 / (n - 1) as f64).collect()
}

/// Ramsey Monte Carlo of the configured clock relaxation plus contrast fit.
pub fn ramsey_t2(cfg: &RunConfig, seed: u64, workers: usize) -> Result<(RamseyMcResult, FitResult)> {
    let relax = cfg.clock_relaxation()?;
    let mc = simulate_ramsey_mc(cfg.ramsey.contrast0, &relax, &exposure_grid(cfg), cfg.ramsey.size, seed, workers)?;
    let fit = fit_contrast_decay(&mc_contrast_points(&mc), &ContrastOptions::default())?;
    Ok((mc, fit))
}

fn estimate(fit: &FitResult, name: &str) -> Estimate {
    Estimate { value: fit.value(name).unwrap_or(f64::NAN), sigma: fit.sigma(name).unwrap_or(f64::NAN) }
}

fn pull(e: &Estimate, truth: f64) -> f64 {
    (e.value - truth).abs() / e.sigma
}

fn coverage(
    times: &[f64],
    dark: &[f64],
    cfg: &RunConfig,
    truth: (f64, f64),
    opts: &Table1Options,
    row_seed: u64,
) -> Result<Coverage> {
    let det = cfg.detection_model()?;
    let one = |r: usize| -> Result<Option<(bool, bool, bool)>> {
        let data = sample_counts(times, dark, opts.trials_per_point, derive_seed(row_seed, 1 + r as u64))?;
        match fit_two_level(&data, &det, &LmOptions::default()) {
            Ok(fit) => {
                let (t, p) = (estimate(&fit, "T1"), estimate(&fit, "p_inf"));
                Ok(Some((pull(&t, truth.0) <= 1.0, pull(&p, truth.1) <= 1.0, fit.has_flag("p_inf_at_bound"))))
            }
            Err(Error::NonConvergence { .. } | Error::Degenerate { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let outcomes: Vec<Option<(bool, bool, bool)>> = if opts.workers <= 1 {
        (0..opts.repetitions).map(one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
        pool.install(|| (0..opts.repetitions).into_par_iter().map(one).collect::<Result<Vec<_>>>())?
    };
    let ok: Vec<(bool, bool, bool)> = outcomes.iter().flatten().copied().collect();
    let n = ok.len().max(1) as f64;
    Ok(Coverage {
        repetitions: opts.repetitions,
        failed_fits: opts.repetitions - ok.len(),
        t1: ok.iter().filter(|o| o.0).count() as f64 / n,
        p_inf: ok.iter().filter(|o| o.1).count() as f64 / n,
        p_inf_at_bound: ok.iter().filter(|o| o.2).count(),
    })
}

pub fn run_row(row: &TableRow, index: usize, opts: &Table1Options) -> Result<RowResult> {
    let cfg = row_config(row);
    let times = time_grid(&cfg);
    let dark = expected_dark(&cfg, &times)?;
    let truth = truth_of(&cfg)?;
    let row_seed = derive_seed(opts.seed, index as u64);
    let data = sample_counts(&times, &dark, opts.trials_per_point, derive_seed(row_seed, 0))?;
    let fit = fit_two_level(&data, &cfg.detection_model()?, &LmOptions::default())?;
    let (t1, p_inf) = (estimate(&fit, "T1"), estimate(&fit, "p_inf"));
    let split = match cfg.ion.isotope {
        Isotope::Yb174 => Some(se_split(&fit, &cfg)?),
        Isotope::Yb171 => None,
    };
    let (t2, truth_t2) = match row.t2 {
        Some(_) => {
            let (_, f) = ramsey_t2(&cfg, derive_seed(row_seed, u64::MAX), opts.workers)?;
            (Some(estimate(&f, "T2")), Some(1.0 / cfg.clock_relaxation()?.superposition_rate()))
        }
        None => (None, None),
    };
    let coverage =
        if opts.repetitions > 0 { Some(coverage(&times, &dark, &cfg, truth, opts, row_seed)?) } else { None };
    let ion = match cfg.ion.isotope {
        Isotope::Yb174 => "174Yb+",
        Isotope::Yb171 => "171Yb+",
    };
    Ok(RowResult {
        ion: ion.into(),
        bath: format!("|{},{}>", cfg.bath.f, cfg.bath.m),
        reference: *row,
        truth_t1: truth.0,
        truth_p_inf: truth.1,
        t1_pull: pull(&t1, truth.0),
        p_inf_pull: pull(&p_inf, truth.1),
        t1,
        p_inf,
        split,
        t2,
        truth_t2,
        coverage,
        flags: fit.flags,
    })
}

pub fn run_table1(opts: &Table1Options) -> Result<Table1Report> {
    let rows = TABLE1.iter().enumerate().map(|(i, r)| run_row(r, i, opts)).collect::<Result<Vec<_>>>()?;
    Ok(Table1Report { trials_per_point: opts.trials_per_point, seed: opts.seed, rows })
}

fn pm(e: &Estimate) -> String {
    format!("{:.3} ± {:.3}", e.value, e.sigma)
}

impl Table1Report {
    /// Plain-text comparison, one line per row.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<7} {:<7} | {:<14} {:<16} | {:<14} {:<16} | {:<28} | {}\n",
            "ion", "bath", "T1 ref", "T1 fit", "p_inf ref", "p_inf fit", "SE*T1 / SR*T1", "T2 ref / fit"
        );
        for r in &self.rows {
            let t1p = r.reference.t1.map(|e| pm(&e)).unwrap_or_else(|| format!("({:.2})", r.truth_t1));
            let split = r
                .split
                .as_ref()
                .map(|d| format!("{}: {} / {:.3}", d.open_state, pm(&d.se_times_t1), d.sr_times_t1.value))
                .unwrap_or_default();
            let t2 = match (r.reference.t2, r.t2) {
                (Some(p), Some(f)) => format!("{} / {}", pm(&p), pm(&f)),
                _ => String::new(),
            };
            s.push_str(&format!(
                "{:<7} {:<7} | {:<14} {:<16} | {:<14} {:<16} | {:<28} | {}\n",
                r.ion,
                r.bath,
                t1p,
                pm(&r.t1),
                pm(&r.reference.p_inf),
                pm(&r.p_inf),
                split,
                t2
            ));
        }
        if self.rows.iter().any(|r| r.coverage.is_some()) {
            s.push_str("\n1-sigma coverage over repetitions\n");
            for r in &self.rows {
                if let Some(c) = &r.coverage {
                    s.push_str(&format!(
                        "{:<7} {:<7} | T1 {:.3}  p_inf {:.3}  (n = {}, failed {}, p_inf at bound {})\n",
                        r.ion, r.bath, c.t1, c.p_inf, c.repetitions, c.failed_fits, c.p_inf_at_bound
                    ));
                }
            }
        }
        s.push_str("(T1 in parentheses: not given for this row, taken from the same bath manifold)\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_truth_matches_table() {
        for row in &TABLE1 {
            let (t1, p) = truth_of(&row_config(row)).unwrap();
            if let Some(pt) = row.t1 {
                assert!((t1 - pt.value).abs() < 1e-12, "{:?}", row.profile);
            }
            assert!((p - row.p_inf.value).abs() < 1e-9, "{:?}: {p}", row.profile);
        }
    }

    #[test]
    fn curves_relax_to_the_steady_state() {
        for row in &TABLE1 {
            let cfg = row_config(row);
            let det = cfg.detection_model().unwrap();
            let (t1, p) = truth_of(&cfg).unwrap();
            let d = expected_dark(&cfg, &[0.0, t1, 60.0 * t1]).unwrap();
            assert!((d[0] - forward_model(0.0, &det)).abs() < 1e-12);
            let mid = p + (1.0 - p) * (-1.0f64).exp();
            assert!((d[1] - forward_model(1.0 - mid, &det)).abs() < 1e-9, "{:?}", row.profile);
            assert!((d[2] - forward_model(1.0 - p, &det)).abs() < 1e-12);
        }
    }

    #[test]
    fn mirrored_split_of_the_down_protected_bath() {
        let row = &TABLE1[3];
        let cfg = row_config(row);
        let fit = FitResult::from_estimates("two_level", &[("T1", 2.5, 0.3), ("p_inf", 0.423, 0.026)], None);
        let s = se_split(&fit, &cfg).unwrap();
        assert_eq!(s.open_state, "up");
        assert!((s.se_times_t1.value - 0.154).abs() < 1e-12);
        assert!((s.sr_times_t1.value - 0.423).abs() < 1e-12);
    }

    #[test]
    fn mirror_negates_cross_covariance() {
        let corr = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
        let fit = FitResult::from_estimates("x", &[("T1", 2.0, 0.2), ("p_inf", 0.3, 0.1)], Some(&corr));
        let m = mirrored(&fit);
        assert!((m.covariance_of("T1", "p_inf").unwrap() + fit.covariance_of("T1", "p_inf").unwrap()).abs() < 1e-15);
        assert_eq!(m.covariance_of("p_inf", "p_inf"), fit.covariance_of("p_inf", "p_inf"));
        assert!((m.value("p_inf").unwrap() - 0.7).abs() < 1e-15);
    }
}
