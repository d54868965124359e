//! Ramsey interrogation of the hyperfine clock transition.
//!
//! Any spin-changing collision of either clock state destroys the
//! superposition; elastic collisions leave it intact. Pulses are
//! instantaneous, and the finite visibility without the bath is carried by
//! the baseline contrast `C0`.

use crate::detection::CountRecord;
use crate::error::{domain, Result};
use crate::physics::constants::PLANCK;
use crate::seeding::{exp_waiting, rng_for};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseySettings {
    /// Free-evolution time between the pulses, s.
    pub wait_time: f64,
    /// Contrast without collisions.
    pub contrast0: f64,
    /// Fringe phase offset, rad.
    pub phase: f64,
    /// Coherence decay rate, 1/t_L.
    pub decoherence_rate: f64,
    /// Interaction time with the bath, t_L.
    pub exposure: f64,
}

impl Default for RamseySettings {
    fn default() -> Self {
        RamseySettings { wait_time: 27e-3, contrast0: 0.55, phase: 0.0, decoherence_rate: 0.0, exposure: 0.0 }
    }
}

impl RamseySettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.wait_time > 0.0) {
            return Err(domain("Ramsey wait time must be positive"));
        }
        if !(0.0..=1.0).contains(&self.contrast0) {
            return Err(domain("baseline contrast must lie in [0, 1]"));
        }
        if !(self.decoherence_rate >= 0.0) || !(self.exposure >= 0.0) {
            return Err(domain("decoherence rate and exposure must be non-negative"));
        }
        Ok(())
    }

    /// Contrast after `exposure` in the bath.
    pub fn contrast(&self) -> f64 {
        self.contrast0 * (-self.decoherence_rate * self.exposure).exp()
    }

    pub fn fringe_period(&self) -> f64 {
        1.0 / self.wait_time
    }
}

/// `1/2 + (C/2) cos(2 pi delta T_R + phi)`.
pub fn fringe_probability(delta_hz: f64, settings: &RamseySettings) -> f64 {
    0.5 + 0.5 * settings.contrast() * (TAU * delta_hz * settings.wait_time + settings.phase).cos()
}

/// `C0 exp(-t / T2)`.
pub fn contrast_decay(t: f64, contrast0: f64, t2: f64) -> Result<f64> {
    if !(t2 > 0.0) {
        return Err(domain(format!("T2 must be positive, got {t2}")));
    }
    Ok(contrast0 * (-t / t2).exp())
}

/// Spin-changing collision probabilities of the two clock states, per
/// Langevin collision (equivalently, rates in 1/t_L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockRelaxation {
    pub upper: f64,
    pub lower: f64,
}

impl ClockRelaxation {
    /// Rate at which the superposition suffers its first spin-changing
    /// collision: a collision that would move either component ends the
    /// coherence.
    pub fn superposition_rate(&self) -> f64 {
        self.upper + self.lower
    }

    /// Equal split giving the requested superposition rate.
    pub fn symmetric(total: f64) -> Self {
        ClockRelaxation { upper: 0.5 * total, lower: 0.5 * total }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyMcResult {
    pub t_over_tl: Vec<f64>,
    pub survival: Vec<f64>,
    pub contrast: Vec<f64>,
    pub contrast_stderr: Vec<f64>,
    pub superposition_rate: f64,
    pub n_trajectories: usize,
}

/// Time (t_L) of the first spin-changing collision of one trajectory.
fn first_spin_change<R: Rng + ?Sized>(rng: &mut R, relax: &ClockRelaxation, horizon: f64) -> f64 {
    let mut t = 0.0;
    loop {
        t += exp_waiting(rng, 1.0);
        if t > horizon {
            return f64::INFINITY;
        }
        if rng.gen::<f64>() < relax.upper + relax.lower {
            return t;
        }
    }
}

/// Collision-resolved Monte Carlo of the Ramsey contrast on a grid of
/// exposures (t_L). Contrast is `C0` times the fraction of trajectories
/// without a spin-changing collision.
pub fn simulate_ramsey_mc(
    contrast0: f64,
    relax: &ClockRelaxation,
    grid: &[f64],
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<RamseyMcResult> {
    if n == 0 {
        return Err(domain("need at least one trajectory"));
    }
    if !(relax.upper >= 0.0 && relax.lower >= 0.0 && relax.superposition_rate() <= 1.0) {
        return Err(domain("per-collision relaxation probabilities must be non-negative and sum to at most 1"));
    }
    if !(0.0..=1.0).contains(&contrast0) {
        return Err(domain("baseline contrast must lie in [0, 1]"));
    }
    let horizon = grid.iter().copied().fold(0.0, f64::max);
    let count = |range: std::ops::Range<usize>| -> Vec<u64> {
        let mut surv = vec![0u64; grid.len()];
        for i in range {
            let mut rng = rng_for(seed, i as u64);
            let tau = first_spin_change(&mut rng, relax, horizon);
            for (k, &t) in grid.iter().enumerate() {
                if tau > t {
                    surv[k] += 1;
                }
            }
        }
        surv
    };
    const BLOCK: usize = 4096;
    let blocks: Vec<std::ops::Range<usize>> =
        (0..n.div_ceil(BLOCK)).map(|b| b * BLOCK..((b + 1) * BLOCK).min(n)).collect();
    let partial: Vec<Vec<u64>> = if workers <= 1 {
        blocks.into_iter().map(count).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| crate::Error::Invariant(format!("thread pool: {e}")))?;
        pool.install(|| blocks.into_par_iter().map(count).collect())
    };
    let mut surv = vec![0u64; grid.len()];
    for p in &partial {
        for (a, b) in surv.iter_mut().zip(p) {
            *a += b;
        }
    }
    let nf = n as f64;
    let survival: Vec<f64> = surv.iter().map(|&s| s as f64 / nf).collect();
    Ok(RamseyMcResult {
        t_over_tl: grid.to_vec(),
        contrast: survival.iter().map(|s| contrast0 * s).collect(),
        contrast_stderr: survival.iter().map(|s| contrast0 * (s * (1.0 - s) / nf).sqrt()).collect(),
        survival,
        superposition_rate: relax.superposition_rate(),
        n_trajectories: n,
    })
}

/// Absolute frequency (Hz) corresponding to a fractional shift of `E_hfs / h`.
pub fn fractional_to_absolute(fraction: f64, e_hfs: f64) -> f64 {
    fraction * e_hfs / PLANCK
}

/// Fractional shift of `E_hfs / h` corresponding to `resolution_hz`.
pub fn shift_bound(resolution_hz: f64, e_hfs: f64) -> Result<f64> {
    if !(resolution_hz >= 0.0) || !(e_hfs > 0.0) {
        return Err(domain("resolution must be non-negative and E_hfs positive"));
    }
    Ok(resolution_hz * PLANCK / e_hfs)
}

/// Binomially sampled fringe scan: dark counts at each detuning.
pub fn synthesize_fringe_scan(
    settings: &RamseySettings,
    detunings: &[f64],
    n_trials: u64,
    seed: u64,
) -> Result<Vec<(f64, CountRecord)>> {
    settings.validate()?;
    detunings
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let p = fringe_probability(d, settings).clamp(0.0, 1.0);
            let mut rng = rng_for(seed, k as u64);
            let bin = Binomial::new(n_trials, p).map_err(|e| domain(e.to_string()))?;
            Ok((d, CountRecord::new(n_trials, bin.sample(&mut rng))?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::constants::ghz_to_joule;
    use proptest::prelude::*;

    #[test]
    fn fringe_cases() {
        let full = RamseySettings { contrast0: 1.0, ..Default::default() };
        assert!((fringe_probability(0.0, &full) - 1.0).abs() < 1e-15);
        let s = RamseySettings::default();
        assert!((s.fringe_period() - 37.037).abs() < 1e-3);
        let p0 = fringe_probability(3.0, &full);
        assert!((fringe_probability(3.0 + s.fringe_period(), &full) - p0).abs() < 1e-12);
        let dead = RamseySettings { contrast0: 0.0, ..Default::default() };
        assert_eq!(fringe_probability(11.0, &dead), 0.5);
    }

    #[test]
    fn contrast_decay_cases() {
        assert_eq!(contrast_decay(0.0, 0.55, 1.4).unwrap(), 0.55);
        assert!((contrast_decay(1.4, 0.55, 1.4).unwrap() - 0.55 / std::f64::consts::E).abs() < 1e-15);
        assert!((contrast_decay(1.4, 0.55, 1.4).unwrap() - 0.2023).abs() < 1e-4);
        assert!(contrast_decay(1.0, 0.55, 0.0).is_err());
    }

    #[test]
    fn shift_bound_cases() {
        let e = ghz_to_joule(12.6);
        assert!((fractional_to_absolute(4e-11, e) - 0.504).abs() < 1e-12);
        assert_eq!(shift_bound(0.0, e).unwrap(), 0.0);
        assert!((shift_bound(fractional_to_absolute(4e-11, e), e).unwrap() - 4e-11).abs() < 1e-24);
    }

    #[test]
    fn no_collisions_keeps_baseline() {
        let r = simulate_ramsey_mc(0.55, &ClockRelaxation::symmetric(0.0), &[0.0, 5.0], 1000, 1, 1).unwrap();
        assert_eq!(r.contrast, vec![0.55, 0.55]);
    }

    #[test]
    fn survival_is_exponential() {
        let relax = ClockRelaxation { upper: 0.6, lower: 0.1 };
        let grid = [0.0, 0.5, 1.0, 2.0, 3.0];
        let n = 100_000;
        let r = simulate_ramsey_mc(0.55, &relax, &grid, n, 3, 4).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let exact = (-0.7 * t).exp();
            let se = (exact * (1.0 - exact) / n as f64).sqrt().max(1e-9);
            assert!((r.survival[k] - exact).abs() < 3.0 * se, "t {t}");
        }
        let serial = simulate_ramsey_mc(0.55, &relax, &grid, n, 3, 1).unwrap();
        assert_eq!(serial, r);
    }

    proptest! {
        #[test]
        fn fringe_within_envelope(d in -500.0f64..500.0, c in 0.0f64..=1.0, phi in -7.0f64..7.0) {
            let s = RamseySettings { contrast0: c, phase: phi, ..Default::default() };
            let p = fringe_probability(d, &s);
            prop_assert!(p >= 0.5 - c / 2.0 - 1e-15 && p <= 0.5 + c / 2.0 + 1e-15);
        }
    }
}
