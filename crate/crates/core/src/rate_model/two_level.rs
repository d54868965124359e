//! Closed-form two-level relaxation.
//!
//! Rates are "out of" a state: `up.total()` depletes `|up>`. The steady state
//! is therefore `p_up_inf = down.total() / (up.total() + down.total())`.

use crate::error::{domain, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelRates {
    pub spin_exchange: f64,
    pub spin_relaxation: f64,
}

impl ChannelRates {
    pub fn new(spin_exchange: f64, spin_relaxation: f64) -> Self {
        ChannelRates { spin_exchange, spin_relaxation }
    }

    pub fn total(&self) -> f64 {
        self.spin_exchange + self.spin_relaxation
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelRates {
    /// Decay of `|up>`.
    pub up: ChannelRates,
    /// Decay of `|down>`.
    pub down: ChannelRates,
}

impl TwoLevelRates {
    pub fn new(up: ChannelRates, down: ChannelRates) -> Result<Self> {
        let r = TwoLevelRates { up, down };
        r.validate()?;
        Ok(r)
    }

    /// Out-rates without a channel split (attributed to spin relaxation).
    pub fn from_totals(out_of_up: f64, out_of_down: f64) -> Result<Self> {
        Self::new(ChannelRates::new(0.0, out_of_up), ChannelRates::new(0.0, out_of_down))
    }

    pub fn validate(&self) -> Result<()> {
        let parts =
            [self.up.spin_exchange, self.up.spin_relaxation, self.down.spin_exchange, self.down.spin_relaxation];
        if parts.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(domain("two-level rates must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.up.total() + self.down.total()
    }

    /// Longitudinal relaxation time `1 / (gamma_up + gamma_down)`.
    pub fn t1(&self) -> Result<f64> {
        let s = self.sum();
        if s > 0.0 {
            Ok(1.0 / s)
        } else {
            Err(Error::NoSteadyState)
        }
    }
}

pub fn two_level_steady_state(rates: &TwoLevelRates) -> Result<f64> {
    let s = rates.sum();
    if !(s > 0.0) {
        return Err(Error::NoSteadyState);
    }
    Ok(rates.down.total() / s)
}

/// `p_up(t) = p_up0 e^{-t/T1} + p_up_inf (1 - e^{-t/T1})`.
pub fn two_level_evolution(p_up0: f64, rates: &TwoLevelRates, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_up0) {
        return Err(domain(format!("initial population {p_up0} outside [0, 1]")));
    }
    if !(t >= 0.0) {
        return Err(domain(format!("time must be non-negative, got {t}")));
    }
    let s = rates.sum();
    if s == 0.0 {
        return Ok(p_up0);
    }
    let p_inf = rates.down.total() / s;
    let decay = (-t * s).exp();
    Ok(p_up0 * decay + p_inf * (1.0 - decay))
}

/// Splits a measured `(T1, p_up_inf)` into spin-exchange and spin-relaxation
/// rates for a bath in the stretched state that protects `|up>`:
/// `gamma_up_SE = 0` and `gamma_up_SR = gamma_down_SR`.
pub fn decompose_rates(t1: f64, p_up_inf: f64, stretched: bool) -> Result<TwoLevelRates> {
    if !stretched {
        return Err(domain(
            "rate decomposition needs the stretched-bath relations (SE protected |up>, equal SR rates)",
        ));
    }
    if !(t1 > 0.0) || !t1.is_finite() {
        return Err(domain(format!("T1 must be positive, got {t1}")));
    }
    if !(p_up_inf <= 1.0) {
        return Err(domain(format!("steady state {p_up_inf} above 1")));
    }
    if !(p_up_inf >= 0.5) {
        return Err(Error::InconsistentData(format!(
            "p_up_inf = {p_up_inf} < 0.5 would need a negative spin-exchange rate"
        )));
    }
    let sr = (1.0 - p_up_inf) / t1;
    TwoLevelRates::new(ChannelRates::new(0.0, sr), ChannelRates::new((2.0 * p_up_inf - 1.0) / t1, sr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn evolution_limits() {
        let r = TwoLevelRates::from_totals(0.3, 0.3).unwrap();
        assert_eq!(two_level_evolution(0.2, &r, 0.0).unwrap(), 0.2);
        assert!((two_level_evolution(1.0, &r, 1e3).unwrap() - 0.5).abs() < 1e-15);
        let measured = TwoLevelRates::from_totals(0.391, 0.609).unwrap();
        assert!((two_level_evolution(1.0, &measured, 1e3).unwrap() - 0.609).abs() < 1e-15);
        let frozen = TwoLevelRates::default();
        assert_eq!(two_level_evolution(0.7, &frozen, 5.0).unwrap(), 0.7);
        assert!(two_level_evolution(1.2, &r, 1.0).is_err());
    }

    #[test]
    fn steady_state_cases() {
        let eq = TwoLevelRates::from_totals(2.0, 2.0).unwrap();
        assert_eq!(two_level_steady_state(&eq).unwrap(), 0.5);
        let absorbing = TwoLevelRates::from_totals(0.0, 1.0).unwrap();
        assert_eq!(two_level_steady_state(&absorbing).unwrap(), 1.0);
        assert!(matches!(two_level_steady_state(&TwoLevelRates::default()), Err(Error::NoSteadyState)));
        let d = decompose_rates(2.50, 0.609, true).unwrap();
        assert!((two_level_steady_state(&d).unwrap() - 0.609).abs() < 1e-12);
    }

    #[test]
    fn decomposition_of_stretched_bath_row() {
        let d = decompose_rates(2.50, 0.609, true).unwrap();
        assert_eq!(d.up.spin_exchange, 0.0);
        assert!((d.down.spin_exchange * 2.50 - 0.218).abs() < 1e-12);
        assert!((d.up.spin_relaxation * 2.50 - 0.391).abs() < 1e-12);
        assert_eq!(d.up.spin_relaxation, d.down.spin_relaxation);

        let pure_se = decompose_rates(3.0, 1.0, true).unwrap();
        assert_eq!(pure_se.up.spin_relaxation, 0.0);
        assert_eq!(pure_se.down.spin_relaxation, 0.0);
        let pure_sr = decompose_rates(3.0, 0.5, true).unwrap();
        assert_eq!(pure_sr.down.spin_exchange, 0.0);

        assert!(matches!(decompose_rates(2.5, 0.49, true), Err(Error::InconsistentData(_))));
        assert!(decompose_rates(2.5, 0.7, false).is_err());
        assert!(decompose_rates(0.0, 0.7, true).is_err());
    }

    #[test]
    fn stretched_protection_without_relaxation() {
        let r = TwoLevelRates::new(ChannelRates::new(0.0, 0.0), ChannelRates::new(0.4, 0.0)).unwrap();
        for t in [0.0, 1.0, 10.0, 1e4] {
            assert_eq!(two_level_evolution(1.0, &r, t).unwrap(), 1.0);
        }
    }

    proptest! {
        #[test]
        fn decompose_recompose_identity(t1 in 0.05f64..50.0, p in 0.5f64..=1.0) {
            let d = decompose_rates(t1, p, true).unwrap();
            prop_assert!((d.t1().unwrap() - t1).abs() / t1 < 1e-12);
            prop_assert!((two_level_steady_state(&d).unwrap() - p).abs() < 1e-12);
        }

        #[test]
        fn monotone_relaxation(a in 0.0f64..3.0, b in 0.01f64..3.0, p0 in 0.0f64..=1.0) {
            let r = TwoLevelRates::from_totals(a, b).unwrap();
            let p_inf = two_level_steady_state(&r).unwrap();
            let mut last = f64::INFINITY;
            for k in 0..60 {
                let t = 0.1 * f64::from(k);
                let dev = (two_level_evolution(p0, &r, t).unwrap() - p_inf).abs();
                prop_assert!(dev <= last + 1e-15);
                last = dev;
            }
        }
    }
}
