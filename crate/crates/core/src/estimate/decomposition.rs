//! Spin-exchange / spin-relaxation split of a two-level fit with
//! first-order error propagation.

use super::FitResult;
use crate::error::{domain, Result};
use crate::rate_model::{decompose_rates, TwoLevelRates};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateDecomposition {
    /// Rates in 1/t_L.
    pub rates: TwoLevelRates,
    /// `gamma_down,SE * T1 = 2 p_inf - 1`.
    pub se_down_times_t1: Estimate,
    /// `gamma_SR * T1 = 1 - p_inf`.
    pub sr_times_t1: Estimate,
    /// `gamma_down,SE` in 1/t_L, including the `T1`-`p_inf` covariance.
    pub se_down: Estimate,
    pub sr: Estimate,
}

/// Needs `T1` and `p_inf` in `fit`.
pub fn derive_rate_decomposition(fit: &FitResult, stretched: bool) -> Result<RateDecomposition> {
    let (t1, p) = match (fit.value("T1"), fit.value("p_inf")) {
        (Some(t), Some(p)) => (t, p),
        _ => return Err(domain("fit carries no T1 / p_inf pair")),
    };
    let var_t = fit.covariance_of("T1", "T1").unwrap_or(0.0).max(0.0);
    let var_p = fit.covariance_of("p_inf", "p_inf").unwrap_or(0.0).max(0.0);
    let cov = fit.covariance_of("T1", "p_inf").unwrap_or(0.0);
    let rates = decompose_rates(t1, p, stretched)?;

    // gradients with respect to (p, T1)
    let prop = |dp: f64, dt: f64| (dp * dp * var_p + dt * dt * var_t + 2.0 * dp * dt * cov).max(0.0).sqrt();
    let se = (2.0 * p - 1.0) / t1;
    let sr = (1.0 - p) / t1;
    Ok(RateDecomposition {
        rates,
        se_down_times_t1: Estimate { value: 2.0 * p - 1.0, sigma: 2.0 * var_p.sqrt() },
        sr_times_t1: Estimate { value: 1.0 - p, sigma: var_p.sqrt() },
        se_down: Estimate { value: se, sigma: prop(2.0 / t1, -se / t1) },
        sr: Estimate { value: sr, sigma: prop(-1.0 / t1, -sr / t1) },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn reference_fit() -> FitResult {
        FitResult::from_estimates("two_level", &[("T1", 2.50, 0.39), ("p_inf", 0.609, 0.015)], None)
    }

    #[test]
    fn quoted_values() {
        let d = derive_rate_decomposition(&reference_fit(), true).unwrap();
        assert!((d.se_down_times_t1.value - 0.218).abs() < 1e-12);
        assert!((d.se_down_times_t1.sigma - 0.030).abs() < 1e-12);
        assert!((d.sr_times_t1.value - 0.391).abs() < 1e-12);
        assert!((d.sr_times_t1.sigma - 0.015).abs() < 1e-12);
    }

    fn resampled_sd(t1: (f64, f64), p: (f64, f64), f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let nt = Normal::new(t1.0, t1.1).unwrap();
        let np = Normal::new(p.0, p.1).unwrap();
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| f(nt.sample(&mut rng), np.sample(&mut rng))).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt()
    }

    #[test]
    fn matches_resampling() {
        let d = derive_rate_decomposition(&reference_fit(), true).unwrap();
        let sd = resampled_sd((2.50, 0.39), (0.609, 0.015), |_, p| 2.0 * p - 1.0);
        assert!((d.se_down_times_t1.sigma / sd - 1.0).abs() < 0.1);
        // absolute rates: first order holds while the T1 error is small
        let fit = FitResult::from_estimates("two_level", &[("T1", 2.50, 0.10), ("p_inf", 0.609, 0.015)], None);
        let d = derive_rate_decomposition(&fit, true).unwrap();
        let sd = resampled_sd((2.50, 0.10), (0.609, 0.015), |t, p| (1.0 - p) / t);
        assert!((d.sr.sigma / sd - 1.0).abs() < 0.1, "{} {}", d.sr.sigma, sd);
    }

    #[test]
    fn trivial_cases() {
        let exact = FitResult::from_estimates("two_level", &[("T1", 2.5, 0.0), ("p_inf", 0.5, 0.0)], None);
        let d = derive_rate_decomposition(&exact, true).unwrap();
        assert_eq!(d.se_down_times_t1.value, 0.0);
        assert_eq!(d.se_down.sigma, 0.0);
        assert_eq!(d.sr.sigma, 0.0);
        assert!(derive_rate_decomposition(&exact, false).is_err());
    }

    #[test]
    fn covariance_term_enters() {
        let rho = [vec![1.0, 0.8], vec![0.8, 1.0]];
        let corr = FitResult::from_estimates("two_level", &[("T1", 2.5, 0.39), ("p_inf", 0.609, 0.015)], Some(&rho));
        let a = derive_rate_decomposition(&corr, true).unwrap();
        let b = derive_rate_decomposition(&reference_fit(), true).unwrap();
        assert!(a.sr.sigma != b.sr.sigma);
    }
}
