//! Constants, species descriptions and ion-atom collision rates.

pub mod constants;
pub mod species;

pub use species::{
    AtomSpec, IonSpec, PairParams, QubitKind, SpinState, CALIBRATED_GAMMA_L_OVER_N, DEFAULT_COLLISION_ENERGY_MK,
};

use crate::error::{domain, Result};
use constants::{EPSILON_0, HBAR};
use std::f64::consts::PI;

/// Reduced mass `m_a m_i / (m_a + m_i)`, in whatever mass unit the inputs use.
pub fn reduced_mass(m_a: f64, m_i: f64) -> Result<f64> {
    if !(m_a > 0.0 && m_i > 0.0) || !m_a.is_finite() || !m_i.is_finite() {
        return Err(domain(format!("masses must be positive and finite, got {m_a}, {m_i}")));
    }
    Ok(m_a * m_i / (m_a + m_i))
}

/// Polarization coefficient `C4 = alpha0 q^2 / (4 pi eps0)^2` in J m^4.
///
/// `alpha0` is in SI (C m^2 / V), `charge` in coulombs.
pub fn c4_from_polarizability(alpha0: f64, charge: f64) -> Result<f64> {
    if !(alpha0 > 0.0) {
        return Err(domain(format!("polarizability must be positive, got {alpha0}")));
    }
    let k = 4.0 * PI * EPSILON_0;
    Ok(alpha0 * charge * charge / (k * k))
}

/// Inverts [`langevin_rate`]: the `C4` that yields the given `gamma_L / n_a`
/// (m^3/s) for reduced mass `mu` (kg).
pub fn c4_from_langevin(gamma_l_over_n: f64, mu: f64) -> Result<f64> {
    if !(gamma_l_over_n > 0.0) || !(mu > 0.0) {
        return Err(domain("gamma_L/n_a and mu must be positive"));
    }
    let s = gamma_l_over_n / (2.0 * PI);
    Ok(mu * s * s)
}

/// Langevin capture rate `2 pi sqrt(C4/mu) n_a` in 1/s. Independent of energy.
pub fn langevin_rate(c4: f64, mu: f64, density: f64) -> Result<f64> {
    if !(c4 > 0.0) || !(mu > 0.0) {
        return Err(domain("C4 and mu must be positive"));
    }
    if !(density >= 0.0) {
        return Err(domain(format!("density must be non-negative, got {density}")));
    }
    Ok(2.0 * PI * (c4 / mu).sqrt() * density)
}

/// Total (glancing plus Langevin) collision rate of the `-C4/2r^4` potential,
/// including quantum forward scattering:
/// `n_a sqrt(2) pi (1 + pi^2/16) (C4/hbar)^(2/3) (E/mu)^(1/6)`.
pub fn total_collision_rate(c4: f64, mu: f64, energy: f64, density: f64) -> Result<f64> {
    if !(c4 > 0.0) || !(mu > 0.0) {
        return Err(domain("C4 and mu must be positive"));
    }
    if !(energy > 0.0) {
        return Err(domain(format!("collision energy must be positive, got {energy}")));
    }
    if !(density >= 0.0) {
        return Err(domain(format!("density must be non-negative, got {density}")));
    }
    let prefactor = 2f64.sqrt() * PI * (1.0 + PI * PI / 16.0);
    Ok(density * prefactor * (c4 / HBAR).powf(2.0 / 3.0) * (energy / mu).powf(1.0 / 6.0))
}

/// Summary row of the `rates` command.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RateTable {
    pub density_m3: f64,
    pub gamma_l: f64,
    pub gamma_l_over_n: f64,
    pub gamma_c: f64,
    pub gamma_c_over_n: f64,
    pub langevin_time_s: f64,
    pub ratio_c_over_l: f64,
}

impl PairParams {
    pub fn rate_table(&self, density: f64) -> Result<RateTable> {
        let gamma_l_over_n = langevin_rate(self.c4, self.mu, 1.0)?;
        let gamma_c_over_n = total_collision_rate(self.c4, self.mu, self.collision_energy, 1.0)?;
        let gamma_l = gamma_l_over_n * density;
        let gamma_c = gamma_c_over_n * density;
        Ok(RateTable {
            density_m3: density,
            gamma_l,
            gamma_l_over_n,
            gamma_c,
            gamma_c_over_n,
            langevin_time_s: if gamma_l > 0.0 { 1.0 / gamma_l } else { f64::INFINITY },
            ratio_c_over_l: gamma_c_over_n / gamma_l_over_n,
        })
    }
}
