//! Analytic energy balance per Langevin collision and the spin temperature.

use crate::error::{domain, Error, Result};
use crate::physics::constants::BOLTZMANN;

/// Mean fractional energy loss of the ion per elastic collision with an atom
/// at rest: `2 m_a m_i / (m_a + m_i)^2`.
pub fn cooling_fraction(m_a: f64, m_i: f64) -> f64 {
    2.0 * m_a * m_i / (m_a + m_i).powi(2)
}

/// Kinetic energy handed to the ion when the atom releases `e_a_hfs`:
/// `e_a_hfs m_a / (m_a + m_i)`.
pub fn heating_per_flip(e_a_hfs: f64, m_a: f64, m_i: f64) -> f64 {
    e_a_hfs * m_a / (m_a + m_i)
}

/// Fixed point of `E -> E (1 - kappa) + epsilon * heat`, i.e.
/// `epsilon E_a (m_a + m_i) / (2 m_i)`.
pub fn steady_energy_analytic(epsilon: f64, m_a: f64, m_i: f64, e_a_hfs: f64) -> Result<f64> {
    if !(m_a > 0.0 && m_i > 0.0) {
        return Err(domain("masses must be positive"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(domain(format!("epsilon {epsilon} outside [0, 1]")));
    }
    Ok(epsilon * e_a_hfs * (m_a + m_i) / (2.0 * m_i))
}

/// Exact ensemble mean energy after `t` Langevin times for the mean-energy
/// update without a floor: Poisson-many steps of the linear recursion.
pub fn mean_energy_transient(e0: f64, steady: f64, kappa: f64, t_over_tl: f64) -> f64 {
    steady + (e0 - steady) * (-kappa * t_over_tl).exp()
}

/// Spin temperature from `p1/p0 = 3 exp(-E_hfs / k_B T_s)`, in kelvin.
pub fn spin_temperature(p1: f64, e_hfs: f64) -> Result<f64> {
    if !(p1 > 0.0) {
        return Err(domain(format!("upper population must be positive, got {p1}")));
    }
    if p1 >= 0.75 {
        return Err(Error::NoFiniteTemperature(p1));
    }
    let ratio = 3.0 * (1.0 - p1) / p1;
    Ok(e_hfs / BOLTZMANN / ratio.ln())
}
