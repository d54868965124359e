//! CODATA 2018 constants (SI) and unit conversions used at the interfaces.

use std::f64::consts::PI;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const E_CHARGE: f64 = 1.602_176_634e-19;

pub fn amu_to_kg(m: f64) -> f64 {
    m * ATOMIC_MASS_UNIT
}

pub fn kg_to_amu(m: f64) -> f64 {
    m / ATOMIC_MASS_UNIT
}

/// `k_B * T` for a temperature in millikelvin.
pub fn millikelvin_to_joule(t_mk: f64) -> f64 {
    BOLTZMANN * t_mk * 1e-3
}

pub fn joule_to_millikelvin(e: f64) -> f64 {
    e / BOLTZMANN * 1e3
}

/// `h * f` for a frequency in GHz.
pub fn ghz_to_joule(f_ghz: f64) -> f64 {
    PLANCK * f_ghz * 1e9
}

pub fn joule_to_ghz(e: f64) -> f64 {
    e / PLANCK * 1e-9
}

pub fn joule_to_kelvin(e: f64) -> f64 {
    e / BOLTZMANN
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_invert() {
        assert!((joule_to_millikelvin(millikelvin_to_joule(20.0)) - 20.0).abs() < 1e-12);
        assert!((joule_to_ghz(ghz_to_joule(12.6)) - 12.6).abs() < 1e-12);
        assert!((kg_to_amu(amu_to_kg(87.0)) - 87.0).abs() < 1e-12);
    }
}
