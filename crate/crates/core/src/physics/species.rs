use super::constants::{amu_to_kg, ghz_to_joule, millikelvin_to_joule, E_CHARGE};
use super::{c4_from_langevin, reduced_mass};
use crate::error::{domain, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Angular momentum label `|F, m_F>` stored with doubled quantum numbers so
/// that the half-integer Zeeman doublet `m_J = +-1/2` fits the same type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinState {
    pub twice_f: i32,
    pub twice_m: i32,
}

impl SpinState {
    pub const UP: SpinState = SpinState { twice_f: 1, twice_m: 1 };
    pub const DOWN: SpinState = SpinState { twice_f: 1, twice_m: -1 };

    /// Integer `|F, m_F>`.
    pub fn new(f: i32, m: i32) -> Result<Self> {
        Self::from_twice(2 * f, 2 * m)
    }

    pub fn from_twice(twice_f: i32, twice_m: i32) -> Result<Self> {
        if twice_f < 0 || twice_m.abs() > twice_f || (twice_f - twice_m) % 2 != 0 {
            return Err(domain(format!("invalid quantum numbers F = {}/2, m = {}/2", twice_f, twice_m)));
        }
        Ok(SpinState { twice_f, twice_m })
    }

    pub fn f(&self) -> f64 {
        f64::from(self.twice_f) / 2.0
    }

    pub fn m(&self) -> f64 {
        f64::from(self.twice_m) / 2.0
    }

    /// Zeeman manifold `F = 1/2` states are written `up` / `down`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SpinState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.twice_f, self.twice_m) {
            (1, 1) => write!(f, "up"),
            (1, -1) => write!(f, "down"),
            (tf, tm) if tf % 2 == 0 => write!(f, "|{},{}>", tf / 2, tm / 2),
            (tf, tm) => write!(f, "|{}/2,{}/2>", tf, tm),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitKind {
    ZeemanTwoLevel,
    HyperfineClock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpec {
    pub isotope_label: String,
    /// Atomic mass units.
    pub mass_u: f64,
    pub qubit_kind: QubitKind,
    /// Ground-state hyperfine splitting in J (zero for the Zeeman isotope).
    pub hyperfine_splitting: f64,
    /// Zeeman splitting of the qubit in MHz.
    pub zeeman_splitting_mhz: f64,
}

impl IonSpec {
    pub fn yb174() -> Self {
        IonSpec {
            isotope_label: "174Yb+".into(),
            mass_u: 173.938_859,
            qubit_kind: QubitKind::ZeemanTwoLevel,
            hyperfine_splitting: 0.0,
            zeeman_splitting_mhz: 37.5,
        }
    }

    pub fn yb171() -> Self {
        IonSpec {
            isotope_label: "171Yb+".into(),
            mass_u: 170.936_331,
            qubit_kind: QubitKind::HyperfineClock,
            hyperfine_splitting: ghz_to_joule(12.6),
            zeeman_splitting_mhz: 0.0,
        }
    }

    pub fn mass_kg(&self) -> f64 {
        amu_to_kg(self.mass_u)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass_u > 0.0) {
            return Err(domain("ion mass must be positive"));
        }
        if !(self.hyperfine_splitting >= 0.0) || !(self.zeeman_splitting_mhz >= 0.0) {
            return Err(domain("ion splittings must be non-negative"));
        }
        Ok(())
    }

    /// Qubit states ordered (lower, upper) for the two-level description.
    pub fn qubit_states(&self) -> [SpinState; 2] {
        match self.qubit_kind {
            QubitKind::ZeemanTwoLevel => [SpinState::DOWN, SpinState::UP],
            QubitKind::HyperfineClock => [SpinState { twice_f: 0, twice_m: 0 }, SpinState { twice_f: 2, twice_m: 0 }],
        }
    }

    /// Every ground-state sublevel of the ion.
    pub fn ground_states(&self) -> Vec<SpinState> {
        match self.qubit_kind {
            QubitKind::ZeemanTwoLevel => vec![SpinState::DOWN, SpinState::UP],
            QubitKind::HyperfineClock => vec![
                SpinState { twice_f: 2, twice_m: -2 },
                SpinState { twice_f: 2, twice_m: 0 },
                SpinState { twice_f: 2, twice_m: 2 },
                SpinState { twice_f: 0, twice_m: 0 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub species_label: String,
    pub mass_u: f64,
    pub spin_state: SpinState,
    /// Density at the ion, m^-3.
    pub density: f64,
    /// Hyperfine splitting in J.
    pub hyperfine_splitting: f64,
    /// Static polarizability in C m^2 / V, if C4 is not given directly.
    pub polarizability: Option<f64>,
}

impl AtomSpec {
    /// 87Rb in `|F, m_F>` at the typical bath density of 1e18 m^-3.
    pub fn rb87(f: i32, m_f: i32) -> Result<Self> {
        if !(1..=2).contains(&f) {
            return Err(domain(format!("87Rb ground state has F = 1 or 2, got {f}")));
        }
        Ok(AtomSpec {
            species_label: "87Rb".into(),
            mass_u: 86.909_180,
            spin_state: SpinState::new(f, m_f)?,
            density: 1e18,
            hyperfine_splitting: ghz_to_joule(6.8),
            polarizability: None,
        })
    }

    pub fn mass_kg(&self) -> f64 {
        amu_to_kg(self.mass_u)
    }

    /// Fully stretched (`|m_F| = F`) in the upper hyperfine manifold.
    pub fn is_stretched(&self) -> bool {
        self.spin_state.twice_m.abs() == self.spin_state.twice_f
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass_u > 0.0) {
            return Err(domain("atom mass must be positive"));
        }
        if !(self.density >= 0.0) {
            return Err(domain("atom density must be non-negative"));
        }
        if !(self.hyperfine_splitting >= 0.0) {
            return Err(domain("atom hyperfine splitting must be non-negative"));
        }
        SpinState::from_twice(self.spin_state.twice_f, self.spin_state.twice_m)?;
        Ok(())
    }
}

/// Ion-atom pair quantities used by every rate formula (SI).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairParams {
    /// Reduced mass, kg.
    pub mu: f64,
    /// J m^4.
    pub c4: f64,
    /// Ion charge, C.
    pub charge: f64,
    /// Collision energy for energy-dependent rates, J.
    pub collision_energy: f64,
}

/// Langevin rate per density quoted for Rb + Yb+, m^3/s.
pub const CALIBRATED_GAMMA_L_OVER_N: f64 = 2.1e-15;

/// Collision energy at which the total rate is quoted, mK.
pub const DEFAULT_COLLISION_ENERGY_MK: f64 = 100.0;

impl PairParams {
    pub fn new(m_a_kg: f64, m_i_kg: f64, c4: f64, charge: f64, collision_energy: f64) -> Result<Self> {
        let mu = reduced_mass(m_a_kg, m_i_kg)?;
        let p = PairParams { mu, c4, charge, collision_energy };
        p.validate()?;
        if !(mu < m_a_kg.min(m_i_kg)) {
            return Err(domain("reduced mass must be below both masses"));
        }
        Ok(p)
    }

    /// Pair with `C4` calibrated so that `gamma_L / n_a` equals the quoted
    /// 2.1e-15 m^3/s, unless the atom carries a polarizability.
    pub fn for_species(ion: &IonSpec, atom: &AtomSpec) -> Result<Self> {
        let mu = reduced_mass(atom.mass_kg(), ion.mass_kg())?;
        let c4 = match atom.polarizability {
            Some(alpha) => super::c4_from_polarizability(alpha, E_CHARGE)?,
            None => c4_from_langevin(CALIBRATED_GAMMA_L_OVER_N, mu)?,
        };
        Self::new(atom.mass_kg(), ion.mass_kg(), c4, E_CHARGE, millikelvin_to_joule(DEFAULT_COLLISION_ENERGY_MK))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.c4 > 0.0) {
            return Err(domain("mu and C4 must be positive"));
        }
        if !(self.collision_energy > 0.0) {
            return Err(domain("collision energy must be positive"));
        }
        Ok(())
    }
}
