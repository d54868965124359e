//! Run configuration: a TOML document layered over a named profile.
//!
//! Every key is optional. The `profile` key picks the defaults (isotope,
//! bath state, detection table, kinetics), the remaining keys override them.
//! Unknown keys and invalid values are reported with the dotted path of the
//! offending field.

use crate::collision_mc::{BranchingConfig, EnergyMode, Kinematics, TrajectoryState};
use crate::detection::{DetectionModel, DetectionPreset};
use crate::error::{Error, Result};
use crate::physics::constants::{amu_to_kg, ghz_to_joule, millikelvin_to_joule};
use crate::physics::{c4_from_langevin, reduced_mass, AtomSpec, IonSpec, PairParams, QubitKind, RateTable, SpinState};
use crate::ramsey::ClockRelaxation;
use crate::rate_model::{build_rule_set, decompose_for_bath, ChannelRuleSet, FourLevelRates, RateMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    /// 174Yb+ Zeeman qubit, bath in |2,2>.
    #[serde(rename = "yb174-f2p2")]
    Yb174F2P2,
    /// 174Yb+ Zeeman qubit, bath in |2,-2>.
    #[serde(rename = "yb174-f2m2")]
    Yb174F2M2,
    /// 174Yb+ Zeeman qubit, bath in |1,1>.
    #[serde(rename = "yb174-f1p1")]
    Yb174F1P1,
    /// 174Yb+ Zeeman qubit, bath in |1,-1>.
    #[serde(rename = "yb174-f1m1")]
    Yb174F1M1,
    /// 171Yb+ hyperfine ion, bath in |1,-1>.
    #[serde(rename = "yb171-f1m1")]
    Yb171F1M1,
    /// 171Yb+ hyperfine ion, bath in |2,2>.
    #[serde(rename = "yb171-f2p2")]
    Yb171F2P2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Isotope {
    Yb174,
    Yb171,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KineticsModel {
    TwoLevel,
    FourLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonConfig {
    pub isotope: Isotope,
    pub mass_u: f64,
    pub zeeman_splitting_mhz: f64,
    pub hyperfine_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub f: i32,
    pub m: i32,
    pub mass_u: f64,
    pub density_m3: f64,
    pub hyperfine_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    /// Langevin rate per density used to calibrate C4, m^3/s.
    pub gamma_l_over_n_m3s: f64,
    pub collision_energy_mk: f64,
    /// Overrides the calibration, J m^4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c4: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsConfig {
    pub model: KineticsModel,
    /// Initial ion state label (`up`, `down`, `|1,0>`, ...).
    pub initial_state: String,
    /// Two-level: T1 in t_L.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    /// Two-level: steady upper-state population.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_inf: Option<f64>,
    /// Four-level: rates in 1/t_L.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub four_level: Option<FourLevelRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub mode: EnergyMode,
    /// Hyperfine-flip probability per Langevin collision.
    pub epsilon: f64,
    pub initial_mk: f64,
    pub floor_mk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    pub preset: DetectionPreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_dark_given_down: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_dark_given_up: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub size: usize,
    /// Last grid time, t_L.
    pub t_max: f64,
    pub n_points: usize,
    /// Trials per time point of the emitted count records.
    pub trials_per_point: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseyConfig {
    pub wait_time_s: f64,
    pub contrast0: f64,
    pub detuning_half_span_hz: f64,
    pub n_detunings: usize,
    pub trials_per_point: u64,
    /// Longest bath exposure, t_L.
    pub exposure_max: f64,
    pub n_exposures: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub ion: IonConfig,
    pub bath: BathConfig,
    pub pair: PairConfig,
    pub kinetics: KineticsConfig,
    pub energy: EnergyConfig,
    pub detection: DetectionConfig,
    pub ensemble: EnsembleConfig,
    pub ramsey: RamseyConfig,
}

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

impl Profile {
    pub const ALL: [Profile; 6] = [
        Profile::Yb174F2P2,
        Profile::Yb174F2M2,
        Profile::Yb174F1P1,
        Profile::Yb174F1M1,
        Profile::Yb171F1M1,
        Profile::Yb171F2P2,
    ];

    pub fn name(&self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
    }

    pub fn bath_state(&self) -> (i32, i32) {
        match self {
            Profile::Yb174F2P2 | Profile::Yb171F2P2 => (2, 2),
            Profile::Yb174F2M2 => (2, -2),
            Profile::Yb174F1P1 => (1, 1),
            Profile::Yb174F1M1 | Profile::Yb171F1M1 => (1, -1),
        }
    }

    pub fn isotope(&self) -> Isotope {
        match self {
            Profile::Yb171F1M1 | Profile::Yb171F2P2 => Isotope::Yb171,
            _ => Isotope::Yb174,
        }
    }

    pub fn detection(&self) -> DetectionPreset {
        match self {
            Profile::Yb174F2P2 | Profile::Yb174F2M2 => DetectionPreset::Yb174F2Bath,
            Profile::Yb174F1P1 | Profile::Yb174F1M1 => DetectionPreset::Yb174F1Bath,
            Profile::Yb171F1M1 | Profile::Yb171F2P2 => DetectionPreset::Yb171Hyperfine,
        }
    }

    /// Kinetics of the profile. The Zeeman rows use the measured
    /// `(T1, p_inf)`; rows without a quoted T1 borrow it from the row
    /// with the same bath manifold. The hyperfine rows use four-level rates
    /// with uniform decay out of `F = 1`, which makes the slow relaxation
    /// time equal to the measured T1 and the steady `F = 1` population equal
    /// to the measured value; the `|1,0>` outflow is set so that the clock
    /// superposition (`|1,0>` plus `|0,0>` outflow) decays at `1 / 1.4` per
    /// t_L.
    pub fn kinetics(&self) -> KineticsConfig {
        let two = |t1: f64, p: f64| KineticsConfig {
            model: KineticsModel::TwoLevel,
            initial_state: "up".into(),
            t1: Some(t1),
            p_inf: Some(p),
            four_level: None,
        };
        match self {
            Profile::Yb174F2P2 => two(2.50, 0.609),
            Profile::Yb174F2M2 => two(2.50, 0.423),
            Profile::Yb174F1P1 => two(1.60, 0.563),
            Profile::Yb174F1M1 => two(1.60, 0.457),
            Profile::Yb171F1M1 => {
                let d = 1.0 / 1.73;
                KineticsConfig {
                    model: KineticsModel::FourLevel,
                    initial_state: "|1,0>".into(),
                    t1: None,
                    p_inf: None,
                    four_level: Some(FourLevelRates {
                        transfer_to_minus: 0.25,
                        transfer_to_plus: 0.05,
                        transfer_back: 0.3,
                        decay_from_center: d,
                        decay_from_edges: d,
                        pump: 0.0,
                    }),
                }
            }
            Profile::Yb171F2P2 => {
                let (t1, p1, t2) = (3.39, 0.163, 1.4);
                let pump = p1 / t1;
                let d = (1.0 - p1) / t1;
                let transfer = 1.0 / t2 - pump - d;
                KineticsConfig {
                    model: KineticsModel::FourLevel,
                    initial_state: "|1,0>".into(),
                    t1: None,
                    p_inf: None,
                    four_level: Some(FourLevelRates {
                        transfer_to_minus: 0.2,
                        transfer_to_plus: transfer - 0.2,
                        transfer_back: 0.3,
                        decay_from_center: d,
                        decay_from_edges: d,
                        pump,
                    }),
                }
            }
        }
    }

    pub fn defaults(&self) -> RunConfig {
        let (f, m) = self.bath_state();
        let ion = match self.isotope() {
            Isotope::Yb174 => IonSpec::yb174(),
            Isotope::Yb171 => IonSpec::yb171(),
        };
        RunConfig {
            profile: *self,
            seed: 1,
            ion: IonConfig {
                isotope: self.isotope(),
                mass_u: ion.mass_u,
                zeeman_splitting_mhz: ion.zeeman_splitting_mhz,
                hyperfine_ghz: if self.isotope() == Isotope::Yb171 { 12.6 } else { 0.0 },
            },
            bath: BathConfig { f, m, mass_u: 86.909_180, density_m3: 1e18, hyperfine_ghz: 6.8 },
            pair: PairConfig {
                gamma_l_over_n_m3s: crate::physics::CALIBRATED_GAMMA_L_OVER_N,
                collision_energy_mk: crate::physics::DEFAULT_COLLISION_ENERGY_MK,
                c4: None,
            },
            kinetics: self.kinetics(),
            energy: EnergyConfig { mode: EnergyMode::SampledAngle, epsilon: 1.0, initial_mk: 0.5, floor_mk: 0.0 },
            detection: DetectionConfig { preset: self.detection(), eta_dark_given_down: None, eta_dark_given_up: None },
            ensemble: EnsembleConfig { size: 10_000, t_max: 10.0, n_points: 41, trials_per_point: 3000 },
            ramsey: RamseyConfig {
                wait_time_s: 27e-3,
                contrast0: 0.55,
                detuning_half_span_hz: 60.0,
                n_detunings: 41,
                trials_per_point: 3000,
                exposure_max: 4.0,
                n_exposures: 9,
                size: 100_000,
            },
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Profile::Yb174F2P2.defaults()
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Parses a TOML document (possibly empty) over its profile defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table =
            text.parse().map_err(|e: toml::de::Error| cfg_err("<document>", e.message().to_string()))?;
        let profile = match user.get("profile") {
            None => Profile::Yb174F2P2,
            Some(v) => Profile::deserialize(v.clone()).map_err(|_| {
                let names: Vec<String> = Profile::ALL.iter().map(|p| p.name()).collect();
                cfg_err("profile", format!("unknown profile {v}, expected one of {}", names.join(", ")))
            })?,
        };
        let mut merged = toml::Table::try_from(profile.defaults())
            .map_err(|e| Error::Invariant(format!("default config does not serialize: {e}")))?;
        merge(&mut merged, user);
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(merged)).map_err(|e| {
            let path = e.path().to_string();
            cfg_err(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(cfg_err(path, format!("must be positive, got {v}")))
            }
        };
        let prob = |path: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(cfg_err(path, format!("must lie in [0, 1], got {v}")))
            }
        };
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return Err(cfg_err("seed", format!("must be at most {}, got {}", i64::MAX, self.seed)));
        }
        pos("ion.mass_u", self.ion.mass_u)?;
        if !(self.ion.zeeman_splitting_mhz >= 0.0) {
            return Err(cfg_err("ion.zeeman_splitting_mhz", "must be non-negative"));
        }
        match self.ion.isotope {
            Isotope::Yb171 => pos("ion.hyperfine_ghz", self.ion.hyperfine_ghz)?,
            Isotope::Yb174 if self.ion.hyperfine_ghz != 0.0 => {
                return Err(cfg_err("ion.hyperfine_ghz", "the Zeeman isotope has no ground hyperfine splitting"))
            }
            Isotope::Yb174 => {}
        }
        if !(1..=2).contains(&self.bath.f) {
            return Err(cfg_err("bath.f", format!("87Rb ground state has F = 1 or 2, got {}", self.bath.f)));
        }
        if self.bath.m.abs() > self.bath.f {
            return Err(cfg_err("bath.m", format!("|m| must not exceed F = {}", self.bath.f)));
        }
        pos("bath.mass_u", self.bath.mass_u)?;
        pos("bath.density_m3", self.bath.density_m3)?;
        if !(self.bath.hyperfine_ghz >= 0.0) {
            return Err(cfg_err("bath.hyperfine_ghz", "must be non-negative"));
        }
        pos("pair.gamma_l_over_n_m3s", self.pair.gamma_l_over_n_m3s)?;
        pos("pair.collision_energy_mk", self.pair.collision_energy_mk)?;
        if let Some(c4) = self.pair.c4 {
            pos("pair.c4", c4)?;
        }

        let k = &self.kinetics;
        match (k.model, self.ion.isotope) {
            (KineticsModel::TwoLevel, Isotope::Yb174) => {
                let t1 = k.t1.ok_or_else(|| cfg_err("kinetics.t1", "required by the two-level model"))?;
                pos("kinetics.t1", t1)?;
                let p = k.p_inf.ok_or_else(|| cfg_err("kinetics.p_inf", "required by the two-level model"))?;
                prob("kinetics.p_inf", p)?;
                self.two_level_rates().map_err(|e| cfg_err("kinetics.p_inf", e.to_string()))?;
            }
            (KineticsModel::FourLevel, Isotope::Yb171) => {
                let r =
                    k.four_level.ok_or_else(|| cfg_err("kinetics.four_level", "required by the four-level model"))?;
                r.validate().map_err(|e| cfg_err("kinetics.four_level", e.to_string()))?;
            }
            (KineticsModel::TwoLevel, Isotope::Yb171) => {
                return Err(cfg_err("kinetics.model", "the hyperfine ion needs the four-level model"))
            }
            (KineticsModel::FourLevel, Isotope::Yb174) => {
                return Err(cfg_err("kinetics.model", "the Zeeman ion needs the two-level model"))
            }
        }
        if !self.state_labels().contains(&k.initial_state) {
            return Err(cfg_err(
                "kinetics.initial_state",
                format!("unknown state {}, expected one of {}", k.initial_state, self.state_labels().join(", ")),
            ));
        }

        prob("energy.epsilon", self.energy.epsilon)?;
        if !(self.energy.initial_mk >= 0.0) {
            return Err(cfg_err("energy.initial_mk", "must be non-negative"));
        }
        if !(self.energy.floor_mk >= 0.0) {
            return Err(cfg_err("energy.floor_mk", "must be non-negative"));
        }
        if let Some(v) = self.detection.eta_dark_given_down {
            prob("detection.eta_dark_given_down", v)?;
        }
        if let Some(v) = self.detection.eta_dark_given_up {
            prob("detection.eta_dark_given_up", v)?;
        }
        self.detection_model().map_err(|e| cfg_err("detection", e.to_string()))?;

        if self.ensemble.size == 0 {
            return Err(cfg_err("ensemble.size", "must be at least 1"));
        }
        pos("ensemble.t_max", self.ensemble.t_max)?;
        if self.ensemble.n_points < 2 {
            return Err(cfg_err("ensemble.n_points", "must be at least 2"));
        }
        if self.ensemble.trials_per_point == 0 {
            return Err(cfg_err("ensemble.trials_per_point", "must be at least 1"));
        }

        let r = &self.ramsey;
        pos("ramsey.wait_time_s", r.wait_time_s)?;
        prob("ramsey.contrast0", r.contrast0)?;
        pos("ramsey.detuning_half_span_hz", r.detuning_half_span_hz)?;
        if r.n_detunings < 6 {
            return Err(cfg_err("ramsey.n_detunings", "a fringe fit needs at least 6 points"));
        }
        if 2.0 * r.detuning_half_span_hz * r.wait_time_s < 1.0 {
            return Err(cfg_err("ramsey.detuning_half_span_hz", "the scan must cover at least one fringe period"));
        }
        if r.trials_per_point == 0 {
            return Err(cfg_err("ramsey.trials_per_point", "must be at least 1"));
        }
        pos("ramsey.exposure_max", r.exposure_max)?;
        if r.n_exposures < 2 {
            return Err(cfg_err("ramsey.n_exposures", "must be at least 2"));
        }
        if r.size == 0 {
            return Err(cfg_err("ramsey.size", "must be at least 1"));
        }
        Ok(())
    }

    pub fn ion_spec(&self) -> IonSpec {
        let mut ion = match self.ion.isotope {
            Isotope::Yb174 => IonSpec::yb174(),
            Isotope::Yb171 => IonSpec::yb171(),
        };
        ion.mass_u = self.ion.mass_u;
        ion.zeeman_splitting_mhz = self.ion.zeeman_splitting_mhz;
        ion.hyperfine_splitting = ghz_to_joule(self.ion.hyperfine_ghz);
        ion
    }

    pub fn atom_spec(&self) -> Result<AtomSpec> {
        let mut atom = AtomSpec::rb87(self.bath.f, self.bath.m)?;
        atom.mass_u = self.bath.mass_u;
        atom.density = self.bath.density_m3;
        atom.hyperfine_splitting = ghz_to_joule(self.bath.hyperfine_ghz);
        Ok(atom)
    }

    pub fn pair(&self) -> Result<PairParams> {
        let (ma, mi) = (amu_to_kg(self.bath.mass_u), amu_to_kg(self.ion.mass_u));
        let c4 = match self.pair.c4 {
            Some(c4) => c4,
            None => c4_from_langevin(self.pair.gamma_l_over_n_m3s, reduced_mass(ma, mi)?)?,
        };
        PairParams::new(
            ma,
            mi,
            c4,
            crate::physics::constants::E_CHARGE,
            millikelvin_to_joule(self.pair.collision_energy_mk),
        )
    }

    pub fn rate_table(&self) -> Result<RateTable> {
        self.pair()?.rate_table(self.bath.density_m3)
    }

    pub fn detection_model(&self) -> Result<DetectionModel> {
        let base = self.detection.preset.model();
        DetectionModel::new(
            self.detection.eta_dark_given_down.unwrap_or(base.eta_dark_given_down),
            self.detection.eta_dark_given_up.unwrap_or(base.eta_dark_given_up),
        )
    }

    pub fn ion_states(&self) -> Vec<SpinState> {
        match self.ion.isotope {
            Isotope::Yb174 => vec![SpinState::UP, SpinState::DOWN],
            Isotope::Yb171 => crate::rate_model::four_level_states().to_vec(),
        }
    }

    pub fn state_labels(&self) -> Vec<String> {
        self.ion_states().iter().map(|s| s.to_string()).collect()
    }

    pub fn rules(&self) -> Result<ChannelRuleSet> {
        build_rule_set(&self.ion_states(), SpinState::new(self.bath.f, self.bath.m)?)
    }

    fn two_level_rates(&self) -> Result<crate::rate_model::TwoLevelRates> {
        let (t1, p) = (self.kinetics.t1.unwrap_or(f64::NAN), self.kinetics.p_inf.unwrap_or(f64::NAN));
        decompose_for_bath(t1, p, &self.rules()?, SpinState::DOWN, SpinState::UP)
    }

    /// Rates in 1/t_L.
    pub fn rate_matrix(&self) -> Result<RateMatrix> {
        match self.kinetics.model {
            KineticsModel::TwoLevel => RateMatrix::from_two_level(&self.two_level_rates()?),
            KineticsModel::FourLevel => {
                let r = self.kinetics.four_level.ok_or_else(|| cfg_err("kinetics.four_level", "missing"))?;
                r.to_rate_matrix(&self.rules()?)
            }
        }
    }

    pub fn kinematics(&self) -> Result<Kinematics> {
        let ion = self.ion_spec();
        let atom = self.atom_spec()?;
        Ok(Kinematics {
            langevin_rate: self.rate_table()?.gamma_l,
            atom_mass: atom.mass_kg(),
            ion_mass: ion.mass_kg(),
            atom_hyperfine: atom.hyperfine_splitting,
            epsilon: self.energy.epsilon,
            energy_floor: millikelvin_to_joule(self.energy.floor_mk),
            mode: self.energy.mode,
        })
    }

    pub fn branching(&self) -> Result<BranchingConfig> {
        BranchingConfig::from_rate_matrix(&self.rate_matrix()?, self.kinematics()?)
    }

    pub fn initial_trajectory(&self) -> Result<TrajectoryState> {
        let rm = self.rate_matrix()?;
        let i = rm
            .index_of(&self.kinetics.initial_state)
            .ok_or_else(|| cfg_err("kinetics.initial_state", "not a state of the model"))?;
        Ok(TrajectoryState::new(i, millikelvin_to_joule(self.energy.initial_mk)))
    }

    /// Index set of the upper qubit level (`up`, or all of `F = 1`).
    pub fn upper_indices(&self) -> Vec<usize> {
        match self.ion.qubit_kind() {
            QubitKind::ZeemanTwoLevel => vec![0],
            QubitKind::HyperfineClock => vec![0, 1, 2],
        }
    }

    /// Spin-changing rates (1/t_L) out of the two clock states.
    pub fn clock_relaxation(&self) -> Result<ClockRelaxation> {
        let rm = self.rate_matrix()?;
        let [lower, upper] = self.ion_spec().qubit_states();
        let out = |s: SpinState| -> f64 {
            let l = s.to_string();
            rm.rates.iter().filter(|t| t.from == l).map(|t| t.value).sum()
        };
        Ok(ClockRelaxation { upper: out(upper), lower: out(lower) })
    }
}

impl IonConfig {
    pub fn qubit_kind(&self) -> QubitKind {
        match self.isotope {
            Isotope::Yb174 => QubitKind::ZeemanTwoLevel,
            Isotope::Yb171 => QubitKind::HyperfineClock,
        }
    }
}

/// Commented reference of every key, printed ahead of `--print-config`.
pub const KEY_REFERENCE: &str = "\
# profile            yb174-f2p2 | yb174-f2m2 | yb174-f1p1 | yb174-f1m1 | yb171-f1m1 | yb171-f2p2
# seed               base seed of every random stream
# [ion]              isotope (yb174 | yb171), mass_u, zeeman_splitting_mhz, hyperfine_ghz
# [bath]             87Rb state f, m; mass_u; density_m3; hyperfine_ghz
# [pair]             gamma_l_over_n_m3s (C4 calibration), collision_energy_mk, optional c4 (J m^4)
# [kinetics]         model (two-level | four-level), initial_state,
#                    two-level: t1 (t_L), p_inf; four-level: [kinetics.four_level] rates (1/t_L)
# [energy]           mode (mean | sampled-angle), epsilon, initial_mk, floor_mk
# [detection]        preset (yb174-f2-bath | yb174-f1-bath | yb171-hyperfine | ideal),
#                    optional eta_dark_given_down / eta_dark_given_up overrides
# [ensemble]         size, t_max (t_L), n_points, trials_per_point
# [ramsey]           wait_time_s, contrast0, detuning_half_span_hz, n_detunings,
#                    trials_per_point, exposure_max (t_L), n_exposures, size
";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_beyond_toml_range_is_rejected() {
        let mut cfg = RunConfig { seed: i64::MAX as u64, ..Default::default() };
        assert!(cfg.validate().is_ok());
        cfg.seed += 1;
        assert!(matches!(cfg.validate(), Err(Error::Config { ref path, .. }) if path == "seed"));
    }

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let again = RunConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn every_profile_validates() {
        for p in Profile::ALL {
            let cfg = RunConfig::from_toml_str(&format!("profile = \"{}\"", p.name())).unwrap();
            assert_eq!(cfg.profile, p);
            cfg.branching().unwrap();
            cfg.initial_trajectory().unwrap();
        }
    }

    #[test]
    fn errors_name_the_field() {
        let err = RunConfig::from_toml_str("[bath]\ndensity_m3 = -1.0").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "bath.density_m3"), "{err}");
        let err = RunConfig::from_toml_str("[ion]\nmass = 3.0").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path.starts_with("ion")), "{err}");
        let err = RunConfig::from_toml_str("[ensemble]\nsize = \"many\"").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "ensemble.size"), "{err}");
        let err = RunConfig::from_toml_str("profile = \"nope\"").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "profile"));
        let err = RunConfig::from_toml_str("[kinetics]\np_inf = 0.3").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "kinetics.p_inf"), "{err}");
    }

    #[test]
    fn hyperfine_profile_matches_measured_numbers() {
        let cfg = Profile::Yb171F2P2.defaults();
        let rules = cfg.rules().unwrap();
        let r = cfg.kinetics.four_level.unwrap();
        assert!((r.steady_upper(&rules).unwrap() - 0.163).abs() < 1e-9);
        let relax = cfg.clock_relaxation().unwrap();
        assert!((1.0 / relax.superposition_rate() - 1.4).abs() < 1e-12);
    }

    #[test]
    fn zeeman_defaults_reproduce_calibration() {
        let t = RunConfig::default().rate_table().unwrap();
        assert!((t.langevin_time_s - 476.19e-6).abs() < 0.01e-6);
    }
}
