//! Deterministic population kinetics. Times are in units of the Langevin time
//! `t_L` and rates in `1/t_L` throughout this module.

pub mod expm;
pub mod four_level;
pub mod matrix;
pub mod ode;
pub mod rules;
pub mod two_level;

pub use four_level::{
    four_level_states, two_timescale_fit_model, FourLevelPrediction, FourLevelRates, FOUR_LEVEL_LABELS,
};
pub use matrix::{n_level_evolution, n_level_steady_state, ChannelTag, RateMatrix, SpinPopulation, Transition};
pub use rules::{build_rule_set, decompose_for_bath, ChannelRule, ChannelRuleSet, SeProduct};
pub use two_level::{decompose_rates, two_level_evolution, two_level_steady_state, ChannelRates, TwoLevelRates};
