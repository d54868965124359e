//! Simulation and fitting for a Yb+ ion qubit colliding with spin-polarized
//! 87Rb atoms.
//!
//! The crate is split into forward models and inverse fitting:
//!
//! * [`physics`]: constants, species and the Langevin / total collision rates.
//! * [`rate_model`]: two-level closed forms, spin-exchange / spin-relaxation
//!   decomposition, selection rules and the N-level master equation.
//! * [`collision_mc`]: per-collision stochastic trajectories of spin and
//!   kinetic energy.
//! * [`detection`]: bright/dark readout errors and their correction.
//! * [`ramsey`]: Ramsey fringes, contrast decay and the clock-shift bound.
//! * [`estimate`]: weighted Levenberg-Marquardt fits, rate decomposition with
//!   uncertainties, and the binomial bootstrap.
//! * [`io`] and [`config`]: CSV/JSON schemas and the TOML run configuration.
//!
//! Internally everything is SI, except that kinetics are expressed in units of
//! the Langevin time `t_L = 1/gamma_L`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision_mc;
pub mod config;
pub mod detection;
pub mod error;
pub mod estimate;
pub mod io;
pub mod physics;
pub mod ramsey;
pub mod rate_model;
pub mod reproduce;
pub mod seeding;

pub use error::{Error, Result};

/// Toolkit version embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
