//! Stochastic trajectories of the ion's spin and kinetic energy, one Langevin
//! collision at a time.
//!
//! Waiting times between Langevin collisions are exponential with the fixed
//! rate `gamma_L`. Each collision picks at most one spin outcome from the
//! per-state channel table (spin exchange, spin relaxation, or nothing), and
//! independently a hyperfine flip of the atom with probability `epsilon`.
//! Non-Langevin (glancing) collisions are spin and energy inert and are not
//! simulated.

pub mod energy;

pub use energy::{cooling_fraction, heating_per_flip, mean_energy_transient, spin_temperature, steady_energy_analytic};

use crate::error::{domain, Error, Result};
use crate::physics::SpinState;
use crate::rate_model::{ChannelRuleSet, ChannelTag, RateMatrix, Transition};
use crate::seeding::{exp_waiting, rng_for};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyMode {
    /// Deterministic average loss `kappa E` per collision.
    #[default]
    Mean,
    /// Isotropic centre-of-mass scattering: loss `kappa (1 - cos theta) E`.
    SampledAngle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub to: usize,
    /// Probability per Langevin collision.
    pub probability: f64,
    pub tag: ChannelTag,
}

/// Per-collision branching and kinematics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingConfig {
    pub labels: Vec<String>,
    /// `channels[i]`: outcomes available from state `i`.
    pub channels: Vec<Vec<Channel>>,
    /// Probability of an atomic hyperfine flip per Langevin collision.
    pub epsilon: f64,
    /// Lower bound on the ion kinetic energy, J.
    pub energy_floor: f64,
    pub mode: EnergyMode,
    /// `gamma_L`, 1/s.
    pub langevin_rate: f64,
    pub atom_mass: f64,
    pub ion_mass: f64,
    /// Hyperfine energy released by an atomic flip, J.
    pub atom_hyperfine: f64,
}

/// Masses, rates and energies shared by every constructor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub langevin_rate: f64,
    pub atom_mass: f64,
    pub ion_mass: f64,
    pub atom_hyperfine: f64,
    pub epsilon: f64,
    pub energy_floor: f64,
    pub mode: EnergyMode,
}

impl BranchingConfig {
    fn assemble(labels: Vec<String>, channels: Vec<Vec<Channel>>, k: Kinematics) -> Result<Self> {
        let cfg = BranchingConfig {
            labels,
            channels,
            epsilon: k.epsilon,
            energy_floor: k.energy_floor,
            mode: k.mode,
            langevin_rate: k.langevin_rate,
            atom_mass: k.atom_mass,
            ion_mass: k.ion_mass,
            atom_hyperfine: k.atom_hyperfine,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Channel table from selection rules: every unsuppressed SE target of a
    /// state gets `p_se`, and `p_sr` is shared equally among all other states.
    pub fn from_rules(
        states: &[SpinState],
        rules: &ChannelRuleSet,
        p_se: f64,
        p_sr: f64,
        k: Kinematics,
    ) -> Result<Self> {
        for (name, p) in [("p_se", p_se), ("p_sr", p_sr)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(domain(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if p_se + p_sr > 1.0 {
            return Err(domain("p_se + p_sr must not exceed 1"));
        }
        let n = states.len();
        let channels = states
            .iter()
            .map(|&s| {
                let mut out = Vec::new();
                if p_se > 0.0 {
                    if let Some(rule) = rules.rule(s) {
                        for t in rule.allowed_targets() {
                            if let Some(j) = states.iter().position(|&x| x == t) {
                                out.push(Channel { to: j, probability: p_se, tag: ChannelTag::SpinExchange });
                            }
                        }
                    }
                }
                if p_sr > 0.0 && n > 1 {
                    for (j, &t) in states.iter().enumerate() {
                        if t != s {
                            out.push(Channel {
                                to: j,
                                probability: p_sr / (n - 1) as f64,
                                tag: ChannelTag::SpinRelaxation,
                            });
                        }
                    }
                }
                out
            })
            .collect();
        let cfg = Self::assemble(states.iter().map(|s| s.label()).collect(), channels, k)?;
        for (i, ch) in cfg.channels.iter().enumerate() {
            for c in ch.iter().filter(|c| c.tag == ChannelTag::SpinExchange) {
                if !rules.se_connects(states[i], states[c.to]) {
                    return Err(Error::Invariant(format!(
                        "spin exchange {} -> {} is closed by the selection rules",
                        states[i], states[c.to]
                    )));
                }
            }
        }
        Ok(cfg)
    }

    /// Channel table whose induced rates (per t_L) equal the given matrix.
    /// One Langevin collision per `t_L` means a rate `r` becomes a
    /// per-collision probability `r`, so outflows must not exceed 1.
    pub fn from_rate_matrix(rm: &RateMatrix, k: Kinematics) -> Result<Self> {
        rm.validate()?;
        let mut channels = vec![Vec::new(); rm.n_states()];
        for tr in &rm.rates {
            let i = rm.index_of(&tr.from).unwrap_or_default();
            let j = rm.index_of(&tr.to).unwrap_or_default();
            if tr.value > 0.0 {
                channels[i].push(Channel { to: j, probability: tr.value, tag: tr.tag });
            }
        }
        Self::assemble(rm.labels.clone(), channels, k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != self.labels.len() {
            return Err(domain("one channel list per state is required"));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            let mut total = 0.0;
            for c in ch {
                if c.to >= self.labels.len() || c.to == i {
                    return Err(domain(format!("bad channel target from state {i}")));
                }
                if !(0.0..=1.0).contains(&c.probability) {
                    return Err(domain("channel probabilities must lie in [0, 1]"));
                }
                total += c.probability;
            }
            if total > 1.0 + 1e-12 {
                return Err(domain(format!("outcome probabilities of {} sum to {total} > 1", self.labels[i])));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(domain("epsilon must lie in [0, 1]"));
        }
        if !(self.energy_floor >= 0.0) {
            return Err(domain("energy floor must be non-negative"));
        }
        if !(self.langevin_rate > 0.0) {
            return Err(domain("Langevin rate must be positive"));
        }
        if !(self.atom_mass > 0.0 && self.ion_mass > 0.0) {
            return Err(domain("masses must be positive"));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        cooling_fraction(self.atom_mass, self.ion_mass)
    }

    pub fn heat_per_flip(&self) -> f64 {
        heating_per_flip(self.atom_hyperfine, self.atom_mass, self.ion_mass)
    }

    pub fn steady_energy(&self) -> f64 {
        self.epsilon * self.heat_per_flip() / self.kappa()
    }

    /// Rate matrix (per t_L) generated by this channel table.
    pub fn induced_rate_matrix(&self) -> Result<RateMatrix> {
        let mut rates = Vec::new();
        for (i, ch) in self.channels.iter().enumerate() {
            for c in ch {
                rates.push(Transition {
                    from: self.labels[i].clone(),
                    to: self.labels[c.to].clone(),
                    value: c.probability,
                    tag: c.tag,
                });
            }
        }
        RateMatrix::new(self.labels.clone(), rates)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub spin: usize,
    /// J.
    pub e_kin: f64,
    /// s.
    pub t: f64,
    pub collision_count: u64,
}

impl TrajectoryState {
    pub fn new(spin: usize, e_kin: f64) -> Self {
        TrajectoryState { spin, e_kin, t: 0.0, collision_count: 0 }
    }
}

/// Advances by one Langevin collision.
pub fn step_collision<R: Rng + ?Sized>(
    state: &TrajectoryState,
    cfg: &BranchingConfig,
    rng: &mut R,
) -> Result<TrajectoryState> {
    if state.spin >= cfg.labels.len() {
        return Err(domain(format!("spin index {} out of range", state.spin)));
    }
    let dt = exp_waiting(rng, cfg.langevin_rate);
    let u: f64 = rng.gen();
    let mut spin = state.spin;
    let mut acc = 0.0;
    for c in &cfg.channels[state.spin] {
        acc += c.probability;
        if u < acc {
            spin = c.to;
            break;
        }
    }
    let flip = rng.gen::<f64>() < cfg.epsilon;
    let kappa = cfg.kappa();
    let retained = match cfg.mode {
        EnergyMode::Mean => 1.0 - kappa,
        EnergyMode::SampledAngle => {
            let cos_theta = 2.0 * rng.gen::<f64>() - 1.0;
            1.0 - kappa * (1.0 - cos_theta)
        }
    };
    let heat = if flip { cfg.heat_per_flip() } else { 0.0 };
    let e_kin = (state.e_kin * retained + heat).max(cfg.energy_floor);
    Ok(TrajectoryState { spin, e_kin, t: state.t + dt, collision_count: state.collision_count + 1 })
}

/// All states up to `horizon` seconds, starting with `init`.
pub fn run_trajectory<R: Rng + ?Sized>(
    init: &TrajectoryState,
    cfg: &BranchingConfig,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<TrajectoryState>> {
    if !(horizon > 0.0) {
        return Err(domain("horizon must be positive"));
    }
    let mut out = vec![*init];
    let mut cur = *init;
    loop {
        let next = step_collision(&cur, cfg, rng)?;
        if next.t > horizon {
            break;
        }
        out.push(next);
        cur = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub labels: Vec<String>,
    pub t_over_tl: Vec<f64>,
    /// `populations[k][i]`: fraction in state `i` at grid point `k`.
    pub populations: Vec<Vec<f64>>,
    pub population_stderr: Vec<Vec<f64>>,
    /// J.
    pub mean_energy: Vec<f64>,
    pub energy_stderr: Vec<f64>,
    pub n_trajectories: usize,
    pub base_seed: u64,
}

#[derive(Clone)]
struct Accumulator {
    counts: Vec<Vec<u64>>,
    e_sum: Vec<f64>,
    e_sq: Vec<f64>,
}

impl Accumulator {
    fn new(n_grid: usize, n_states: usize) -> Self {
        Accumulator { counts: vec![vec![0; n_states]; n_grid], e_sum: vec![0.0; n_grid], e_sq: vec![0.0; n_grid] }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.e_sum.iter_mut().zip(&other.e_sum) {
            *a += b;
        }
        for (a, b) in self.e_sq.iter_mut().zip(&other.e_sq) {
            *a += b;
        }
    }
}

/// Trajectories per reduction block. The block layout is fixed, so sums do
/// not depend on the number of worker threads.
const BLOCK: usize = 1024;

fn simulate_into(
    acc: &mut Accumulator,
    init: &TrajectoryState,
    cfg: &BranchingConfig,
    grid_s: &[f64],
    base_seed: u64,
    index: u64,
) -> Result<()> {
    let mut rng = rng_for(base_seed, index);
    let mut cur = *init;
    let mut next = step_collision(&cur, cfg, &mut rng)?;
    for (k, &t) in grid_s.iter().enumerate() {
        while next.t <= t {
            cur = next;
            next = step_collision(&cur, cfg, &mut rng)?;
        }
        acc.counts[k][cur.spin] += 1;
        acc.e_sum[k] += cur.e_kin;
        acc.e_sq[k] += cur.e_kin * cur.e_kin;
    }
    Ok(())
}

/// Runs `n` independent trajectories and records spin populations and mean
/// energy on `grid` (units of t_L). Trajectory `i` uses the seed derived from
/// `(base_seed, i)`; results are bit-identical for any `workers`.
pub fn run_ensemble(
    init: &TrajectoryState,
    cfg: &BranchingConfig,
    grid: &[f64],
    n: usize,
    base_seed: u64,
    workers: usize,
) -> Result<EnsembleStats> {
    if n == 0 {
        return Err(domain("ensemble needs at least one trajectory"));
    }
    cfg.validate()?;
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(domain("time grid must be non-negative and sorted"));
    }
    let grid_s: Vec<f64> = grid.iter().map(|t| t / cfg.langevin_rate).collect();
    let n_states = cfg.labels.len();
    let n_blocks = n.div_ceil(BLOCK);
    let run_block = |b: usize| -> Result<Accumulator> {
        let mut acc = Accumulator::new(grid.len(), n_states);
        for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
            simulate_into(&mut acc, init, cfg, &grid_s, base_seed, i as u64)?;
        }
        Ok(acc)
    };
    let blocks: Vec<Accumulator> = if workers <= 1 {
        (0..n_blocks).map(run_block).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
        pool.install(|| (0..n_blocks).into_par_iter().map(run_block).collect::<Result<Vec<_>>>())?
    };
    let mut total = Accumulator::new(grid.len(), n_states);
    for b in &blocks {
        total.merge(b);
    }

    let nf = n as f64;
    let populations: Vec<Vec<f64>> =
        total.counts.iter().map(|row| row.iter().map(|&c| c as f64 / nf).collect()).collect();
    let population_stderr =
        populations.iter().map(|row| row.iter().map(|p| (p * (1.0 - p) / nf).sqrt()).collect()).collect();
    let mean_energy: Vec<f64> = total.e_sum.iter().map(|s| s / nf).collect();
    let energy_stderr = total
        .e_sq
        .iter()
        .zip(&mean_energy)
        .map(|(sq, m)| if n < 2 { 0.0 } else { ((sq / nf - m * m).max(0.0) * nf / (nf - 1.0) / nf).sqrt() })
        .collect();
    Ok(EnsembleStats {
        labels: cfg.labels.clone(),
        t_over_tl: grid.to_vec(),
        populations,
        population_stderr,
        mean_energy,
        energy_stderr,
        n_trajectories: n,
        base_seed,
    })
}
