//! Four-level model of the hyperfine ion: Zeeman transfer inside `F = 1`,
//! decay into `|0,0>` and bath-driven pumping back out of it.

use super::matrix::{evolve_generator, ChannelTag, RateMatrix, SpinPopulation, Transition};
use super::rules::ChannelRuleSet;
use crate::error::{domain, Result};
use crate::physics::SpinState;
use serde::{Deserialize, Serialize};

/// State order used by every vector in this module.
pub const FOUR_LEVEL_LABELS: [&str; 4] = ["|1,-1>", "|1,0>", "|1,1>", "|0,0>"];

pub fn four_level_states() -> [SpinState; 4] {
    [
        SpinState { twice_f: 2, twice_m: -2 },
        SpinState { twice_f: 2, twice_m: 0 },
        SpinState { twice_f: 2, twice_m: 2 },
        SpinState { twice_f: 0, twice_m: 0 },
    ]
}

/// Six free rates (per t_L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourLevelRates {
    /// `|1,0> -> |1,-1>`
    pub transfer_to_minus: f64,
    /// `|1,0> -> |1,+1>`
    pub transfer_to_plus: f64,
    /// `|1,+-1> -> |1,0>`
    pub transfer_back: f64,
    /// `|1,0> -> |0,0>`
    pub decay_from_center: f64,
    /// `|1,+-1> -> |0,0>`
    pub decay_from_edges: f64,
    /// `|0,0> -> F = 1`, split equally over the three sublevels.
    pub pump: f64,
}

impl FourLevelRates {
    pub const N_PARAMS: usize = 6;

    pub const PARAM_NAMES: [&'static str; 6] =
        ["transfer_to_minus", "transfer_to_plus", "transfer_back", "decay_from_center", "decay_from_edges", "pump"];

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.transfer_to_minus,
            self.transfer_to_plus,
            self.transfer_back,
            self.decay_from_center,
            self.decay_from_edges,
            self.pump,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 6 {
            return Err(domain("four-level model takes six rates"));
        }
        let r = FourLevelRates {
            transfer_to_minus: v[0],
            transfer_to_plus: v[1],
            transfer_back: v[2],
            decay_from_center: v[3],
            decay_from_edges: v[4],
            pump: v[5],
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(domain("four-level rates must be finite and non-negative"));
        }
        Ok(())
    }

    /// Rate matrix over [`FOUR_LEVEL_LABELS`]. Each transition is tagged SE if
    /// the rule set opens it, SR otherwise.
    pub fn to_rate_matrix(&self, rules: &ChannelRuleSet) -> Result<RateMatrix> {
        self.validate()?;
        let s = four_level_states();
        let mut out = Vec::new();
        let mut push = |a: usize, b: usize, value: f64| {
            if value > 0.0 {
                let tag =
                    if rules.se_connects(s[a], s[b]) { ChannelTag::SpinExchange } else { ChannelTag::SpinRelaxation };
                out.push(Transition { from: FOUR_LEVEL_LABELS[a].into(), to: FOUR_LEVEL_LABELS[b].into(), value, tag });
            }
        };
        push(1, 0, self.transfer_to_minus);
        push(1, 2, self.transfer_to_plus);
        push(0, 1, self.transfer_back);
        push(2, 1, self.transfer_back);
        push(1, 3, self.decay_from_center);
        push(0, 3, self.decay_from_edges);
        push(2, 3, self.decay_from_edges);
        for k in 0..3 {
            push(3, k, self.pump / 3.0);
        }
        RateMatrix::new(FOUR_LEVEL_LABELS.iter().map(|s| s.to_string()).collect(), out)
    }

    /// Steady-state `F = 1` population.
    pub fn steady_upper(&self, rules: &ChannelRuleSet) -> Result<f64> {
        let ss = self.to_rate_matrix(rules)?.steady_state()?;
        Ok(1.0 - ss.p[3])
    }

    /// Copy with `pump` chosen so the steady `F = 1` population equals
    /// `target`. The steady upper population rises monotonically with the
    /// pump rate, so bisection in `log(pump)` is enough.
    pub fn with_steady_upper(&self, target: f64, rules: &ChannelRuleSet) -> Result<Self> {
        if !(0.0..1.0).contains(&target) {
            return Err(domain(format!("target F=1 population {target} outside [0, 1)")));
        }
        if self.decay_from_center + self.decay_from_edges <= 0.0 {
            return Err(domain("a steady state below 1 needs a nonzero decay rate"));
        }
        if target == 0.0 {
            return Ok(FourLevelRates { pump: 0.0, ..*self });
        }
        let eval = |pump: f64| FourLevelRates { pump, ..*self }.steady_upper(rules);
        let (mut lo, mut hi) = (-30.0f64, 30.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if eval(mid.exp())? < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        Ok(FourLevelRates { pump: (0.5 * (lo + hi)).exp(), ..*self })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourLevelPrediction {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    /// `populations[k][i]`: state `i` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    /// Distinct nonzero relaxation rates `-Re(lambda)` of the generator,
    /// ascending.
    pub relaxation_rates: Vec<f64>,
}

impl FourLevelPrediction {
    pub fn series(&self, state: usize) -> Vec<f64> {
        self.populations.iter().map(|p| p[state]).collect()
    }
}

/// Population curves from `initial` and the generator's relaxation spectrum.
pub fn two_timescale_fit_model(
    rates: &FourLevelRates,
    rules: &ChannelRuleSet,
    initial: &SpinPopulation,
    times: &[f64],
) -> Result<FourLevelPrediction> {
    let rm = rates.to_rate_matrix(rules)?;
    let g = rm.generator()?;
    let populations =
        times.iter().map(|&t| evolve_generator(&g, initial, t).map(|p| p.p)).collect::<Result<Vec<_>>>()?;
    let scale = g.abs().max().max(1e-300);
    let mut rel: Vec<f64> = g.complex_eigenvalues().iter().map(|z| -z.re).filter(|r| *r > 1e-10 * scale).collect();
    rel.sort_by(f64::total_cmp);
    // defective (Jordan) eigenvalues split by ~sqrt(eps) in the Schur solver
    rel.dedup_by(|a, b| (*a - *b).abs() <= 1e-6 * scale);
    Ok(FourLevelPrediction { labels: rm.labels.clone(), times: times.to_vec(), populations, relaxation_rates: rel })
}
