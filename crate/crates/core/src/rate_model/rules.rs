//! Spin-exchange selection rules for an ion colliding with a bath atom.
//!
//! A spin-exchange (SE) channel flips the ion by `Delta m = +-1` (or keeps `m`
//! while changing `F`) and moves the atom by the opposite amount, conserving
//! the total projection. The bath atom is an alkali with nuclear spin 3/2, so
//! its ground manifolds are `F = 1` and `F = 2`; products that need an
//! `F = 1 -> F = 2` promotion of the atom are energetically suppressed.

use super::two_level::{decompose_rates, TwoLevelRates};
use crate::error::{domain, Result};
use crate::physics::SpinState;
use serde::{Deserialize, Serialize};

const ATOM_MANIFOLDS: [i32; 2] = [1, 2];
const ATOM_LOWER_F: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeProduct {
    pub ion: SpinState,
    pub atom: SpinState,
    /// Requires promoting the atom to the upper hyperfine manifold.
    pub suppressed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRule {
    pub ion: SpinState,
    /// Every `m`-conserving product pair, suppressed ones included.
    pub products: Vec<SeProduct>,
}

impl ChannelRule {
    pub fn se_allowed(&self) -> bool {
        self.products.iter().any(|p| !p.suppressed)
    }

    /// Distinct ion states reachable by an unsuppressed SE collision.
    pub fn allowed_targets(&self) -> Vec<SpinState> {
        let mut out: Vec<SpinState> = Vec::new();
        for p in self.products.iter().filter(|p| !p.suppressed) {
            if !out.contains(&p.ion) {
                out.push(p.ion);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRuleSet {
    pub atom: SpinState,
    pub rules: Vec<ChannelRule>,
}

impl ChannelRuleSet {
    pub fn rule(&self, ion: SpinState) -> Option<&ChannelRule> {
        self.rules.iter().find(|r| r.ion == ion)
    }

    /// Whether an unsuppressed SE collision takes the ion `from -> to`.
    pub fn se_connects(&self, from: SpinState, to: SpinState) -> bool {
        self.rule(from).is_some_and(|r| r.allowed_targets().contains(&to))
    }
}

pub fn build_rule_set(ion_states: &[SpinState], atom_state: SpinState) -> Result<ChannelRuleSet> {
    for s in ion_states.iter().chain(std::iter::once(&atom_state)) {
        SpinState::from_twice(s.twice_f, s.twice_m)?;
    }
    if atom_state.twice_f % 2 != 0 || !ATOM_MANIFOLDS.contains(&(atom_state.twice_f / 2)) {
        return Err(domain(format!("bath atom must have F in {ATOM_MANIFOLDS:?}, got {atom_state}")));
    }
    let rules = ion_states
        .iter()
        .map(|&ion| {
            let mut products = Vec::new();
            for &target in ion_states {
                if target == ion {
                    continue;
                }
                let dm = target.twice_m - ion.twice_m;
                if dm.abs() > 2 {
                    continue;
                }
                let atom_m = atom_state.twice_m - dm;
                for f in ATOM_MANIFOLDS {
                    let Ok(atom) = SpinState::from_twice(2 * f, atom_m) else { continue };
                    if atom == atom_state {
                        continue;
                    }
                    let suppressed = atom_state.twice_f == 2 * ATOM_LOWER_F && f > ATOM_LOWER_F;
                    products.push(SeProduct { ion: target, atom, suppressed });
                }
            }
            ChannelRule { ion, products }
        })
        .collect();
    Ok(ChannelRuleSet { atom: atom_state, rules })
}

/// [`decompose_rates`] for whichever qubit state the bath protects from spin
/// exchange. With `|up>` protected this is the plain decomposition; with
/// `|down>` protected the roles of the two states swap.
pub fn decompose_for_bath(
    t1: f64,
    p_up_inf: f64,
    rules: &ChannelRuleSet,
    lower: SpinState,
    upper: SpinState,
) -> Result<TwoLevelRates> {
    let up_open = rules.se_connects(upper, lower);
    let down_open = rules.se_connects(lower, upper);
    match (up_open, down_open) {
        (false, _) => decompose_rates(t1, p_up_inf, true),
        (true, false) => {
            let r = decompose_rates(t1, 1.0 - p_up_inf, true)?;
            TwoLevelRates::new(r.down, r.up)
        }
        (true, true) => Err(domain(format!(
            "bath {} opens spin exchange in both directions; the split is not determined by (T1, p_inf)",
            rules.atom
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(f: i32, m: i32) -> SpinState {
        SpinState::new(f, m).unwrap()
    }

    const ZEEMAN: [SpinState; 2] = [SpinState::UP, SpinState::DOWN];

    #[test]
    fn stretched_pair_is_protected() {
        let rs = build_rule_set(&ZEEMAN, st(2, 2)).unwrap();
        assert!(!rs.rule(SpinState::UP).unwrap().se_allowed());
        assert!(rs.rule(SpinState::UP).unwrap().products.is_empty());
        let down = rs.rule(SpinState::DOWN).unwrap();
        assert!(down.se_allowed());
        assert!(down.products.contains(&SeProduct { ion: SpinState::UP, atom: st(2, 1), suppressed: false }));
    }

    #[test]
    fn lower_manifold_promotion_is_suppressed() {
        let rs = build_rule_set(&ZEEMAN, st(1, 1)).unwrap();
        let up = rs.rule(SpinState::UP).unwrap();
        assert!(!up.se_allowed());
        assert_eq!(up.products.len(), 1);
        assert!(up.products[0].suppressed);
        assert_eq!(up.products[0].atom, st(2, 2));
        assert!(rs.se_connects(SpinState::DOWN, SpinState::UP));

        let mirrored = build_rule_set(&ZEEMAN, st(1, -1)).unwrap();
        assert!(mirrored.se_connects(SpinState::UP, SpinState::DOWN));
        assert!(!mirrored.se_connects(SpinState::DOWN, SpinState::UP));
    }

    #[test]
    fn decomposition_follows_the_protected_state() {
        let plus = build_rule_set(&ZEEMAN, st(2, 2)).unwrap();
        let r = decompose_for_bath(2.5, 0.609, &plus, SpinState::DOWN, SpinState::UP).unwrap();
        assert_eq!(r.up.spin_exchange, 0.0);
        assert!((r.down.spin_exchange * 2.5 - 0.218).abs() < 1e-12);
        let minus = build_rule_set(&ZEEMAN, st(2, -2)).unwrap();
        let r = decompose_for_bath(2.5, 0.423, &minus, SpinState::DOWN, SpinState::UP).unwrap();
        assert_eq!(r.down.spin_exchange, 0.0);
        assert!((r.up.spin_exchange * 2.5 - 0.154).abs() < 1e-12);
        assert!((crate::rate_model::two_level_steady_state(&r).unwrap() - 0.423).abs() < 1e-12);
    }

    #[test]
    fn hyperfine_ion_in_stretched_bath() {
        let ion = [st(1, -1), st(1, 0), st(1, 1), st(0, 0)];
        let rs = build_rule_set(&ion, st(2, 2)).unwrap();
        // only m-raising ion transitions are open
        assert!(rs.se_connects(st(1, 0), st(1, 1)));
        assert!(rs.se_connects(st(1, -1), st(0, 0)));
        assert!(rs.se_connects(st(0, 0), st(1, 1)));
        assert!(!rs.se_connects(st(1, 0), st(1, -1)));
        assert!(!rs.se_connects(st(1, 1), st(0, 0)));
        assert!(!rs.se_connects(st(1, 0), st(0, 0)));
    }

    #[test]
    fn products_conserve_total_projection() {
        let ion = [st(1, -1), st(1, 0), st(1, 1), st(0, 0)];
        for atom in [st(2, 2), st(2, -2), st(1, 1), st(1, -1), st(2, 0)] {
            let rs = build_rule_set(&ion, atom).unwrap();
            for r in &rs.rules {
                for p in &r.products {
                    assert_eq!(r.ion.twice_m + atom.twice_m, p.ion.twice_m + p.atom.twice_m);
                }
            }
        }
    }

    #[test]
    fn invalid_labels() {
        let bad = SpinState { twice_f: 2, twice_m: 4 };
        assert!(build_rule_set(&[bad], st(2, 2)).is_err());
        assert!(build_rule_set(&ZEEMAN, st(3, 0)).is_err());
    }
}
