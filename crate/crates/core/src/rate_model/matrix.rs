//! N-level rate matrices and the master-equation engine.

use super::expm::expm;
use super::two_level::TwoLevelRates;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelTag {
    #[serde(rename = "SE")]
    SpinExchange,
    #[serde(rename = "SR")]
    SpinRelaxation,
}

/// One labeled transition `from -> to` at `value` per `t_L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub from: String,
    pub to: String,
    pub value: f64,
    pub tag: ChannelTag,
}

/// Transition-rate description of an N-level system. Several transitions may
/// connect the same pair of states (e.g. an SE and an SR part); the generator
/// sums them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateMatrix {
    pub labels: Vec<String>,
    pub rates: Vec<Transition>,
}

/// Probability vector over the labels of a [`RateMatrix`], at `time` (t_L).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinPopulation {
    pub p: Vec<f64>,
    pub time: f64,
}

impl SpinPopulation {
    pub fn new(p: Vec<f64>, time: f64) -> Result<Self> {
        let s = SpinPopulation { p, time };
        s.validate()?;
        Ok(s)
    }

    /// All population in state `index`.
    pub fn pure(n: usize, index: usize) -> Self {
        let mut p = vec![0.0; n];
        p[index] = 1.0;
        SpinPopulation { p, time: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Domain("population entries must lie in [0, 1]".into()));
        }
        let sum: f64 = self.p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("population sums to {sum}, not 1")));
        }
        Ok(())
    }
}

impl RateMatrix {
    pub fn new(labels: Vec<String>, rates: Vec<Transition>) -> Result<Self> {
        let m = RateMatrix { labels, rates };
        m.validate()?;
        Ok(m)
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::InvalidGenerator("no states".into()));
        }
        for (i, l) in self.labels.iter().enumerate() {
            if self.labels[..i].contains(l) {
                return Err(Error::InvalidGenerator(format!("duplicate label {l}")));
            }
        }
        for tr in &self.rates {
            let (Some(a), Some(b)) = (self.index_of(&tr.from), self.index_of(&tr.to)) else {
                return Err(Error::InvalidGenerator(format!(
                    "transition {} -> {} uses an unknown label",
                    tr.from, tr.to
                )));
            };
            if a == b {
                return Err(Error::InvalidGenerator(format!("self transition on {}", tr.from)));
            }
            if !(tr.value >= 0.0) || !tr.value.is_finite() {
                return Err(Error::InvalidGenerator(format!(
                    "rate {} -> {} must be finite and non-negative, got {}",
                    tr.from, tr.to, tr.value
                )));
            }
        }
        Ok(())
    }

    /// Generator `M` with `M[i][j]` the rate `j -> i` and columns summing to 0.
    pub fn generator(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let n = self.n_states();
        let mut m = DMatrix::zeros(n, n);
        for tr in &self.rates {
            let j = self.index_of(&tr.from).unwrap_or_default();
            let i = self.index_of(&tr.to).unwrap_or_default();
            m[(i, j)] += tr.value;
            m[(j, j)] -= tr.value;
        }
        Ok(m)
    }

    /// Sum of all rates `from -> to` carrying `tag`.
    pub fn rate(&self, from: &str, to: &str, tag: Option<ChannelTag>) -> f64 {
        self.rates
            .iter()
            .filter(|t| t.from == from && t.to == to && tag.is_none_or(|g| g == t.tag))
            .map(|t| t.value)
            .sum()
    }

    /// Two-state embedding of [`TwoLevelRates`], labels `up`, `down`.
    pub fn from_two_level(rates: &TwoLevelRates) -> Result<Self> {
        let mut out = Vec::new();
        let mut push = |from: &str, to: &str, value: f64, tag| {
            if value > 0.0 {
                out.push(Transition { from: from.into(), to: to.into(), value, tag });
            }
        };
        push("up", "down", rates.up.spin_exchange, ChannelTag::SpinExchange);
        push("up", "down", rates.up.spin_relaxation, ChannelTag::SpinRelaxation);
        push("down", "up", rates.down.spin_exchange, ChannelTag::SpinExchange);
        push("down", "up", rates.down.spin_relaxation, ChannelTag::SpinRelaxation);
        RateMatrix::new(vec!["up".into(), "down".into()], out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: RateMatrix = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    /// Closed communicating classes of the transition graph.
    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        let n = self.n_states();
        let mut reach = vec![vec![false; n]; n];
        for (i, row) in reach.iter_mut().enumerate() {
            row[i] = true;
        }
        for tr in &self.rates {
            if tr.value > 0.0 {
                let a = self.index_of(&tr.from).unwrap_or_default();
                let b = self.index_of(&tr.to).unwrap_or_default();
                reach[a][b] = true;
            }
        }
        // Warshall closure
        #[allow(clippy::needless_range_loop)]
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        let mut classes: Vec<Vec<usize>> = Vec::new();
        let mut seen = vec![false; n];
        for i in 0..n {
            if seen[i] {
                continue;
            }
            let class: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
            for &j in &class {
                seen[j] = true;
            }
            let closed = (0..n).all(|j| !reach[i][j] || reach[j][i]);
            if closed {
                classes.push(class);
            }
        }
        classes
    }
}

fn check_population(m: &DMatrix<f64>, p0: &SpinPopulation) -> Result<()> {
    if p0.p.len() != m.nrows() {
        return Err(Error::Domain(format!(
            "population has {} entries for a {}-state generator",
            p0.p.len(),
            m.nrows()
        )));
    }
    p0.validate()
}

/// Verifies the generator structure of a raw matrix.
pub fn validate_generator(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidGenerator("generator must be square".into()));
    }
    for j in 0..m.ncols() {
        let mut col = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..m.nrows() {
            let x = m[(i, j)];
            if !x.is_finite() {
                return Err(Error::InvalidGenerator("non-finite entry".into()));
            }
            if i != j && x < 0.0 {
                return Err(Error::InvalidGenerator(format!("negative off-diagonal ({i}, {j})")));
            }
            col += x;
            scale = scale.max(x.abs());
        }
        if m[(j, j)] > 0.0 {
            return Err(Error::InvalidGenerator(format!("positive diagonal at {j}")));
        }
        if col.abs() > 1e-12 * scale.max(1.0) {
            return Err(Error::InvalidGenerator(format!("column {j} sums to {col}")));
        }
    }
    Ok(())
}

/// Clamps round-off negatives and renormalizes.
fn tidy(v: DVector<f64>) -> Vec<f64> {
    let mut p: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter_mut().for_each(|x| *x /= s);
    }
    p
}

/// `exp(M t) p0`, with `t` in t_L.
pub fn evolve_generator(m: &DMatrix<f64>, p0: &SpinPopulation, t: f64) -> Result<SpinPopulation> {
    validate_generator(m)?;
    check_population(m, p0)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    let prop = expm(&(m * t));
    let p = prop * DVector::from_column_slice(&p0.p);
    Ok(SpinPopulation { p: tidy(p), time: p0.time + t })
}

/// Propagator `exp(M t)` reused across a time grid.
pub fn evolve_grid(m: &DMatrix<f64>, p0: &SpinPopulation, times: &[f64]) -> Result<Vec<SpinPopulation>> {
    times.iter().map(|&t| evolve_generator(m, p0, t)).collect()
}

impl RateMatrix {
    pub fn evolve(&self, p0: &SpinPopulation, t: f64) -> Result<SpinPopulation> {
        evolve_generator(&self.generator()?, p0, t)
    }

    /// Unique stationary distribution; transient states get zero weight.
    pub fn steady_state(&self) -> Result<SpinPopulation> {
        let m = self.generator()?;
        let classes = self.closed_classes();
        if classes.len() != 1 {
            return Err(Error::MultipleSteadyStates {
                classes: classes.iter().map(|c| c.iter().map(|&i| self.labels[i].clone()).collect()).collect(),
            });
        }
        let n = m.nrows();
        let mut a = m.clone();
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let x = a.lu().solve(&b).ok_or_else(|| Error::InvalidGenerator("singular steady-state system".into()))?;
        Ok(SpinPopulation { p: tidy(x), time: f64::INFINITY })
    }
}

/// Free function form of [`RateMatrix::evolve`].
pub fn n_level_evolution(rates: &RateMatrix, p0: &SpinPopulation, t: f64) -> Result<SpinPopulation> {
    rates.evolve(p0, t)
}

pub fn n_level_steady_state(rates: &RateMatrix) -> Result<SpinPopulation> {
    rates.steady_state()
}

#[cfg(test)]
mod tests {
    use super::super::ode::integrate_linear;
    use super::super::two_level::{two_level_evolution, two_level_steady_state, ChannelRates};
    use super::*;
    use proptest::prelude::*;

    fn tr(from: &str, to: &str, value: f64) -> Transition {
        Transition { from: from.into(), to: to.into(), value, tag: ChannelTag::SpinRelaxation }
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn all_to_all(n: usize, r: f64) -> RateMatrix {
        let mut rates = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    rates.push(tr(&format!("s{i}"), &format!("s{j}"), r));
                }
            }
        }
        RateMatrix::new(labels(n), rates).unwrap()
    }

    #[test]
    fn zero_time_and_symmetric_mixing() {
        let m = all_to_all(4, 0.3);
        let p0 = SpinPopulation::pure(4, 2);
        assert_eq!(m.evolve(&p0, 0.0).unwrap().p, p0.p);
        let late = m.evolve(&p0, 200.0).unwrap();
        for x in late.p {
            assert!((x - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn two_state_embedding_matches_closed_form() {
        let r = TwoLevelRates::new(ChannelRates::new(0.0, 0.1564), ChannelRates::new(0.0872, 0.1564)).unwrap();
        let m = RateMatrix::from_two_level(&r).unwrap();
        let p0 = SpinPopulation::pure(2, 0);
        for t in [0.1, 1.0, 2.5, 7.0, 40.0] {
            let p = m.evolve(&p0, t).unwrap();
            assert!((p.p[0] - two_level_evolution(1.0, &r, t).unwrap()).abs() < 1e-9);
        }
        let ss = m.steady_state().unwrap();
        assert!((ss.p[0] - two_level_steady_state(&r).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn steady_states() {
        let ring = RateMatrix::new(
            labels(4),
            (0..4).map(|i| tr(&format!("s{i}"), &format!("s{}", (i + 1) % 4), 0.7)).collect(),
        )
        .unwrap();
        for x in ring.steady_state().unwrap().p {
            assert!((x - 0.25).abs() < 1e-12);
        }
        let absorbing =
            RateMatrix::new(labels(3), vec![tr("s0", "s1", 1.0), tr("s1", "s2", 0.5), tr("s2", "s0", 0.0)]).unwrap();
        let ss = absorbing.steady_state().unwrap();
        assert!((ss.p[2] - 1.0).abs() < 1e-12);

        let split = RateMatrix::new(labels(3), vec![tr("s1", "s0", 1.0), tr("s1", "s2", 1.0)]).unwrap();
        match split.steady_state() {
            Err(Error::MultipleSteadyStates { classes }) => {
                assert_eq!(classes, vec![vec!["s0".to_string()], vec!["s2".to_string()]]);
            }
            other => panic!("expected multiple steady states, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_generators() {
        assert!(RateMatrix::new(labels(2), vec![tr("s0", "s1", -1.0)]).is_err());
        assert!(RateMatrix::new(labels(2), vec![tr("s0", "s0", 1.0)]).is_err());
        assert!(RateMatrix::new(labels(2), vec![tr("s0", "x", 1.0)]).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.5, 0.0]);
        assert!(evolve_generator(&bad, &SpinPopulation::pure(2, 0), 1.0).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = RateMatrix::new(
            vec!["up".into(), "down".into()],
            vec![
                tr("up", "down", 0.1 + 0.2),
                Transition { from: "down".into(), to: "up".into(), value: 1.0 / 3.0, tag: ChannelTag::SpinExchange },
                tr("down", "up", 5e-324),
            ],
        )
        .unwrap();
        let s = m.to_json().unwrap();
        let back = RateMatrix::from_json(&s).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.rates.iter().zip(&m.rates) {
            assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
        assert!(s.contains("\"SE\""));
    }

    fn random_matrix(n: usize, vals: &[f64]) -> RateMatrix {
        let mut rates = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    rates.push(tr(&format!("s{i}"), &format!("s{j}"), vals[k]));
                    k += 1;
                }
            }
        }
        RateMatrix::new(labels(n), rates).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn conservation_semigroup_and_oracle(vals in prop::collection::vec(0.0f64..2.0, 12), start in 0usize..4) {
            let m = random_matrix(4, &vals);
            let g = m.generator().unwrap();
            let p0 = SpinPopulation::pure(4, start);
            let mut t = 1e-3;
            while t <= 100.0 {
                let p = m.evolve(&p0, t).unwrap();
                let sum: f64 = p.p.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                prop_assert!(p.p.iter().all(|x| *x >= 0.0));
                t *= 3.0;
            }
            let (t1, t2) = (0.7, 2.3);
            let direct = m.evolve(&p0, t1 + t2).unwrap();
            let mid = m.evolve(&p0, t1).unwrap();
            let chained = m.evolve(&SpinPopulation { p: mid.p, time: 0.0 }, t2).unwrap();
            for (a, b) in direct.p.iter().zip(&chained.p) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let oracle = integrate_linear(&g, &DVector::from_column_slice(&p0.p), 3.0, 1e-12, 1e-15);
            let p = m.evolve(&p0, 3.0).unwrap();
            for i in 0..4 {
                prop_assert!((p.p[i] - oracle[i]).abs() < 1e-9);
            }
        }
    }
}
