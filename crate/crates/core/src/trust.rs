//! Stochastic trust observations and their running sums.

use std::io::{self, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::topology::{AgentId, Topology};

/// Distribution of a single trust observation. Both laws are bounded in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrustLaw {
    Uniform { lo: f64, hi: f64 },
    Bernoulli { mean: f64 },
}

impl TrustLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            TrustLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            TrustLaw::Bernoulli { mean } => mean,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            TrustLaw::Uniform { lo, hi } => 0.0 <= lo && lo <= hi && hi <= 1.0,
            TrustLaw::Bernoulli { mean } => (0.0..=1.0).contains(&mean),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{what} trust law {self:?} is not within [0, 1]")))
        }
    }

    /// Maps one uniform draw `u ∈ [0, 1)` to an observation.
    fn from_unit(&self, u: f64) -> f64 {
        match *self {
            TrustLaw::Uniform { lo, hi } => lo + (hi - lo) * u,
            TrustLaw::Bernoulli { mean } => {
                if u < mean {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Observation laws for trustworthy and attacking transmissions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrustModel {
    legit: TrustLaw,
    attack: TrustLaw,
}

impl TrustModel {
    pub fn new(legit: TrustLaw, attack: TrustLaw) -> Result<Self> {
        legit.validate("legitimate")?;
        attack.validate("attack")?;
        if legit.mean() <= attack.mean() {
            return Err(Error::Config(format!(
                "legitimate trust mean {} must exceed attack trust mean {}",
                legit.mean(),
                attack.mean()
            )));
        }
        Ok(Self { legit, attack })
    }

    pub fn uniform(legit: (f64, f64), attack: (f64, f64)) -> Result<Self> {
        Self::new(
            TrustLaw::Uniform { lo: legit.0, hi: legit.1 },
            TrustLaw::Uniform { lo: attack.0, hi: attack.1 },
        )
    }

    pub fn legit_law(&self) -> TrustLaw {
        self.legit
    }

    pub fn attack_law(&self) -> TrustLaw {
        self.attack
    }

    pub fn legit_mean(&self) -> f64 {
        self.legit.mean()
    }

    pub fn attack_mean(&self) -> f64 {
        self.attack.mean()
    }

    /// `E_L − E_M`, strictly positive.
    pub fn gap(&self) -> f64 {
        self.legit_mean() - self.attack_mean()
    }

    /// Maps a uniform draw to an observation, so that one draw per link and
    /// step is consumed regardless of whether the sender attacks.
    pub fn observe(&self, sender_attacking: bool, u: f64) -> f64 {
        if sender_attacking {
            self.attack.from_unit(u)
        } else {
            self.legit.from_unit(u)
        }
    }
}

impl Default for TrustModel {
    fn default() -> Self {
        Self::uniform((0.4, 1.0), (0.0, 0.6)).expect("default trust model is valid")
    }
}

pub fn sample_trust<R: Rng + ?Sized>(model: &TrustModel, sender_attacking: bool, rng: &mut R) -> f64 {
    model.observe(sender_attacking, rng.random::<f64>())
}

/// Aggregate trust `β_ij(t)` for every legitimate observer `i` and every
/// neighbor `j`, stored in the same order as the observer's neighbor list.
#[derive(Clone, Debug, PartialEq)]
pub struct TrustLedger {
    pairs: Vec<Vec<AgentId>>,
    beta: Vec<Vec<f64>>,
    t: Option<u64>,
}

/// Observations for one time step, shaped like the ledger.
pub type Observations = Vec<Vec<f64>>;

impl TrustLedger {
    pub fn new(topo: &Topology) -> Self {
        let pairs: Vec<Vec<AgentId>> = (0..topo.n_legit())
            .map(|i| topo.neighbors(i).expect("legit index in range").to_vec())
            .collect();
        let beta = pairs.iter().map(|p| vec![0.0; p.len()]).collect();
        Self { pairs, beta, t: None }
    }

    /// Time of the last accumulated observation, `None` before the first.
    pub fn time(&self) -> Option<u64> {
        self.t
    }

    pub fn n_observers(&self) -> usize {
        self.pairs.len()
    }

    pub fn observed(&self, i: AgentId) -> &[AgentId] {
        &self.pairs[i]
    }

    pub fn row(&self, i: AgentId) -> &[f64] {
        &self.beta[i]
    }

    pub fn beta(&self, i: AgentId, j: AgentId) -> Option<f64> {
        let pos = self.pairs.get(i)?.binary_search(&j).ok()?;
        Some(self.beta[i][pos])
    }

    /// A zeroed observation buffer of the right shape.
    pub fn blank_observations(&self) -> Observations {
        self.pairs.iter().map(|p| vec![0.0; p.len()]).collect()
    }

    /// Adds the observations taken at time `t`.
    pub fn accumulate(&mut self, t: u64, obs: &Observations) -> Result<()> {
        let expected = self.t.map_or(0, |prev| prev + 1);
        if t != expected {
            return Err(Error::Protocol(format!(
                "trust observations for t={t} arrived, expected t={expected}"
            )));
        }
        if obs.len() != self.pairs.len() {
            return Err(Error::Protocol(format!(
                "observations cover {} observers, ledger tracks {}",
                obs.len(),
                self.pairs.len()
            )));
        }
        for (i, (row, o)) in self.beta.iter().zip(obs).enumerate() {
            if row.len() != o.len() {
                return Err(Error::Protocol(format!(
                    "observer {i}: {} observations for {} tracked neighbors",
                    o.len(),
                    row.len()
                )));
            }
        }
        for (row, o) in self.beta.iter_mut().zip(obs) {
            for (b, a) in row.iter_mut().zip(o) {
                *b += *a;
            }
        }
        self.t = Some(t);
        Ok(())
    }

    /// Appends `t,i,j,alpha,beta` rows for the step just accumulated.
    pub fn write_trace<W: Write>(&self, out: &mut W, obs: &Observations) -> io::Result<()> {
        let Some(t) = self.t else { return Ok(()) };
        for (i, (pairs, o)) in self.pairs.iter().zip(obs).enumerate() {
            for ((&j, a), b) in pairs.iter().zip(o).zip(&self.beta[i]) {
                writeln!(out, "{t},{i},{j},{a},{b}")?;
            }
        }
        Ok(())
    }
}

pub const TRUST_TRACE_HEADER: &str = "t,i,j,alpha,beta";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStreams, TRUST};

    fn small_topo() -> Topology {
        Topology::from_edges(3, 1, [(0, 1), (1, 2), (0, 2), (0, 3)]).unwrap()
    }

    #[test]
    fn uniform_means() {
        let m = TrustModel::default();
        assert!((m.legit_mean() - 0.7).abs() < 1e-15);
        assert!((m.attack_mean() - 0.3).abs() < 1e-15);
        assert!((m.gap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn legit_sample_mean() {
        let m = TrustModel::default();
        let mut rng = RngStreams::new(11).stream(TRUST, 0);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let a = sample_trust(&m, false, &mut rng);
            assert!((0.4..=1.0).contains(&a));
            sum += a;
        }
        assert!((sum / n as f64 - 0.7).abs() < 0.01);
    }

    #[test]
    fn attack_sample_mean() {
        let m = TrustModel::default();
        let mut rng = RngStreams::new(12).stream(TRUST, 0);
        let n = 100_000;
        let sum: f64 = (0..n).map(|_| sample_trust(&m, true, &mut rng)).sum();
        assert!((sum / n as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn degenerate_interval_is_a_point_mass() {
        let m = TrustModel::uniform((0.5, 0.5), (0.0, 0.2)).unwrap();
        let mut rng = RngStreams::new(0).stream(TRUST, 0);
        for _ in 0..100 {
            assert_eq!(sample_trust(&m, false, &mut rng), 0.5);
        }
    }

    #[test]
    fn model_validation() {
        assert!(TrustModel::uniform((0.0, 0.6), (0.4, 1.0)).is_err());
        assert!(TrustModel::uniform((0.4, 1.2), (0.0, 0.6)).is_err());
        assert!(TrustModel::uniform((0.7, 0.4), (0.0, 0.6)).is_err());
        assert!(TrustModel::new(TrustLaw::Bernoulli { mean: 0.9 }, TrustLaw::Bernoulli { mean: 0.1 }).is_ok());
    }

    #[test]
    fn zero_and_one_increments() {
        let topo = small_topo();
        let mut zeros = TrustLedger::new(&topo);
        let mut ones = TrustLedger::new(&topo);
        for t in 0..10 {
            let z = zeros.blank_observations();
            zeros.accumulate(t, &z).unwrap();
            let o: Observations = z.iter().map(|r| vec![1.0; r.len()]).collect();
            ones.accumulate(t, &o).unwrap();
        }
        assert_eq!(zeros.beta(0, 3), Some(0.0));
        assert_eq!(ones.beta(0, 3), Some(10.0));
        assert_eq!(ones.beta(2, 1), Some(10.0));
        assert_eq!(ones.beta(2, 3), None);
    }

    #[test]
    fn replay_matches_resummation() {
        let topo = small_topo();
        let model = TrustModel::default();
        let mut rng = RngStreams::new(3).stream(TRUST, 0);
        let mut ledger = TrustLedger::new(&topo);
        let mut trace = Vec::new();
        for t in 0..50 {
            let mut obs = ledger.blank_observations();
            for row in obs.iter_mut() {
                for a in row.iter_mut() {
                    *a = sample_trust(&model, false, &mut rng);
                }
            }
            ledger.accumulate(t, &obs).unwrap();
            trace.push(obs);
        }
        for i in 0..3 {
            for (k, &j) in ledger.observed(i).to_vec().iter().enumerate() {
                let resum: f64 = trace.iter().map(|o| o[i][k]).sum();
                assert!((ledger.beta(i, j).unwrap() - resum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_order_and_missing_pairs() {
        let topo = small_topo();
        let mut ledger = TrustLedger::new(&topo);
        let obs = ledger.blank_observations();
        assert!(matches!(ledger.accumulate(1, &obs), Err(Error::Protocol(_))));
        let mut short = obs.clone();
        short[0].pop();
        assert!(matches!(ledger.accumulate(0, &short), Err(Error::Protocol(_))));
        ledger.accumulate(0, &obs).unwrap();
        assert!(matches!(ledger.accumulate(0, &obs), Err(Error::Protocol(_))));
    }

    #[test]
    fn trace_rows() {
        let topo = small_topo();
        let mut ledger = TrustLedger::new(&topo);
        let mut obs = ledger.blank_observations();
        obs[0][0] = 0.5;
        ledger.accumulate(0, &obs).unwrap();
        let mut buf = Vec::new();
        ledger.write_trace(&mut buf, &obs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("0,0,1,0.5,0.5\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
