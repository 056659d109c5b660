//! Attack decisions and transmitted values of malicious agents.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttackPolicy {
    Persistent,
    Stationary { p: f64 },
    /// Attack probability `min(floor_increment(eps2, t) + exp(-r1 * attacks so far), 1)`.
    SoftmaxDecay { r1: f64, eps2: f64 },
    /// Attack probability `min(p_bar + ln(1 + exp(-r2 * t)), 1)`.
    LogisticSchedule { p_bar: f64, r2: f64 },
}

impl AttackPolicy {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            AttackPolicy::Persistent => Ok(()),
            AttackPolicy::Stationary { p } if !(0.0..=1.0).contains(&p) => {
                bad(format!("stationary attack probability {p} outside [0, 1]"))
            }
            AttackPolicy::SoftmaxDecay { r1, eps2 } if !(r1 > 0.0 && eps2 > 0.0) => {
                bad(format!("softmax decay needs r1 > 0 and eps2 > 0, got r1={r1}, eps2={eps2}"))
            }
            AttackPolicy::LogisticSchedule { p_bar, r2 } if !(0.0..=1.0).contains(&p_bar) || r2 <= 0.0 => {
                bad(format!("logistic schedule needs p_bar in [0, 1] and r2 > 0, got p_bar={p_bar}, r2={r2}"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackPolicy::Persistent => "persistent",
            AttackPolicy::Stationary { .. } => "stationary",
            AttackPolicy::SoftmaxDecay { .. } => "softmax",
            AttackPolicy::LogisticSchedule { .. } => "logistic",
        }
    }
}

/// Attack decisions `f(0), f(1), ...` of one malicious agent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AttackHistory {
    decisions: Vec<bool>,
    attacks: u64,
}

impl AttackHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_decisions(decisions: impl IntoIterator<Item = bool>) -> Self {
        let mut h = Self::new();
        for f in decisions {
            h.push(f);
        }
        h
    }

    pub fn push(&mut self, f: bool) {
        self.attacks += u64::from(f);
        self.decisions.push(f);
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    /// Number of attacks so far.
    pub fn attack_count(&self) -> u64 {
        self.attacks
    }

    pub fn decisions(&self) -> &[bool] {
        &self.decisions
    }

    pub fn last(&self) -> Option<bool> {
        self.decisions.last().copied()
    }
}

/// `sqrt((1 + eps2)(t + 1) ln(t + 1))`, the cumulative attack-probability floor.
pub fn cumulative_floor(eps2: f64, t: u64) -> f64 {
    let n = (t + 1) as f64;
    ((1.0 + eps2) * n * n.ln()).sqrt()
}

/// Forward difference of [`cumulative_floor`], clamped to `[0, 1]`.
pub fn floor_increment(eps2: f64, t: u64) -> f64 {
    let prev = if t == 0 { 0.0 } else { cumulative_floor(eps2, t - 1) };
    (cumulative_floor(eps2, t) - prev).clamp(0.0, 1.0)
}

/// Probability that the agent attacks at `t` given its history up to `t - 1`.
pub fn attack_probability(policy: &AttackPolicy, history: &AttackHistory, t: u64) -> f64 {
    let p = match *policy {
        AttackPolicy::Persistent => 1.0,
        AttackPolicy::Stationary { p } => p,
        AttackPolicy::SoftmaxDecay { r1, eps2 } => {
            floor_increment(eps2, t) + (-r1 * history.attack_count() as f64).exp()
        }
        AttackPolicy::LogisticSchedule { p_bar, r2 } => p_bar + (-r2 * t as f64).exp().ln_1p(),
    };
    p.clamp(0.0, 1.0)
}

/// Smallest attack probability at `t` over every admissible history.
///
/// For the softmax policy the worst history is the one that attacked at
/// every earlier step.
pub fn min_conditional_probability(policy: &AttackPolicy, t: u64) -> f64 {
    match *policy {
        AttackPolicy::SoftmaxDecay { r1, eps2 } => {
            (floor_increment(eps2, t) + (-r1 * t as f64).exp()).min(1.0)
        }
        _ => attack_probability(policy, &AttackHistory::new(), t),
    }
}

/// `Σ_{k ≤ t}` of [`min_conditional_probability`].
pub fn cumulative_min_probability(policy: &AttackPolicy, t: u64) -> f64 {
    (0..=t).map(|k| min_conditional_probability(policy, k)).sum()
}

/// Draws `f(t)` and appends it to the history. One uniform is consumed per
/// call, whatever the policy.
pub fn decide_attack<R: Rng + ?Sized>(
    policy: &AttackPolicy,
    history: &mut AttackHistory,
    t: u64,
    rng: &mut R,
) -> Result<bool> {
    if history.len() as u64 != t {
        return Err(Error::Protocol(format!(
            "attack decision for t={t} requested with a history of length {}",
            history.len()
        )));
    }
    let p = attack_probability(policy, history, t);
    let f = rng.random::<f64>() < p;
    history.push(f);
    Ok(f)
}

/// Fixed convex weights a non-attacking malicious agent uses on itself and
/// its neighbors.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticWeights {
    self_weight: f64,
    neighbor_weights: Vec<f64>,
}

impl StaticWeights {
    /// Equal weight `1 / (degree + 1)` on itself and each neighbor.
    pub fn uniform(degree: usize) -> Self {
        let w = 1.0 / (degree as f64 + 1.0);
        Self {
            self_weight: w,
            neighbor_weights: vec![w; degree],
        }
    }

    pub fn new(self_weight: f64, neighbor_weights: Vec<f64>) -> Result<Self> {
        let total = self_weight + neighbor_weights.iter().sum::<f64>();
        if self_weight <= 0.0 || neighbor_weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "static weights must be nonnegative with positive self weight and sum to 1, got sum {total}"
            )));
        }
        Ok(Self {
            self_weight,
            neighbor_weights,
        })
    }

    pub fn degree(&self) -> usize {
        self.neighbor_weights.len()
    }
}

/// Value broadcast by a malicious agent: `eta` while attacking, otherwise a
/// consensus step over previous values.
pub fn malicious_value(
    attacking: bool,
    eta: f64,
    own_prev: f64,
    neighbor_prevs: &[f64],
    weights: &StaticWeights,
) -> Result<f64> {
    if attacking {
        return Ok(eta);
    }
    if neighbor_prevs.len() != weights.degree() {
        return Err(Error::DimensionMismatch {
            expected: weights.degree(),
            got: neighbor_prevs.len(),
        });
    }
    let v = weights.self_weight * own_prev
        + weights
            .neighbor_weights
            .iter()
            .zip(neighbor_prevs)
            .map(|(w, x)| w * x)
            .sum::<f64>();
    Ok(v.clamp(-eta, eta))
}
