//! Trusted-neighborhood learning from aggregate trust.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::topology::{AgentId, Topology};
use crate::trust::TrustLedger;

/// Detection slack `ξ_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdSchedule {
    /// `sqrt((1 + eps1)(t + 1) ln(t + 1))`
    SqrtLog { eps1: f64 },
    /// `scale * (t + 1)^gamma` with `gamma ∈ (0.5, 1)`
    PowerLaw { scale: f64, gamma: f64 },
    /// `slope * (t + 1)`
    LinearGap { slope: f64 },
}

impl ThresholdSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ThresholdSchedule::SqrtLog { eps1 } => eps1 > 0.0,
            ThresholdSchedule::PowerLaw { scale, gamma } => scale > 0.0 && gamma > 0.5 && gamma < 1.0,
            ThresholdSchedule::LinearGap { slope } => slope > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid threshold schedule {self:?}")))
        }
    }

    pub fn threshold(&self, t: u64) -> f64 {
        let n = (t + 1) as f64;
        match *self {
            ThresholdSchedule::SqrtLog { eps1 } => ((1.0 + eps1) * n * n.ln()).sqrt(),
            ThresholdSchedule::PowerLaw { scale, gamma } => scale * n.powf(gamma),
            ThresholdSchedule::LinearGap { slope } => slope * n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ThresholdSchedule::SqrtLog { .. } => "sqrtlog",
            ThresholdSchedule::PowerLaw { .. } => "powerlaw",
            ThresholdSchedule::LinearGap { .. } => "lineargap",
        }
    }
}

/// Either one schedule shared by every legitimate agent or one per agent.
#[derive(Clone, Debug, PartialEq)]
pub enum SchedulePlan {
    Shared(ThresholdSchedule),
    PerAgent(Vec<ThresholdSchedule>),
}

impl SchedulePlan {
    pub fn for_agent(&self, i: AgentId) -> &ThresholdSchedule {
        match self {
            SchedulePlan::Shared(s) => s,
            SchedulePlan::PerAgent(v) => &v[i],
        }
    }

    pub fn validate(&self, n_legit: usize) -> Result<()> {
        match self {
            SchedulePlan::Shared(s) => s.validate(),
            SchedulePlan::PerAgent(v) => {
                if v.len() != n_legit {
                    return Err(Error::DimensionMismatch {
                        expected: n_legit,
                        got: v.len(),
                    });
                }
                v.iter().try_for_each(ThresholdSchedule::validate)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrustedNeighborhood {
    pub observer: AgentId,
    /// Most trusted neighbor, smallest index among ties.
    pub best: AgentId,
    /// Trusted neighbors in increasing index order.
    pub trusted: Vec<AgentId>,
}

impl TrustedNeighborhood {
    pub fn contains(&self, j: AgentId) -> bool {
        self.trusted.binary_search(&j).is_ok()
    }

    /// Legitimate neighbors left out.
    pub fn excluded_legit(&self, topo: &Topology) -> usize {
        let legit = topo.legit_neighbors(self.observer).unwrap_or(&[]);
        legit.len() - self.trusted.iter().filter(|&&j| topo.is_legit(j)).count()
    }

    /// Malicious neighbors let in.
    pub fn included_malicious(&self, topo: &Topology) -> usize {
        self.trusted.iter().filter(|&&j| !topo.is_legit(j)).count()
    }

    /// True when the trusted set is exactly the legitimate neighborhood.
    pub fn is_correct(&self, topo: &Topology) -> bool {
        topo.legit_neighbors(self.observer)
            .map(|legit| legit == self.trusted.as_slice())
            .unwrap_or(false)
    }
}

/// Neighbors of `i` whose aggregate trust lies within `xi` of the most
/// trusted one.
pub fn trusted_neighborhood(
    ledger: &TrustLedger,
    topo: &Topology,
    i: AgentId,
    xi: f64,
) -> Result<TrustedNeighborhood> {
    if !topo.is_legit(i) {
        return Err(Error::Protocol(format!("agent {i} is not a legitimate observer")));
    }
    let nbrs = topo.neighbors(i)?;
    if nbrs.is_empty() {
        return Err(Error::Topology(format!("legitimate agent {i} has no neighbors")));
    }
    if ledger.observed(i) != nbrs {
        return Err(Error::Protocol(format!(
            "trust ledger of agent {i} does not cover its neighborhood"
        )));
    }
    let beta = ledger.row(i);
    let mut best = 0;
    for k in 1..beta.len() {
        if beta[k] > beta[best] {
            best = k;
        }
    }
    let top = beta[best];
    let trusted = nbrs
        .iter()
        .zip(beta)
        .filter(|&(_, &b)| top - b <= xi)
        .map(|(&j, _)| j)
        .collect();
    Ok(TrustedNeighborhood {
        observer: i,
        best: nbrs[best],
        trusted,
    })
}

/// Runs [`trusted_neighborhood`] for every legitimate agent at time `t`.
pub fn classify_all(
    ledger: &TrustLedger,
    topo: &Topology,
    plan: &SchedulePlan,
    t: u64,
) -> Result<Vec<TrustedNeighborhood>> {
    (0..topo.n_legit())
        .map(|i| trusted_neighborhood(ledger, topo, i, plan.for_agent(i).threshold(t)))
        .collect()
}

pub const CLASSIFICATION_TRACE_HEADER: &str = "t,i,j,trusted,truth";

/// Appends `t,i,j,trusted,truth` rows.
pub fn write_classification_trace<W: Write>(
    out: &mut W,
    topo: &Topology,
    t: u64,
    hoods: &[TrustedNeighborhood],
) -> io::Result<()> {
    for h in hoods {
        for &j in topo.neighbors(h.observer).unwrap_or(&[]) {
            let truth = if topo.is_legit(j) { "legit" } else { "malicious" };
            writeln!(out, "{t},{},{j},{},{truth}", h.observer, u8::from(h.contains(j)))?;
        }
    }
    Ok(())
}
