//! Undirected communication graph with legitimate and malicious roles.
//!
//! Legitimate agents occupy indices `0..n_legit`, malicious agents the
//! remaining `n_legit..n_legit + n_malicious`. Neighbor lists are kept
//! sorted, so the legitimate neighbors of an agent are always a prefix of
//! its neighbor list and the malicious neighbors the matching suffix.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

pub type AgentId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Legitimate,
    Malicious,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Legitimate => "legit",
            Role::Malicious => "malicious",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    n_legit: usize,
    n_malicious: usize,
    adjacency: Vec<Vec<AgentId>>,
}

/// Parameters of the random graph construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopologyParams {
    pub n_legit: usize,
    pub n_malicious: usize,
    pub extra_legit_pairs: usize,
    pub malicious_link_prob: f64,
}

impl TopologyParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_legit < 3 {
            return Err(Error::Config(format!(
                "n_legit must be at least 3, got {}",
                self.n_legit
            )));
        }
        if !(0.0..=1.0).contains(&self.malicious_link_prob) {
            return Err(Error::Config(format!(
                "malicious_link_prob must lie in [0, 1], got {}",
                self.malicious_link_prob
            )));
        }
        let n = self.n_legit;
        let free_pairs = n * (n - 1) / 2 - n;
        if self.extra_legit_pairs > free_pairs {
            return Err(Error::Config(format!(
                "{} extra legitimate pairs requested but only {} non-cycle pairs exist",
                self.extra_legit_pairs, free_pairs
            )));
        }
        Ok(())
    }
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            n_legit: 20,
            n_malicious: 30,
            extra_legit_pairs: 20,
            malicious_link_prob: 0.2,
        }
    }
}

impl Topology {
    /// Builds a graph from an undirected edge list.
    ///
    /// Only structural checks are applied here (index range, no self-loops);
    /// use [`Topology::validate`] for the model requirements.
    pub fn from_edges(
        n_legit: usize,
        n_malicious: usize,
        edges: impl IntoIterator<Item = (AgentId, AgentId)>,
    ) -> Result<Self> {
        let n = n_legit + n_malicious;
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in edges {
            for idx in [a, b] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if a == b {
                return Err(Error::Topology(format!("self-loop at agent {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            n_legit,
            n_malicious,
            adjacency,
        })
    }

    /// Random graph: a cycle over the legitimate agents, `extra_legit_pairs`
    /// further distinct legitimate edges, and independent links from every
    /// malicious agent to every other agent with `malicious_link_prob`.
    /// A malicious agent left without a legitimate neighbor gets one,
    /// chosen uniformly.
    pub fn generate<R: Rng + ?Sized>(params: &TopologyParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let nl = params.n_legit;
        let n = nl + params.n_malicious;
        let mut adj = vec![vec![false; n]; n];
        let link = |adj: &mut Vec<Vec<bool>>, a: usize, b: usize| {
            adj[a][b] = true;
            adj[b][a] = true;
        };

        for i in 0..nl {
            link(&mut adj, i, (i + 1) % nl);
        }

        let mut added = 0;
        while added < params.extra_legit_pairs {
            let a = rng.random_range(0..nl);
            let b = rng.random_range(0..nl);
            if a == b || adj[a][b] {
                continue;
            }
            link(&mut adj, a, b);
            added += 1;
        }

        for m in nl..n {
            for other in 0..m {
                if rng.random_bool(params.malicious_link_prob) {
                    link(&mut adj, other, m);
                }
            }
        }

        for m in nl..n {
            if !(0..nl).any(|l| adj[m][l]) {
                let l = rng.random_range(0..nl);
                link(&mut adj, l, m);
            }
        }

        let edges = (0..n).flat_map(|a| {
            let row = &adj[a];
            (a + 1..n).filter(move |&b| row[b]).map(move |b| (a, b))
        });
        let topo = Self::from_edges(nl, params.n_malicious, edges.collect::<Vec<_>>())?;
        topo.validate()?;
        Ok(topo)
    }

    /// Checks the model requirements on the graph.
    pub fn validate(&self) -> Result<()> {
        for (i, list) in self.adjacency.iter().enumerate() {
            for &j in list {
                if j == i {
                    return Err(Error::Topology(format!("self-loop at agent {i}")));
                }
                if self.adjacency[j].binary_search(&i).is_err() {
                    return Err(Error::Topology(format!("edge {i}-{j} is not symmetric")));
                }
            }
        }
        if self.n_legit == 0 {
            return Err(Error::Topology("no legitimate agents".into()));
        }
        if !self.is_legit_subgraph_connected() {
            return Err(Error::Topology(
                "subgraph induced by the legitimate agents is disconnected".into(),
            ));
        }
        for i in 0..self.n_legit {
            if self.legit_prefix(i).is_empty() {
                return Err(Error::Topology(format!(
                    "legitimate agent {i} has no legitimate neighbor"
                )));
            }
        }
        for m in self.n_legit..self.n_agents() {
            if self.legit_prefix(m).is_empty() {
                return Err(Error::Topology(format!(
                    "malicious agent {m} has no legitimate neighbor"
                )));
            }
        }
        Ok(())
    }

    pub fn n_legit(&self) -> usize {
        self.n_legit
    }

    pub fn n_malicious(&self) -> usize {
        self.n_malicious
    }

    pub fn n_agents(&self) -> usize {
        self.n_legit + self.n_malicious
    }

    pub fn role(&self, i: AgentId) -> Result<Role> {
        self.check(i)?;
        Ok(if i < self.n_legit {
            Role::Legitimate
        } else {
            Role::Malicious
        })
    }

    pub fn is_legit(&self, i: AgentId) -> bool {
        i < self.n_legit
    }

    pub fn neighbors(&self, i: AgentId) -> Result<&[AgentId]> {
        self.check(i)?;
        Ok(&self.adjacency[i])
    }

    pub fn legit_neighbors(&self, i: AgentId) -> Result<&[AgentId]> {
        self.check(i)?;
        Ok(self.legit_prefix(i))
    }

    pub fn malicious_neighbors(&self, i: AgentId) -> Result<&[AgentId]> {
        self.check(i)?;
        let list = &self.adjacency[i];
        Ok(&list[self.legit_prefix(i).len()..])
    }

    pub fn degree(&self, i: AgentId) -> Result<usize> {
        Ok(self.neighbors(i)?.len())
    }

    pub fn are_adjacent(&self, a: AgentId, b: AgentId) -> bool {
        a < self.n_agents() && self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Undirected edges `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    pub fn n_edges(&self) -> usize {
        self.edges().count()
    }

    /// Number of `(legitimate observer, legitimate neighbor)` ordered pairs.
    pub fn legit_pair_count(&self) -> usize {
        (0..self.n_legit).map(|i| self.legit_prefix(i).len()).sum()
    }

    /// Number of `(legitimate observer, malicious neighbor)` ordered pairs.
    pub fn malicious_pair_count(&self) -> usize {
        (0..self.n_legit)
            .map(|i| self.adjacency[i].len() - self.legit_prefix(i).len())
            .sum()
    }

    /// Breadth-first search over legitimate-legitimate edges only.
    pub fn is_legit_subgraph_connected(&self) -> bool {
        if self.n_legit == 0 {
            return true;
        }
        let mut seen = vec![false; self.n_legit];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(a) = queue.pop_front() {
            for &b in self.legit_prefix(a) {
                if !seen[b] {
                    seen[b] = true;
                    reached += 1;
                    queue.push_back(b);
                }
            }
        }
        reached == self.n_legit
    }

    fn legit_prefix(&self, i: AgentId) -> &[AgentId] {
        let list = &self.adjacency[i];
        let cut = list.partition_point(|&j| j < self.n_legit);
        &list[..cut]
    }

    fn check(&self, i: AgentId) -> Result<()> {
        if i >= self.n_agents() {
            Err(Error::IndexOutOfRange {
                index: i,
                n: self.n_agents(),
            })
        } else {
            Ok(())
        }
    }
}

/// Edge-list text form: a `n_legit n_malicious` header, then one sorted
/// `i j` pair per line.
impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.n_legit, self.n_malicious)?;
        for (a, b) in self.edges() {
            writeln!(f, "{a} {b}")?;
        }
        Ok(())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Input("empty edge list".into()))?;
        let (n_legit, n_malicious) = parse_pair(header)?;
        let edges = lines.map(parse_pair).collect::<Result<Vec<_>>>()?;
        Self::from_edges(n_legit, n_malicious, edges)
    }
}

fn parse_pair(line: &str) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace().map(|tok| {
        tok.parse::<usize>()
            .map_err(|e| Error::Input(format!("bad integer {tok:?} in edge list: {e}")))
    });
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((a?, b?)),
        _ => Err(Error::Input(format!("expected two integers, got {line:?}"))),
    }
}
