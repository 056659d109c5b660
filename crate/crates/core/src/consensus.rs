//! Weight construction, the consensus step and the nominal reference dynamics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::detect::TrustedNeighborhood;
use crate::error::{Error, Result};
use crate::topology::{AgentId, Topology};

const ROW_SUM_TOL: f64 = 1e-12;
const PERRON_RESIDUAL: f64 = 1e-12;

/// `max(trusted + 1, kappa)`
pub fn normalizer(trusted: usize, kappa: f64) -> f64 {
    (trusted as f64 + 1.0).max(kappa)
}

/// One legitimate agent's weights: `1 / n_w` on each trusted neighbor and
/// the remainder on itself.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightRow {
    pub agent: AgentId,
    pub n_w: f64,
    pub self_weight: f64,
    pub trusted: Vec<AgentId>,
}

impl WeightRow {
    pub fn new(agent: AgentId, trusted: Vec<AgentId>, kappa: f64) -> Self {
        let n_w = normalizer(trusted.len(), kappa);
        let self_weight = 1.0 - trusted.len() as f64 / n_w;
        Self {
            agent,
            n_w,
            self_weight,
            trusted,
        }
    }

    pub fn neighbor_weight(&self) -> f64 {
        1.0 / self.n_w
    }

    pub fn weight(&self, j: AgentId) -> f64 {
        if j == self.agent {
            self.self_weight
        } else if self.trusted.binary_search(&j).is_ok() {
            self.neighbor_weight()
        } else {
            0.0
        }
    }

    pub fn row_sum(&self) -> f64 {
        self.self_weight + self.trusted.iter().map(|_| self.neighbor_weight()).sum::<f64>()
    }

    fn check(&self) -> Result<()> {
        let s = self.row_sum();
        if (s - 1.0).abs() > ROW_SUM_TOL || self.self_weight <= 0.0 {
            return Err(Error::Invariant(format!(
                "weight row of agent {} sums to {s} with self weight {}",
                self.agent, self.self_weight
            )));
        }
        Ok(())
    }
}

/// Time-`t` weights of all legitimate agents.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightAssignment {
    n_legit: usize,
    n_malicious: usize,
    kappa: f64,
    rows: Vec<WeightRow>,
}

impl WeightAssignment {
    pub fn rows(&self) -> &[WeightRow] {
        &self.rows
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Legitimate block `W_L(t)`.
    pub fn legit_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_legit, self.n_legit);
        for row in &self.rows {
            m[(row.agent, row.agent)] = row.self_weight;
            for &j in row.trusted.iter().filter(|&&j| j < self.n_legit) {
                m[(row.agent, j)] = row.neighbor_weight();
            }
        }
        m
    }

    /// Malicious block `W_M(t)`, columns indexed by `m - n_legit`.
    pub fn malicious_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_legit, self.n_malicious);
        for row in &self.rows {
            for &j in row.trusted.iter().filter(|&&j| j >= self.n_legit) {
                m[(row.agent, j - self.n_legit)] = row.neighbor_weight();
            }
        }
        m
    }

    /// `W_L x`
    pub fn apply_legit(&self, x_legit: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                row.self_weight * x_legit[row.agent]
                    + row
                        .trusted
                        .iter()
                        .filter(|&&j| j < self.n_legit)
                        .map(|&j| x_legit[j])
                        .sum::<f64>()
                        * row.neighbor_weight()
            })
            .collect()
    }

    /// `W_M x_M`
    pub fn apply_malicious(&self, x_malicious: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                row.trusted
                    .iter()
                    .filter(|&&j| j >= self.n_legit)
                    .map(|&j| x_malicious[j - self.n_legit])
                    .sum::<f64>()
                    * row.neighbor_weight()
            })
            .collect()
    }

    /// True when every legitimate agent trusts exactly its legitimate
    /// neighbors, so `W_L(t)` equals the nominal matrix and `W_M(t) = 0`.
    pub fn is_nominal(&self, topo: &Topology) -> bool {
        self.rows.iter().all(|row| {
            topo.legit_neighbors(row.agent)
                .map(|l| l == row.trusted.as_slice())
                .unwrap_or(false)
        })
    }

    pub fn has_malicious_weight(&self) -> bool {
        self.rows
            .iter()
            .any(|r| r.trusted.last().is_some_and(|&j| j >= self.n_legit))
    }

    pub fn validate(&self) -> Result<()> {
        self.rows.iter().try_for_each(WeightRow::check)
    }
}

/// Weights from the trusted neighborhoods of all legitimate agents.
pub fn build_weights(
    hoods: &[TrustedNeighborhood],
    topo: &Topology,
    kappa: f64,
) -> Result<WeightAssignment> {
    if !(kappa > 0.0) {
        return Err(Error::Config(format!("kappa must be positive, got {kappa}")));
    }
    if hoods.len() != topo.n_legit() {
        return Err(Error::DimensionMismatch {
            expected: topo.n_legit(),
            got: hoods.len(),
        });
    }
    let mut rows = Vec::with_capacity(hoods.len());
    for (i, h) in hoods.iter().enumerate() {
        if h.observer != i {
            return Err(Error::Protocol(format!(
                "neighborhood {i} belongs to observer {}",
                h.observer
            )));
        }
        if h.trusted.is_empty() {
            return Err(Error::Protocol(format!("agent {i} has an empty trusted neighborhood")));
        }
        if let Some(&j) = h.trusted.iter().find(|&&j| !topo.are_adjacent(i, j)) {
            return Err(Error::Protocol(format!("agent {i} trusts non-neighbor {j}")));
        }
        rows.push(WeightRow::new(i, h.trusted.clone(), kappa));
    }
    let wa = WeightAssignment {
        n_legit: topo.n_legit(),
        n_malicious: topo.n_malicious(),
        kappa,
        rows,
    };
    wa.validate()?;
    Ok(wa)
}

/// Weights in which every legitimate agent trusts exactly its legitimate
/// neighbors.
pub fn nominal_assignment(topo: &Topology, kappa: f64) -> Result<WeightAssignment> {
    let hoods: Vec<TrustedNeighborhood> = (0..topo.n_legit())
        .map(|i| {
            let trusted = topo.legit_neighbors(i)?.to_vec();
            Ok(TrustedNeighborhood {
                observer: i,
                best: *trusted.first().ok_or_else(|| {
                    Error::Topology(format!("legitimate agent {i} has no legitimate neighbor"))
                })?,
                trusted,
            })
        })
        .collect::<Result<_>>()?;
    build_weights(&hoods, topo, kappa)
}

/// Nominal matrix with its Perron vector and second eigenvalue modulus.
#[derive(Clone, Debug)]
pub struct NominalWeights {
    matrix: DMatrix<f64>,
    nu: DVector<f64>,
    rho2: f64,
    /// Eigenpairs of the symmetrized matrix, used for `W^t - 1 nu^T`.
    sym_values: DVector<f64>,
    sym_vectors: DMatrix<f64>,
    perron_index: usize,
}

impl NominalWeights {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn nu(&self) -> &DVector<f64> {
        &self.nu
    }

    pub fn rho2(&self) -> f64 {
        self.rho2
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    /// `‖nu^T W - nu^T‖∞`
    pub fn perron_residual(&self) -> f64 {
        (self.matrix.tr_mul(&self.nu) - &self.nu).amax()
    }

    /// `W^t - 1 nu^T` from the spectral expansion, free of the cancellation
    /// a direct matrix power suffers once the entries approach `nu`.
    pub fn deviation_power(&self, t: u32) -> DMatrix<f64> {
        let n = self.dim();
        if t == 0 {
            let mut m = DMatrix::identity(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] -= self.nu[j];
                }
            }
            return m;
        }
        let sqrt_nu = self.nu.map(f64::sqrt);
        let mut m = DMatrix::zeros(n, n);
        for k in (0..n).filter(|&k| k != self.perron_index) {
            let lam = self.sym_values[k].powi(t as i32);
            if lam == 0.0 {
                continue;
            }
            let u = self.sym_vectors.column(k);
            for i in 0..n {
                let a = lam * u[i] / sqrt_nu[i];
                for j in 0..n {
                    m[(i, j)] += a * u[j] * sqrt_nu[j];
                }
            }
        }
        m
    }

    /// `‖W^t - 1 nu^T‖∞` for `t = 0..=max_t`.
    pub fn gap_norms(&self, max_t: u32) -> Vec<f64> {
        (0..=max_t).map(|t| inf_norm(&self.deviation_power(t))).collect()
    }

    /// `W^t x` by repeated products.
    pub fn power_apply(&self, x: &[f64], t: u32) -> Vec<f64> {
        let mut v = DVector::from_column_slice(x);
        for _ in 0..t {
            v = &self.matrix * v;
        }
        v.as_slice().to_vec()
    }
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Nominal matrix over the legitimate agents, its Perron vector by left
/// power iteration, and `rho2` from the symmetrized spectrum.
pub fn build_nominal(topo: &Topology, kappa: f64) -> Result<NominalWeights> {
    if !topo.is_legit_subgraph_connected() {
        return Err(Error::Model(
            "legitimate subgraph is disconnected, the nominal matrix has no rank-one limit".into(),
        ));
    }
    let matrix = nominal_assignment(topo, kappa)?.legit_matrix();
    let n = matrix.nrows();
    let wt = matrix.transpose();

    let mut nu = DVector::from_element(n, 1.0 / n as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..1_000_000 {
        let mut next = &wt * &nu;
        next /= next.sum();
        nu = next;
        residual = (&wt * &nu - &nu).amax();
        if residual <= 1e-15 {
            break;
        }
    }
    if residual > PERRON_RESIDUAL {
        return Err(Error::Model(format!(
            "Perron vector iteration stalled at residual {residual:e}"
        )));
    }
    if nu.iter().any(|&v| v <= 0.0) {
        return Err(Error::Model("Perron vector is not positive".into()));
    }

    // D^{1/2} W D^{-1/2} with D = diag(nu) is symmetric for this reversible chain.
    let sqrt_nu = nu.map(f64::sqrt);
    let mut sym = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = sqrt_nu[i] * matrix[(i, j)] / sqrt_nu[j];
        }
    }
    let sym = (&sym + sym.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let perron_index = eig.eigenvalues.imax();
    let rho2 = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != perron_index)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    if rho2 >= 1.0 {
        return Err(Error::Model(format!("second eigenvalue modulus {rho2} is not below 1")));
    }

    Ok(NominalWeights {
        matrix,
        nu,
        rho2,
        sym_values: eig.eigenvalues,
        sym_vectors: eig.eigenvectors,
        perron_index,
    })
}

/// `nu^T x_L(0)`
pub fn nominal_limit(nominal: &NominalWeights, x0_legit: &[f64]) -> Result<f64> {
    if x0_legit.len() != nominal.dim() {
        return Err(Error::DimensionMismatch {
            expected: nominal.dim(),
            got: x0_legit.len(),
        });
    }
    Ok(nominal.nu.iter().zip(x0_legit).map(|(a, b)| a * b).sum())
}

/// Legitimate values at time `t` plus the malicious values transmitted at
/// `t - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: u64,
    pub t0: u64,
    pub eta: f64,
    pub legit: Vec<f64>,
    pub initial_legit: Vec<f64>,
}

impl SimState {
    pub fn new(x0_legit: Vec<f64>, t0: u64, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {eta}")));
        }
        if t0 < 1 {
            return Err(Error::Config("consensus start time must be at least 1".into()));
        }
        if let Some(v) = x0_legit.iter().find(|v| v.abs() > eta) {
            return Err(Error::Config(format!("initial value {v} outside [-{eta}, {eta}]")));
        }
        Ok(Self {
            t: 0,
            t0,
            eta,
            initial_legit: x0_legit.clone(),
            legit: x0_legit,
        })
    }

    /// Whether the step from `t` to `t + 1` applies weights.
    pub fn updating(&self) -> bool {
        self.t + 1 >= self.t0
    }
}

/// Advances the legitimate values from `t` to `t + 1` given the malicious
/// transmissions `x_M(t)`. Before `t0 - 1` the values stay frozen and no
/// weights are needed.
pub fn step(state: &mut SimState, weights: Option<&WeightAssignment>, x_malicious: &[f64]) -> Result<()> {
    if state.updating() {
        let wa = weights.ok_or_else(|| {
            Error::Protocol(format!("weights required for the update at t={}", state.t))
        })?;
        if wa.rows.len() != state.legit.len() {
            return Err(Error::DimensionMismatch {
                expected: state.legit.len(),
                got: wa.rows.len(),
            });
        }
        if x_malicious.len() != wa.n_malicious {
            return Err(Error::DimensionMismatch {
                expected: wa.n_malicious,
                got: x_malicious.len(),
            });
        }
        wa.validate()?;
        let own = wa.apply_legit(&state.legit);
        let external = wa.apply_malicious(x_malicious);
        let next: Vec<f64> = own.iter().zip(&external).map(|(a, b)| a + b).collect();
        let slack = state.eta * (1.0 + 1e-12);
        if let Some((i, v)) = next.iter().enumerate().find(|(_, v)| v.abs() > slack) {
            return Err(Error::Invariant(format!(
                "agent {i} left [-eta, eta] with value {v} at t={}",
                state.t + 1
            )));
        }
        state.legit = next;
    }
    state.t += 1;
    Ok(())
}

/// Legitimate trajectory split into the part driven by the initial values
/// and the part injected by malicious transmissions.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    /// First time not yet folded in.
    pub t: u64,
    pub from_initial: Vec<f64>,
    pub from_malicious: Vec<f64>,
}

impl Decomposition {
    /// State at `t = t0 - 1`, before any weighted update.
    pub fn start(x0_legit: &[f64], t0: u64) -> Self {
        Self {
            t: t0.saturating_sub(1),
            from_initial: x0_legit.to_vec(),
            from_malicious: vec![0.0; x0_legit.len()],
        }
    }

    /// Folds in the weights and malicious values of time `t`.
    pub fn advance(&mut self, t: u64, wa: &WeightAssignment, x_malicious: &[f64]) -> Result<()> {
        if t != self.t {
            return Err(Error::Input(format!(
                "decomposition expects step t={}, got t={t}",
                self.t
            )));
        }
        self.from_initial = wa.apply_legit(&self.from_initial);
        let injected = wa.apply_malicious(x_malicious);
        self.from_malicious = wa
            .apply_legit(&self.from_malicious)
            .into_iter()
            .zip(injected)
            .map(|(a, b)| a + b)
            .collect();
        self.t += 1;
        Ok(())
    }

    pub fn recomposed(&self) -> Vec<f64> {
        self.from_initial
            .iter()
            .zip(&self.from_malicious)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// One recorded update: the weights and malicious values used at `t`.
#[derive(Clone, Debug)]
pub struct TraceStep {
    pub t: u64,
    pub weights: WeightAssignment,
    pub x_malicious: Vec<f64>,
}

/// Replays a recorded trace from `t0 - 1` to `t - 1`.
pub fn decompose(trace: &[TraceStep], x0_legit: &[f64], t0: u64, t: u64) -> Result<Decomposition> {
    let mut d = Decomposition::start(x0_legit, t0);
    let start = d.t;
    let needed = t.saturating_sub(start) as usize;
    if trace.len() < needed {
        return Err(Error::Input(format!(
            "trace holds {} steps, {needed} needed to reach t={t}",
            trace.len()
        )));
    }
    for s in &trace[..needed] {
        d.advance(s.t, &s.weights, &s.x_malicious)?;
    }
    Ok(d)
}
