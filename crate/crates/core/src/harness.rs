//! Single runs, Monte Carlo batches and empirical-versus-analytical checks.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::attack::{
    attack_probability, cumulative_min_probability, decide_attack, malicious_value, AttackHistory,
    AttackPolicy, StaticWeights,
};
use crate::bounds::{
    concentration_tail_bound, deviation_bound, g_functions, legit_misclass_bound,
    malicious_misclass_bound, malicious_tail_bound, pairwise_tail_bound, rate_at, tf_tail_bound,
    Bound, BoundInputs,
};
use crate::consensus::{
    build_nominal, build_weights, nominal_limit, step, Decomposition, NominalWeights, SimState,
};
use crate::detect::{classify_all, write_classification_trace, SchedulePlan, ThresholdSchedule};
use crate::error::{Error, Result};
use crate::rng::{RngStreams, SimRng, ATTACK, INITIAL_VALUES, TOPOLOGY, TRUST};
use crate::topology::{Topology, TopologyParams};
use crate::trust::{sample_trust, TrustLedger, TrustModel};

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub topology: TopologyParams,
    pub trust: TrustModel,
    pub attack: AttackPolicy,
    pub threshold: SchedulePlan,
    pub kappa: f64,
    pub eta: f64,
    pub t0: u64,
    pub horizon: u64,
    pub n_runs: usize,
    pub base_seed: u64,
    /// Draw a fresh graph for every run instead of one per batch.
    pub resample_topology: bool,
}

impl SimConfig {
    /// The twenty-agent benchmark with thirty attackers.
    pub fn benchmark(attack: AttackPolicy) -> Self {
        Self {
            topology: TopologyParams::default(),
            trust: TrustModel::default(),
            attack,
            threshold: SchedulePlan::Shared(ThresholdSchedule::SqrtLog { eps1: 0.005 }),
            kappa: 10.0,
            eta: 4.0,
            t0: 25,
            horizon: 200,
            n_runs: 100,
            base_seed: 0,
            resample_topology: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.attack.validate()?;
        self.threshold.validate(self.topology.n_legit)?;
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.t0 < 1 {
            return Err(Error::Config("t0 must be at least 1".into()));
        }
        if self.horizon < self.t0 {
            return Err(Error::Config(format!(
                "horizon {} must not precede t0 {}",
                self.horizon, self.t0
            )));
        }
        if self.n_runs < 1 {
            return Err(Error::Config("at least one run is required".into()));
        }
        Ok(())
    }

    /// Bound constants matching this configuration.
    pub fn bound_inputs(&self, eps1: f64, eps2: f64, delta: f64) -> BoundInputs {
        BoundInputs {
            n_legit: self.topology.n_legit,
            n_malicious: self.topology.n_malicious,
            gap: self.trust.gap(),
            eps1,
            eps2,
            eta: self.eta,
            kappa: self.kappa,
            delta,
            t0: self.t0,
        }
    }
}

/// Everything recorded about one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    /// Legitimate neighbors left out, summed over observers, per `t`.
    pub excluded_legit: Vec<u32>,
    /// Malicious neighbors let in, summed over observers, per `t`.
    pub included_malicious: Vec<u32>,
    pub legit_pairs: u32,
    pub malicious_pairs: u32,
    /// Every observer trusts exactly its legitimate neighbors.
    pub all_correct: Vec<bool>,
    pub tf: Option<u64>,
    /// `max_i |x_i(t) - mean_L x(t)|`
    pub disagreement: Vec<f64>,
    /// `max_i |x_i(t) - nu^T x_L(0)|`
    pub deviation: Vec<f64>,
    /// Fraction of malicious agents attacking at `t`.
    pub attack_rate: Vec<f64>,
    pub nominal_value: f64,
    /// Mean legitimate value at the horizon.
    pub z: f64,
    /// `‖x_L(t) - z 1‖_nu`
    pub nu_distance: Vec<f64>,
    /// Earliest `τ >= t0 - 1` with nominal weights applied at every step from `τ` on.
    pub nominal_from: Option<u64>,
    /// `max_i |x_L(H) - (x̃ + φ)|`
    pub decomposition_residual: f64,
    pub final_legit: Vec<f64>,
    pub trajectory: Vec<Vec<f64>>,
}

impl RunMetrics {
    pub fn horizon(&self) -> u64 {
        self.disagreement.len() as u64 - 1
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviation.iter().copied().fold(0.0, f64::max)
    }

    pub fn legit_exclusion_freq(&self, t: usize) -> f64 {
        ratio(self.excluded_legit[t], self.legit_pairs)
    }

    pub fn malicious_inclusion_freq(&self, t: usize) -> f64 {
        ratio(self.included_malicious[t], self.malicious_pairs)
    }
}

fn ratio(a: u32, b: u32) -> f64 {
    if b == 0 {
        0.0
    } else {
        f64::from(a) / f64::from(b)
    }
}

pub const TRAJECTORY_TRACE_HEADER: &str = "t,agent,value,role";
pub const ATTACK_TRACE_HEADER: &str = "t,m,p,f";

/// CSV traces of a single run, without header lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTraces {
    pub trust: String,
    pub classification: String,
    pub trajectory: String,
    pub attacks: String,
}

/// A configuration together with its graph and nominal dynamics.
#[derive(Clone, Debug)]
pub struct Simulator {
    config: SimConfig,
    topology: Topology,
    nominal: NominalWeights,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let topology = generate_for_seed(&config.topology, config.base_seed)?;
        let nominal = build_nominal(&topology, config.kappa)?;
        Ok(Self {
            config,
            topology,
            nominal,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn nominal(&self) -> &NominalWeights {
        &self.nominal
    }

    /// Run number `run_index`, seeded with `base_seed + run_index`.
    pub fn run_index(&self, run_index: u64) -> Result<RunMetrics> {
        let seed = self.config.base_seed.wrapping_add(run_index);
        if self.config.resample_topology {
            let topo = generate_for_seed(&self.config.topology, seed)?;
            let nominal = build_nominal(&topo, self.config.kappa)?;
            run_once(&self.config, &topo, &nominal, seed, None)
        } else {
            run_once(&self.config, &self.topology, &self.nominal, seed, None)
        }
    }

    pub fn run_traced(&self, run_index: u64) -> Result<(RunMetrics, RunTraces)> {
        let seed = self.config.base_seed.wrapping_add(run_index);
        let mut traces = RunTraces::default();
        let m = run_once(&self.config, &self.topology, &self.nominal, seed, Some(&mut traces))?;
        Ok((m, traces))
    }
}

fn generate_for_seed(params: &TopologyParams, seed: u64) -> Result<Topology> {
    Topology::generate(params, &mut RngStreams::new(seed).stream(TOPOLOGY, 0))
}

/// One simulated trajectory.
///
/// Within a step: attacks are decided and values broadcast, trust is
/// observed and accumulated, neighborhoods are classified with the aggregate
/// trust up to `t`, then, from `t0 - 1` on, the weights are built and applied.
pub fn run_once(
    config: &SimConfig,
    topo: &Topology,
    nominal: &NominalWeights,
    seed: u64,
    mut traces: Option<&mut RunTraces>,
) -> Result<RunMetrics> {
    let streams = RngStreams::new(seed);
    let nl = topo.n_legit();
    let nm = topo.n_malicious();
    let n = topo.n_agents();
    let eta = config.eta;
    let horizon = config.horizon;
    let ctx = |t: u64| move |e: Error| e.with_context(format!("seed {seed}, t={t}"));

    let mut init_rng = streams.stream(INITIAL_VALUES, 0);
    let x0: Vec<f64> = (0..n).map(|_| init_rng.random_range(-eta..=eta)).collect();
    let x0_legit = x0[..nl].to_vec();
    let nominal_value = nominal_limit(nominal, &x0_legit)?;

    let mut state = SimState::new(x0_legit.clone(), config.t0, eta)?;
    let mut decomposition = Decomposition::start(&x0_legit, config.t0);
    let mut ledger = TrustLedger::new(topo);

    let mut attack_rngs: Vec<SimRng> = (0..nm).map(|k| streams.stream(ATTACK, (nl + k) as u64)).collect();
    let mut histories = vec![AttackHistory::new(); nm];
    let static_weights: Vec<StaticWeights> = (nl..n)
        .map(|m| StaticWeights::uniform(topo.neighbors(m).map(<[_]>::len).unwrap_or(0)))
        .collect();
    let mut trust_rngs: Vec<Vec<SimRng>> = (0..nl)
        .map(|i| {
            ledger
                .observed(i)
                .iter()
                .map(|&j| streams.stream(TRUST, (i * n + j) as u64))
                .collect()
        })
        .collect();

    let steps = horizon as usize + 1;
    let mut m = RunMetrics {
        seed,
        excluded_legit: Vec::with_capacity(steps),
        included_malicious: Vec::with_capacity(steps),
        legit_pairs: topo.legit_pair_count() as u32,
        malicious_pairs: topo.malicious_pair_count() as u32,
        all_correct: Vec::with_capacity(steps),
        tf: None,
        disagreement: Vec::with_capacity(steps),
        deviation: Vec::with_capacity(steps),
        attack_rate: Vec::with_capacity(steps),
        nominal_value,
        z: 0.0,
        nu_distance: Vec::new(),
        nominal_from: None,
        decomposition_residual: 0.0,
        final_legit: Vec::new(),
        trajectory: Vec::with_capacity(steps),
    };

    // Full state x(t - 1): legitimate values and malicious broadcasts.
    let mut prev_all = x0.clone();
    let mut x_mal = vec![0.0; nm];
    let mut attacking = vec![false; n];
    let mut nominal_run_start: Option<u64> = None;

    for t in 0..=horizon {
        let legit_now = state.legit.clone();

        for k in 0..nm {
            let agent = nl + k;
            let p = attack_probability(&config.attack, &histories[k], t);
            let f = decide_attack(&config.attack, &mut histories[k], t, &mut attack_rngs[k]).map_err(ctx(t))?;
            attacking[agent] = f;
            x_mal[k] = if t == 0 && !f {
                x0[agent]
            } else {
                let nbr_prev: Vec<f64> = topo.neighbors(agent)?.iter().map(|&j| prev_all[j]).collect();
                malicious_value(f, eta, prev_all[agent], &nbr_prev, &static_weights[k]).map_err(ctx(t))?
            };
            if let Some(tr) = traces.as_deref_mut() {
                let _ = writeln!(tr.attacks, "{t},{agent},{p},{}", u8::from(f));
            }
        }
        m.attack_rate
            .push(if nm == 0 { 0.0 } else { attacking[nl..].iter().filter(|&&f| f).count() as f64 / nm as f64 });

        let mut obs = ledger.blank_observations();
        for i in 0..nl {
            for (k, &j) in ledger.observed(i).iter().enumerate() {
                obs[i][k] = sample_trust(&config.trust, attacking[j], &mut trust_rngs[i][k]);
            }
        }
        ledger.accumulate(t, &obs).map_err(ctx(t))?;

        let hoods = classify_all(&ledger, topo, &config.threshold, t).map_err(ctx(t))?;
        let excluded: usize = hoods.iter().map(|h| h.excluded_legit(topo)).sum();
        let included: usize = hoods.iter().map(|h| h.included_malicious(topo)).sum();
        m.excluded_legit.push(excluded as u32);
        m.included_malicious.push(included as u32);
        m.all_correct.push(excluded == 0 && included == 0);

        let mean = legit_now.iter().sum::<f64>() / nl as f64;
        m.disagreement.push(legit_now.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max));
        m.deviation.push(legit_now.iter().map(|x| (x - nominal_value).abs()).fold(0.0, f64::max));

        if let Some(tr) = traces.as_deref_mut() {
            let mut buf = Vec::new();
            let _ = ledger.write_trace(&mut buf, &obs);
            tr.trust.push_str(&String::from_utf8_lossy(&buf));
            let mut buf = Vec::new();
            let _ = write_classification_trace(&mut buf, topo, t, &hoods);
            tr.classification.push_str(&String::from_utf8_lossy(&buf));
            for (i, v) in legit_now.iter().enumerate() {
                let _ = writeln!(tr.trajectory, "{t},{i},{v},legit");
            }
            for (k, v) in x_mal.iter().enumerate() {
                let _ = writeln!(tr.trajectory, "{t},{},{v},malicious", nl + k);
            }
        }
        m.trajectory.push(legit_now.clone());

        if t < horizon {
            if state.updating() {
                let wa = build_weights(&hoods, topo, config.kappa).map_err(ctx(t))?;
                if wa.is_nominal(topo) {
                    nominal_run_start.get_or_insert(t);
                } else {
                    nominal_run_start = None;
                }
                step(&mut state, Some(&wa), &x_mal).map_err(ctx(t))?;
                decomposition.advance(t, &wa, &x_mal).map_err(ctx(t))?;
            } else {
                step(&mut state, None, &x_mal).map_err(ctx(t))?;
            }
        }

        prev_all[..nl].copy_from_slice(&legit_now);
        prev_all[nl..].copy_from_slice(&x_mal);
    }

    m.tf = empirical_tf(&m.all_correct);
    m.nominal_from = nominal_run_start;
    m.final_legit = state.legit.clone();
    m.z = m.final_legit.iter().sum::<f64>() / nl as f64;
    let nu = nominal.nu().as_slice();
    m.nu_distance = m
        .trajectory
        .iter()
        .map(|x| x.iter().zip(nu).map(|(v, w)| w * (v - m.z).powi(2)).sum::<f64>().sqrt())
        .collect();
    let recomposed = decomposition.recomposed();
    m.decomposition_residual = state
        .legit
        .iter()
        .zip(&recomposed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if m.decomposition_residual > 1e-9 {
        return Err(Error::Invariant(format!(
            "seed {seed}: decomposition residual {:e} at the horizon",
            m.decomposition_residual
        )));
    }
    if let Some(tf) = m.tf {
        let needed = tf.max(config.t0 - 1);
        if needed < horizon && m.nominal_from.is_none_or(|from| from > needed) {
            return Err(Error::Invariant(format!(
                "seed {seed}: classification correct from t={tf} but weights not nominal from t={needed}"
            )));
        }
    }
    Ok(m)
}

/// Earliest `t` such that every step from `t` through the end of the trace is
/// fully correct. `None` when the last step is wrong; any value is censored
/// at the trace length.
pub fn empirical_tf(all_correct: &[bool]) -> Option<u64> {
    let last_wrong = all_correct.iter().rposition(|&ok| !ok);
    match last_wrong {
        None => Some(0),
        Some(k) if k + 1 == all_correct.len() => None,
        Some(k) => Some(k as u64 + 1),
    }
}

/// Mean and standard error of a per-run scalar series.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTrace {
    pub name: &'static str,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub const METRIC_NAMES: [&str; 7] = [
    "legit_exclusion_freq",
    "malicious_inclusion_freq",
    "max_disagreement",
    "max_deviation",
    "attack_rate",
    "nu_distance",
    "tf_exceeds",
];

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub runs: Vec<RunMetrics>,
    pub metrics: Vec<MetricTrace>,
}

impl BatchResult {
    pub fn metric(&self, name: &str) -> Option<&MetricTrace> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn from_runs(runs: Vec<RunMetrics>) -> Self {
        let metrics = METRIC_NAMES
            .iter()
            .map(|&name| summarize(name, &runs, |r, t| metric_value(name, r, t)))
            .collect();
        Self { runs, metrics }
    }
}

fn metric_value(name: &str, r: &RunMetrics, t: usize) -> f64 {
    match name {
        "legit_exclusion_freq" => r.legit_exclusion_freq(t),
        "malicious_inclusion_freq" => r.malicious_inclusion_freq(t),
        "max_disagreement" => r.disagreement[t],
        "max_deviation" => r.deviation[t],
        "attack_rate" => r.attack_rate[t],
        "nu_distance" => r.nu_distance[t],
        "tf_exceeds" => f64::from(u8::from(r.tf.is_none_or(|tf| tf > t as u64))),
        _ => f64::NAN,
    }
}

fn summarize(name: &'static str, runs: &[RunMetrics], f: impl Fn(&RunMetrics, usize) -> f64) -> MetricTrace {
    let steps = runs.first().map_or(0, |r| r.disagreement.len());
    let n = runs.len() as f64;
    let mut mean = Vec::with_capacity(steps);
    let mut stderr = Vec::with_capacity(steps);
    for t in 0..steps {
        let (mu, se) = mean_stderr(runs.iter().map(|r| f(r, t)), n);
        mean.push(mu);
        stderr.push(se);
    }
    MetricTrace { name, mean, stderr }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mu = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mu, 0.0);
    }
    let var = values.map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
    (mu, (var / n).sqrt())
}

/// Runs `n_runs` independent replications, possibly in parallel. The result
/// does not depend on scheduling.
pub fn run_batch(sim: &Simulator, n_runs: usize) -> Result<BatchResult> {
    if n_runs < 1 {
        return Err(Error::Config("at least one run is required".into()));
    }
    let runs = (0..n_runs as u64)
        .into_par_iter()
        .map(|k| sim.run_index(k))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchResult::from_runs(runs))
}

/// One empirical-versus-analytical comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub check: &'static str,
    pub t: u64,
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
    pub vacuous: bool,
    pub pass: bool,
}

impl ComparisonRow {
    fn new(check: &'static str, t: u64, empirical: f64, stderr: f64, bound: Bound) -> Self {
        let b = bound.reported();
        Self {
            check,
            t,
            empirical,
            stderr,
            bound: b,
            vacuous: bound.vacuous,
            pass: empirical <= b + 3.0 * stderr,
        }
    }
}

fn binomial_stderr(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

/// Batch frequencies against the misclassification, `T_f`, deviation and
/// rate bounds, each with `3σ̂` slack. `bound_scale` multiplies every
/// reported (clipped) bound and exists for testing the failure path.
pub fn compare_to_bounds(
    batch: &BatchResult,
    sim: &Simulator,
    inputs: &BoundInputs,
    grid: &[u64],
    bound_scale: f64,
) -> Result<Vec<ComparisonRow>> {
    let cfg = sim.config();
    if inputs.n_legit != cfg.topology.n_legit
        || inputs.n_malicious != cfg.topology.n_malicious
        || inputs.t0 != cfg.t0
        || (inputs.eta - cfg.eta).abs() > 0.0
        || (inputs.kappa - cfg.kappa).abs() > 0.0
    {
        return Err(Error::Config("bound inputs do not match the simulated configuration".into()));
    }
    if batch.runs.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let topo = sim.topology();
    let nl = topo.n_legit();
    let scaled = |b: Bound| Bound {
        raw: b.reported() * bound_scale,
        vacuous: b.vacuous,
    };
    let mut rows = Vec::new();
    let runs = batch.runs.len() as f64;
    let horizon = cfg.horizon;

    for &t in grid.iter().filter(|&&t| t <= horizon) {
        let ti = t as usize;
        let xi_of = |i: usize| cfg.threshold.for_agent(i).threshold(t);

        // Legitimate exclusion, averaged over (observer, legitimate neighbor) pairs.
        let pairs = topo.legit_pair_count();
        if pairs > 0 {
            let bound_mean = (0..nl)
                .map(|i| {
                    let deg = topo.degree(i).unwrap_or(0);
                    topo.legit_neighbors(i).map_or(0, <[_]>::len) as f64
                        * legit_misclass_bound(deg, xi_of(i), t).reported()
                })
                .sum::<f64>()
                / pairs as f64;
            let per_run = batch.runs.iter().map(|r| r.legit_exclusion_freq(ti));
            let (mu, se) = mean_stderr(per_run, runs);
            let raw = Bound::new(bound_mean);
            rows.push(ComparisonRow::new("legit_exclusion", t, mu, se, scaled(raw)));
        }

        // Malicious inclusion: every (observer, attacker) pair shares one bound
        // when the schedule is shared.
        let mpairs = topo.malicious_pair_count();
        if mpairs > 0 {
            let cum_p = cumulative_min_probability(&cfg.attack, t);
            let bound_mean = (0..nl)
                .map(|i| {
                    topo.malicious_neighbors(i).map_or(0, <[_]>::len) as f64
                        * malicious_misclass_bound(inputs.gap, cum_p, xi_of(i), t).reported()
                })
                .sum::<f64>()
                / mpairs as f64;
            let vacuous = (0..nl).any(|i| {
                !topo.malicious_neighbors(i).unwrap_or(&[]).is_empty()
                    && malicious_misclass_bound(inputs.gap, cum_p, xi_of(i), t).vacuous
            });
            let per_run = batch.runs.iter().map(|r| r.malicious_inclusion_freq(ti));
            let (mu, se) = mean_stderr(per_run, runs);
            let b = Bound { raw: bound_mean, vacuous: vacuous || bound_mean >= 1.0 };
            rows.push(ComparisonRow::new("malicious_inclusion", t, mu, se, scaled(b)));
        }

        // P(T_f > t - 1) = P(T_f >= t), censored runs counted as exceeding.
        if t >= 1 {
            let freq = batch.runs.iter().filter(|r| r.tf.is_none_or(|tf| tf >= t)).count() as f64 / runs;
            let b = tf_tail_bound(inputs, t)?;
            rows.push(ComparisonRow::new("tf_tail", t, freq, binomial_stderr(freq, runs), scaled(b)));
        }
    }

    // Horizon-censored deviation check.
    if inputs.t0 >= 2 {
        let g = g_functions(inputs)?;
        let delta_max = deviation_bound(inputs, &g)?;
        let freq = batch.runs.iter().filter(|r| r.max_deviation() > delta_max * bound_scale).count() as f64 / runs;
        rows.push(ComparisonRow::new(
            "deviation_horizon",
            horizon,
            freq,
            binomial_stderr(freq, runs),
            scaled(Bound { raw: inputs.delta, vacuous: false }),
        ));
    }

    // Rate check on runs whose weights were nominal from some τ on.
    let rho2 = sim.nominal().rho2();
    let (mut eligible, mut violations) = (0u32, 0u32);
    for r in &batch.runs {
        if let Some(tau) = r.nominal_from {
            eligible += 1;
            if rate_violations(r, cfg.eta, cfg.t0, tau, rho2, bound_scale) > 0 {
                violations += 1;
            }
        }
    }
    if eligible > 0 {
        rows.push(ComparisonRow {
            check: "rate_conditional",
            t: horizon,
            empirical: f64::from(violations) / f64::from(eligible),
            stderr: 0.0,
            bound: 0.0,
            vacuous: false,
            pass: violations == 0,
        });
    }
    Ok(rows)
}

/// Times `t ∈ (τ, H]` at which the ν-norm distance to `z` exceeds the
/// rate bound evaluated at `τ`.
pub fn rate_violations(r: &RunMetrics, eta: f64, t0: u64, tau: u64, rho2: f64, scale: f64) -> usize {
    let h = r.horizon();
    ((tau + 1)..=h)
        .filter(|&t| r.nu_distance[t as usize] > scale * rate_at(eta, t0, t, tau, rho2))
        .count()
}

/// Observer-level Monte Carlo check of the concentration bounds.
#[derive(Clone, Debug)]
pub struct DominanceSetup {
    pub trust: TrustModel,
    pub policy: AttackPolicy,
    pub schedule: ThresholdSchedule,
    /// Legitimate and malicious neighbor counts of the simulated observer.
    pub n_legit_neighbors: usize,
    pub n_malicious_neighbors: usize,
    pub grid: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    pub bound_scale: f64,
}

impl DominanceSetup {
    /// Uses the first legitimate agent with two legitimate neighbors and at
    /// least one malicious neighbor, falling back to agent 0.
    pub fn for_topology(
        topo: &Topology,
        trust: TrustModel,
        policy: AttackPolicy,
        schedule: ThresholdSchedule,
        grid: Vec<u64>,
        trials: usize,
        seed: u64,
    ) -> Self {
        let count = |i: usize| {
            (
                topo.legit_neighbors(i).map_or(0, <[_]>::len),
                topo.malicious_neighbors(i).map_or(0, <[_]>::len),
            )
        };
        let observer = (0..topo.n_legit())
            .find(|&i| {
                let (l, m) = count(i);
                l >= 2 && m >= 1
            })
            .unwrap_or(0);
        let (l, m) = count(observer);
        Self {
            trust,
            policy,
            schedule,
            n_legit_neighbors: l,
            n_malicious_neighbors: m,
            grid,
            trials,
            seed,
            bound_scale: 1.0,
        }
    }
}

/// Indicator counts of one trial at each grid time.
#[derive(Clone, Debug, Default)]
struct TrialHits {
    counts: Vec<[u32; DOMINANCE_CHECKS.len()]>,
}

/// Each check: name and how its threshold is set.
const DOMINANCE_CHECKS: [&str; 8] = [
    "pairwise_tail_r1",
    "pairwise_tail_r2",
    "legit_misclass",
    "malicious_misclass",
    "malicious_tail_xi",
    "concentration_q1",
    "concentration_q1_5",
    "concentration_q2",
];

fn pairwise_r(k: usize, t: u64) -> f64 {
    let s = (2.0 * (t + 1) as f64).sqrt();
    if k == 0 {
        s
    } else {
        1.5 * s
    }
}

const CONCENTRATION_Q: [f64; 3] = [1.0, 1.5, 2.0];

/// Runs the suite and returns one comparison row per check and grid time.
pub fn dominance_suite(setup: &DominanceSetup) -> Result<Vec<ComparisonRow>> {
    if setup.trials == 0 {
        return Err(Error::Config("dominance suite needs at least one trial".into()));
    }
    if setup.n_legit_neighbors < 1 {
        return Err(Error::Topology("observer has no legitimate neighbor".into()));
    }
    setup.policy.validate()?;
    setup.schedule.validate()?;
    let horizon = setup.grid.iter().copied().max().unwrap_or(0);
    let streams = RngStreams::new(setup.seed).child("dominance", 0);

    let per_trial: Vec<TrialHits> = (0..setup.trials as u64)
        .into_par_iter()
        .map(|k| dominance_trial(setup, horizon, &mut streams.stream(TRUST, k)))
        .collect();

    let n = setup.trials as f64;
    let gap = setup.trust.gap();
    let deg = setup.n_legit_neighbors + setup.n_malicious_neighbors;
    let mut rows = Vec::new();
    for (g, &t) in setup.grid.iter().enumerate() {
        let xi = setup.schedule.threshold(t);
        let cum_p = cumulative_min_probability(&setup.policy, t);
        for (c, &name) in DOMINANCE_CHECKS.iter().enumerate() {
            let needs_pair = c < 2;
            let needs_malicious = c >= 3;
            if (needs_pair && setup.n_legit_neighbors < 2) || (needs_malicious && setup.n_malicious_neighbors == 0) {
                continue;
            }
            let bound = match c {
                0 | 1 => pairwise_tail_bound(pairwise_r(c, t), t),
                2 => legit_misclass_bound(deg, xi, t),
                3 => malicious_misclass_bound(gap, cum_p, xi, t),
                4 => malicious_tail_bound(-xi, gap, cum_p, t),
                _ => concentration_tail_bound(CONCENTRATION_Q[c - 5]),
            };
            let hits: u64 = per_trial.iter().map(|h| u64::from(h.counts[g][c])).sum();
            let freq = hits as f64 / n;
            let b = Bound {
                raw: bound.reported() * setup.bound_scale,
                vacuous: bound.vacuous,
            };
            rows.push(ComparisonRow::new(name, t, freq, binomial_stderr(freq, n), b));
        }
    }
    Ok(rows)
}

fn dominance_trial(setup: &DominanceSetup, horizon: u64, rng: &mut SimRng) -> TrialHits {
    let nl = setup.n_legit_neighbors;
    let nm = setup.n_malicious_neighbors;
    let mut beta = vec![0.0; nl + nm];
    let mut histories = vec![AttackHistory::new(); nm];
    let mut hits = TrialHits {
        counts: vec![[0; DOMINANCE_CHECKS.len()]; setup.grid.len()],
    };
    let gap = setup.trust.gap();
    for t in 0..=horizon {
        for b in beta.iter_mut().take(nl) {
            *b += sample_trust(&setup.trust, false, rng);
        }
        for k in 0..nm {
            let f = decide_attack(&setup.policy, &mut histories[k], t, rng).unwrap_or(false);
            beta[nl + k] += sample_trust(&setup.trust, f, rng);
        }
        for (g, _) in setup.grid.iter().enumerate().filter(|(_, &gt)| gt == t) {
            let xi = setup.schedule.threshold(t);
            let cum_p = cumulative_min_probability(&setup.policy, t);
            let top = beta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let row = &mut hits.counts[g];
            if nl >= 2 {
                let d = beta[0] - beta[1];
                row[0] += u32::from(d > pairwise_r(0, t));
                row[1] += u32::from(d > pairwise_r(1, t));
            }
            row[2] += u32::from(top - beta[0] > xi);
            if nm > 0 {
                let m = beta[nl];
                row[3] += u32::from(top - m <= xi);
                let d = m - beta[0];
                row[4] += u32::from(d > -xi);
                let sqrt_n = ((t + 1) as f64).sqrt();
                for (q_idx, &q) in CONCENTRATION_Q.iter().enumerate() {
                    row[5 + q_idx] += u32::from(d > -gap * cum_p + q * sqrt_n);
                }
            }
        }
    }
    hits
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(policy: AttackPolicy) -> SimConfig {
        SimConfig {
            n_runs: 4,
            horizon: 80,
            ..SimConfig::benchmark(policy)
        }
    }

    #[test]
    fn tf_readoff() {
        assert_eq!(empirical_tf(&[true; 10]), Some(0));
        let mut v = vec![true; 10];
        v[9] = false;
        assert_eq!(empirical_tf(&v), None);
        let mut v = vec![true; 60];
        v[37] = false;
        v[3] = false;
        assert_eq!(empirical_tf(&v), Some(38));
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::benchmark(AttackPolicy::Persistent);
        c.eta = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = SimConfig::benchmark(AttackPolicy::Persistent);
        c.horizon = 10;
        assert!(c.validate().is_err());
        let mut c = SimConfig::benchmark(AttackPolicy::Persistent);
        c.n_runs = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn same_seed_same_metrics() {
        let sim = Simulator::new(quick(AttackPolicy::Stationary { p: 0.5 })).unwrap();
        assert_eq!(sim.run_index(3).unwrap(), sim.run_index(3).unwrap());
        assert_ne!(sim.run_index(3).unwrap(), sim.run_index(4).unwrap());
    }

    #[test]
    fn traces_have_expected_shapes() {
        let sim = Simulator::new(quick(AttackPolicy::Persistent)).unwrap();
        let (m, tr) = sim.run_traced(0).unwrap();
        assert_eq!(m, sim.run_index(0).unwrap());
        let steps = 81;
        assert_eq!(tr.trajectory.lines().count(), steps * 50);
        assert_eq!(tr.attacks.lines().count(), steps * 30);
        let pairs = sim.topology().legit_pair_count() + sim.topology().malicious_pair_count();
        assert_eq!(tr.trust.lines().count(), steps * pairs);
        assert_eq!(tr.classification.lines().count(), steps * pairs);
    }

    #[test]
    fn no_malicious_agents_reach_consensus() {
        let mut c = quick(AttackPolicy::Persistent);
        c.topology.n_malicious = 0;
        c.horizon = 3000;
        let sim = Simulator::new(c).unwrap();
        let m = sim.run_index(0).unwrap();
        let initial = m.disagreement[0];
        assert!(m.disagreement[3000] <= 1e-6 * initial);
        assert_eq!(m.malicious_pairs, 0);
    }

    #[test]
    fn deterministic_trust_never_trusts_attackers() {
        // Point-mass trust laws remove all noise: attackers fall behind by 0.4
        // per attack and a linear threshold at half the gap excludes them
        // after the first step.
        let mut c = quick(AttackPolicy::Persistent);
        c.trust = TrustModel::uniform((0.7, 0.7), (0.3, 0.3)).unwrap();
        c.threshold = SchedulePlan::Shared(ThresholdSchedule::LinearGap { slope: 0.2 });
        c.horizon = 400;
        let sim = Simulator::new(c).unwrap();
        let m = sim.run_index(0).unwrap();
        assert!(m.included_malicious[1..].iter().all(|&k| k == 0));
        assert!(m.excluded_legit.iter().all(|&k| k == 0));
        assert_eq!(m.nominal_from, Some(24));
        assert!(m.deviation[400] < 1e-6);
    }

    #[test]
    fn single_run_batch_equals_run() {
        let sim = Simulator::new(quick(AttackPolicy::Persistent)).unwrap();
        let b = run_batch(&sim, 1).unwrap();
        let r = sim.run_index(0).unwrap();
        let d = b.metric("max_disagreement").unwrap();
        assert_eq!(d.mean, r.disagreement);
        assert!(d.stderr.iter().all(|&s| s == 0.0));
        assert!(run_batch(&sim, 0).is_err());
    }

    #[test]
    fn batch_is_permutation_invariant() {
        let sim = Simulator::new(quick(AttackPolicy::Stationary { p: 0.5 })).unwrap();
        let b = run_batch(&sim, 4).unwrap();
        let mut rev = b.runs.clone();
        rev.reverse();
        let b2 = BatchResult::from_runs(rev);
        for (m1, m2) in b.metrics.iter().zip(&b2.metrics) {
            for (x, y) in m1.mean.iter().zip(&m2.mean) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn comparison_without_malicious_agents() {
        let mut c = quick(AttackPolicy::Persistent);
        c.topology.n_malicious = 0;
        let sim = Simulator::new(c.clone()).unwrap();
        let batch = run_batch(&sim, 2).unwrap();
        let inputs = c.bound_inputs(0.005, 5.0, 0.1);
        let rows = compare_to_bounds(&batch, &sim, &inputs, &[25, 50], 1.0).unwrap();
        assert!(rows.iter().all(|r| r.check != "malicious_inclusion"));
        assert!(rows.iter().filter(|r| r.bound >= 1.0).all(|r| r.pass || r.empirical > 1.0));
        let mismatched = BoundInputs { t0: 5, ..inputs };
        assert!(compare_to_bounds(&batch, &sim, &mismatched, &[25], 1.0).is_err());
    }

    #[test]
    fn small_dominance_suite_runs() {
        let topo = Simulator::new(quick(AttackPolicy::Persistent)).unwrap().topology().clone();
        let setup = DominanceSetup::for_topology(
            &topo,
            TrustModel::default(),
            AttackPolicy::Persistent,
            ThresholdSchedule::SqrtLog { eps1: 0.005 },
            vec![25, 50],
            500,
            1,
        );
        let rows = dominance_suite(&setup).unwrap();
        assert_eq!(rows.len(), 2 * DOMINANCE_CHECKS.len());
        assert_eq!(rows, dominance_suite(&setup).unwrap());
        let zero = DominanceSetup { trials: 0, ..setup };
        assert!(dominance_suite(&zero).is_err());
    }
}
