//! Experiment spec files.
//!
//! A spec is a TOML document. Top-level `seed` and `out` set the base seed
//! and output directory. The `[bounds]`, `[verify]` and `[defaults]` tables
//! are reserved; every other table is a named scenario whose keys are
//! `section.field` pairs, for example `topology.n_legit = 20`. Keys in
//! `[defaults]` apply to every scenario unless the scenario overrides them.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use trustnet::attack::AttackPolicy;
use trustnet::detect::{SchedulePlan, ThresholdSchedule};
use trustnet::harness::SimConfig;
use trustnet::topology::TopologyParams;
use trustnet::trust::{TrustLaw, TrustModel};

use crate::CliError;

const RESERVED: [&str; 5] = ["seed", "out", "bounds", "verify", "defaults"];

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TopologySection {
    pub n_legit: usize,
    pub n_malicious: usize,
    pub extra_legit_pairs: usize,
    pub malicious_link_prob: f64,
    pub resample: bool,
}

impl Default for TopologySection {
    fn default() -> Self {
        let p = TopologyParams::default();
        Self {
            n_legit: p.n_legit,
            n_malicious: p.n_malicious,
            extra_legit_pairs: p.extra_legit_pairs,
            malicious_link_prob: p.malicious_link_prob,
            resample: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrustSection {
    /// `uniform` or `bernoulli`
    pub law: String,
    pub legit_lo: f64,
    pub legit_hi: f64,
    pub attack_lo: f64,
    pub attack_hi: f64,
    pub legit_mean: f64,
    pub attack_mean: f64,
}

impl Default for TrustSection {
    fn default() -> Self {
        Self {
            law: "uniform".into(),
            legit_lo: 0.4,
            legit_hi: 1.0,
            attack_lo: 0.0,
            attack_hi: 0.6,
            legit_mean: 0.7,
            attack_mean: 0.3,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    /// `persistent`, `stationary`, `softmax` or `logistic`
    pub variant: String,
    pub p: f64,
    pub r1: f64,
    pub eps2: f64,
    pub p_bar: f64,
    pub r2: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            variant: "persistent".into(),
            p: 0.5,
            r1: 0.8,
            eps2: 5.0,
            p_bar: 0.3,
            r2: 0.005,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSection {
    /// `sqrtlog`, `powerlaw` or `lineargap`
    pub variant: String,
    pub eps1: f64,
    pub scale: f64,
    pub gamma: f64,
    pub slope: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        Self {
            variant: "sqrtlog".into(),
            eps1: 0.005,
            scale: 1.0,
            gamma: 0.75,
            slope: 0.2,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusSection {
    pub kappa: f64,
    pub eta: f64,
    pub t0: u64,
}

impl Default for ConsensusSection {
    fn default() -> Self {
        Self {
            kappa: 10.0,
            eta: 4.0,
            t0: 25,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub horizon: u64,
    pub runs: usize,
    /// Overrides the top-level seed for this scenario.
    pub seed: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon: 200,
            runs: 100,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub topology: TopologySection,
    pub trust: TrustSection,
    pub attack: AttackSection,
    pub threshold: ThresholdSection,
    pub consensus: ConsensusSection,
    pub run: RunSection,
}

impl ScenarioSpec {
    pub fn attack_policy(&self) -> Result<AttackPolicy, CliError> {
        let a = &self.attack;
        let policy = match a.variant.as_str() {
            "persistent" => AttackPolicy::Persistent,
            "stationary" => AttackPolicy::Stationary { p: a.p },
            "softmax" => AttackPolicy::SoftmaxDecay { r1: a.r1, eps2: a.eps2 },
            "logistic" => AttackPolicy::LogisticSchedule { p_bar: a.p_bar, r2: a.r2 },
            other => {
                return Err(CliError::Config(format!(
                    "unknown attack.variant {other:?}; expected persistent, stationary, softmax or logistic"
                )))
            }
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn threshold_schedule(&self) -> Result<ThresholdSchedule, CliError> {
        let t = &self.threshold;
        let s = match t.variant.as_str() {
            "sqrtlog" => ThresholdSchedule::SqrtLog { eps1: t.eps1 },
            "powerlaw" => ThresholdSchedule::PowerLaw { scale: t.scale, gamma: t.gamma },
            "lineargap" => ThresholdSchedule::LinearGap { slope: t.slope },
            other => {
                return Err(CliError::Config(format!(
                    "unknown threshold.variant {other:?}; expected sqrtlog, powerlaw or lineargap"
                )))
            }
        };
        s.validate()?;
        Ok(s)
    }

    pub fn trust_model(&self) -> Result<TrustModel, CliError> {
        let t = &self.trust;
        let model = match t.law.as_str() {
            "uniform" => TrustModel::uniform((t.legit_lo, t.legit_hi), (t.attack_lo, t.attack_hi))?,
            "bernoulli" => TrustModel::new(
                TrustLaw::Bernoulli { mean: t.legit_mean },
                TrustLaw::Bernoulli { mean: t.attack_mean },
            )?,
            other => {
                return Err(CliError::Config(format!(
                    "unknown trust.law {other:?}; expected uniform or bernoulli"
                )))
            }
        };
        Ok(model)
    }

    /// Full simulator configuration with `seed` as the base seed unless the
    /// scenario sets its own.
    pub fn sim_config(&self, seed: u64) -> Result<SimConfig, CliError> {
        let cfg = SimConfig {
            topology: TopologyParams {
                n_legit: self.topology.n_legit,
                n_malicious: self.topology.n_malicious,
                extra_legit_pairs: self.topology.extra_legit_pairs,
                malicious_link_prob: self.topology.malicious_link_prob,
            },
            trust: self.trust_model()?,
            attack: self.attack_policy()?,
            threshold: SchedulePlan::Shared(self.threshold_schedule()?),
            kappa: self.consensus.kappa,
            eta: self.consensus.eta,
            t0: self.consensus.t0,
            horizon: self.run.horizon,
            n_runs: self.run.runs,
            base_seed: self.run.seed.unwrap_or(seed),
            resample_topology: self.topology.resample,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub grid: Vec<u64>,
    pub delta: f64,
    /// Slack of the threshold floor; taken from a `sqrtlog` threshold when absent.
    pub eps1: Option<f64>,
    /// Slack of the cumulative attack floor.
    pub eps2: f64,
    /// Horizon of the assumption sweep.
    pub check_horizon: u64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            grid: vec![25, 50, 100, 200],
            delta: 0.1,
            eps1: None,
            eps2: 5.0,
            check_horizon: 10_000,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Observer-level Monte Carlo trials per grid time.
    pub trials: usize,
    /// Multiplier on every analytical bound; values below 1 force failures.
    pub bound_scale: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            trials: 10_000,
            bound_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub out: PathBuf,
    pub bounds: BoundsSection,
    pub verify: VerifySection,
    /// Scenarios sorted by name.
    pub scenarios: Vec<(String, ScenarioSpec)>,
    /// Hex SHA-256 of the file bytes.
    pub sha256: String,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read spec {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Config(format!("spec {} is not UTF-8", path.display())))?;
        let mut spec = Self::parse(&text)?;
        spec.sha256 = sha256_hex(&bytes);
        if spec.out.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            spec.out = base.join(&spec.out);
        }
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("spec is not valid TOML: {e}")))?;

        let seed = match root.remove("seed") {
            None => 0,
            Some(Value::Integer(s)) if s >= 0 => s as u64,
            Some(v) => return Err(CliError::Config(format!("seed must be a nonnegative integer, got {v}"))),
        };
        let out = match root.remove("out") {
            None => PathBuf::from("out"),
            Some(Value::String(s)) => PathBuf::from(s),
            Some(v) => return Err(CliError::Config(format!("out must be a string, got {v}"))),
        };
        let bounds: BoundsSection = section(root.remove("bounds"), "bounds")?;
        let verify: VerifySection = section(root.remove("verify"), "verify")?;
        let defaults = match root.remove("defaults") {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => return Err(CliError::Config("[defaults] must be a table".into())),
        };
        check_two_levels(&defaults, "defaults")?;

        let mut scenarios = Vec::new();
        for (name, value) in root {
            let Value::Table(table) = value else {
                return Err(CliError::Config(format!(
                    "unknown top-level key {name:?}; scenarios must be tables and {RESERVED:?} are reserved"
                )));
            };
            check_two_levels(&table, &name)?;
            let merged = merge(&defaults, &table);
            let scenario: ScenarioSpec = Value::Table(merged)
                .try_into()
                .map_err(|e: toml::de::Error| CliError::Config(format!("scenario {name:?}: {e}")))?;
            scenarios.push((name, scenario));
        }
        Ok(Self {
            seed,
            out,
            bounds,
            verify,
            scenarios,
            sha256: sha256_hex(text.as_bytes()),
        })
    }

    pub fn scenario_names(&self) -> Vec<&str> {
        self.scenarios.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// The named scenario, or all of them when `name` is `None`.
    pub fn select(&self, name: Option<&str>) -> Result<Vec<(&str, &ScenarioSpec)>, CliError> {
        match name {
            None => {
                if self.scenarios.is_empty() {
                    return Err(CliError::Config("spec defines no scenarios".into()));
                }
                Ok(self.scenarios.iter().map(|(n, s)| (n.as_str(), s)).collect())
            }
            Some(want) => self
                .scenarios
                .iter()
                .find(|(n, _)| n == want)
                .map(|(n, s)| vec![(n.as_str(), s)])
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "no scenario named {want:?}; available: {}",
                        self.scenario_names().join(", ")
                    ))
                }),
        }
    }

    /// `# spec_sha256=<hex> seed=<seed>`
    pub fn header(&self, seed: u64) -> String {
        format!("# spec_sha256={} seed={seed}\n", self.sha256)
    }
}

fn section<T: for<'de> Deserialize<'de> + Default>(value: Option<Value>, name: &str) -> Result<T, CliError> {
    match value {
        None => Ok(T::default()),
        Some(v @ Value::Table(_)) => v
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("[{name}]: {e}"))),
        Some(_) => Err(CliError::Config(format!("[{name}] must be a table"))),
    }
}

fn check_two_levels(table: &Table, name: &str) -> Result<(), CliError> {
    for (key, value) in table {
        let Value::Table(inner) = value else {
            return Err(CliError::Config(format!(
                "{name}: key {key:?} must be written as section.field"
            )));
        };
        if let Some((field, _)) = inner.iter().find(|(_, v)| v.is_table()) {
            return Err(CliError::Config(format!(
                "{name}: {key}.{field} nests deeper than two levels"
            )));
        }
    }
    Ok(())
}

fn merge(defaults: &Table, overrides: &Table) -> Table {
    let mut out = defaults.clone();
    for (section, value) in overrides {
        match (out.get_mut(section), value) {
            (Some(Value::Table(base)), Value::Table(inner)) => {
                for (k, v) in inner {
                    base.insert(k.clone(), v.clone());
                }
            }
            _ => {
                out.insert(section.clone(), value.clone());
            }
        }
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
out = "results"

[bounds]
grid = [25, 50]

[defaults]
run.horizon = 120
consensus.kappa = 8.0

[beta]
attack.variant = "stationary"
attack.p = 0.25

[alpha]
attack.variant = "softmax"
run.horizon = 90
"#;

    #[test]
    fn parses_scenarios_with_defaults() {
        let spec = ExperimentSpec::parse(SAMPLE).unwrap();
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.scenario_names(), vec!["alpha", "beta"]);
        let (_, alpha) = &spec.scenarios[0];
        assert_eq!(alpha.run.horizon, 90);
        assert_eq!(alpha.consensus.kappa, 8.0);
        assert_eq!(alpha.topology, TopologySection::default());
        let (_, beta) = &spec.scenarios[1];
        assert_eq!(beta.run.horizon, 120);
        assert_eq!(beta.attack_policy().unwrap(), AttackPolicy::Stationary { p: 0.25 });
        assert_eq!(spec.bounds.grid, vec![25, 50]);
        assert_eq!(spec.verify, VerifySection::default());
        let cfg = beta.sim_config(spec.seed).unwrap();
        assert_eq!(cfg.base_seed, 7);
        assert_eq!(cfg.kappa, 8.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ExperimentSpec::parse("x = 1").is_err());
        assert!(ExperimentSpec::parse("[s]\nn_legit = 3").is_err());
        assert!(ExperimentSpec::parse("[s]\ntopology.n_legit.x = 3").is_err());
        assert!(ExperimentSpec::parse("[s]\ntopology.bogus = 3").is_err());
        assert!(ExperimentSpec::parse("seed = -1").is_err());
        assert!(ExperimentSpec::parse("[bounds]\nnope = 1").is_err());
        let spec = ExperimentSpec::parse("[s]\nattack.variant = \"sometimes\"").unwrap();
        assert!(spec.scenarios[0].1.attack_policy().is_err());
        let spec = ExperimentSpec::parse("[s]\nconsensus.eta = -1.0").unwrap();
        assert!(spec.scenarios[0].1.sim_config(0).is_err());
    }

    #[test]
    fn selection_names_available_scenarios() {
        let spec = ExperimentSpec::parse(SAMPLE).unwrap();
        assert_eq!(spec.select(Some("beta")).unwrap().len(), 1);
        assert_eq!(spec.select(None).unwrap().len(), 2);
        let err = spec.select(Some("gamma")).unwrap_err().to_string();
        assert!(err.contains("alpha") && err.contains("beta"));
    }

    #[test]
    fn header_records_hash_and_seed() {
        let spec = ExperimentSpec::parse(SAMPLE).unwrap();
        assert_eq!(spec.sha256.len(), 64);
        assert_eq!(spec.header(3), format!("# spec_sha256={} seed=3\n", spec.sha256));
        // Known digest of the empty string.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
