//! `run`, `bounds` and `verify`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use trustnet::bounds::{
    deviation_bound, g_functions, legit_misclass_bound, malicious_misclass_bound, rate_bound, tf_tail_bound,
    validate_assumptions, Bound, BoundInputs,
};
use trustnet::attack::cumulative_min_probability;
use trustnet::detect::{ThresholdSchedule, CLASSIFICATION_TRACE_HEADER};
use trustnet::harness::{
    compare_to_bounds, dominance_suite, run_batch, BatchResult, ComparisonRow, DominanceSetup, SimConfig, Simulator,
    ATTACK_TRACE_HEADER, TRAJECTORY_TRACE_HEADER,
};
use trustnet::trust::TRUST_TRACE_HEADER;

use crate::plot::{line_chart, Series};
use crate::spec::{ExperimentSpec, ScenarioSpec};
use crate::CliError;

/// Largest tolerated gap between a run's final state and its decomposition.
pub const DECOMPOSITION_TOL: f64 = 1e-9;

/// Command-line options shared by every command.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub spec: PathBuf,
    pub scenario: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub svg: bool,
    /// Also dump per-step traces of the first run.
    pub traces: bool,
}

/// Sizes the global rayon pool from `TRUSTNET_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("TRUSTNET_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("TRUSTNET_THREADS must be a positive integer, got {raw:?}")))?;
    // A pool that already exists (tests, repeated calls) keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

struct Context {
    spec: ExperimentSpec,
    out: PathBuf,
    seed: u64,
}

impl Context {
    fn load(opts: &Options) -> Result<Self, CliError> {
        let spec = ExperimentSpec::load(&opts.spec)?;
        let out = opts.out.clone().unwrap_or_else(|| spec.out.clone());
        let seed = opts.seed.unwrap_or(spec.seed);
        Ok(Self { spec, out, seed })
    }

    /// Simulator configuration of one scenario after flag overrides.
    fn config(&self, opts: &Options, scenario: &ScenarioSpec) -> Result<SimConfig, CliError> {
        let mut s = scenario.clone();
        if opts.seed.is_some() {
            s.run.seed = None;
        }
        if let Some(runs) = opts.runs {
            s.run.runs = runs;
        }
        s.sim_config(self.seed)
    }

    fn write(&self, name: &str, seed: u64, body: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        let mut text = self.spec.header(seed);
        text.push_str(body);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_plain(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        fs::write(&path, body).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Runs the batch of each selected scenario and writes `metrics.csv`,
/// `runs.csv` and, on request, SVG panels and first-run traces.
pub fn cmd_run(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let ctx = Context::load(opts)?;
    let selected = ctx.spec.select(opts.scenario.as_deref())?;
    let mut configs = Vec::new();
    for (name, scenario) in &selected {
        configs.push((*name, ctx.config(opts, scenario).map_err(|e| prefix(e, name))?));
    }

    let mut metrics = String::from("scenario,t,metric,mean,stderr\n");
    let mut runs = String::from(
        "scenario,run,seed,tf,nominal_from,max_deviation,final_disagreement,final_exclusion,final_inclusion,z,nominal_value,decomposition_residual\n",
    );
    let mut files = Vec::new();
    for (name, cfg) in configs {
        let sim = Simulator::new(cfg.clone()).map_err(|e| prefix(e.into(), name))?;
        let batch = run_batch(&sim, cfg.n_runs).map_err(|e| prefix(e.into(), name))?;
        write_metrics(&mut metrics, name, &batch);
        write_runs(&mut runs, name, &batch);
        if opts.svg {
            files.extend(write_panels(&ctx, name, &batch)?);
        }
        if opts.traces {
            files.extend(write_traces(&ctx, name, &sim)?);
        }
    }
    files.insert(0, ctx.write("metrics.csv", ctx.seed, &metrics)?);
    files.insert(1, ctx.write("runs.csv", ctx.seed, &runs)?);
    Ok(files)
}

fn prefix(e: CliError, scenario: &str) -> CliError {
    match e {
        CliError::Config(m) => CliError::Config(format!("scenario {scenario:?}: {m}")),
        CliError::Invariant(m) => CliError::Invariant(format!("scenario {scenario:?}: {m}")),
        other => other,
    }
}

fn write_metrics(out: &mut String, scenario: &str, batch: &BatchResult) {
    for m in &batch.metrics {
        for (t, (mean, se)) in m.mean.iter().zip(&m.stderr).enumerate() {
            let _ = writeln!(out, "{scenario},{t},{},{mean},{se}", m.name);
        }
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_runs(out: &mut String, scenario: &str, batch: &BatchResult) {
    for (k, r) in batch.runs.iter().enumerate() {
        let h = r.horizon() as usize;
        let _ = writeln!(
            out,
            "{scenario},{k},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            opt(r.tf),
            opt(r.nominal_from),
            r.max_deviation(),
            r.disagreement[h],
            r.legit_exclusion_freq(h),
            r.malicious_inclusion_freq(h),
            r.z,
            r.nominal_value,
            r.decomposition_residual,
        );
    }
}

fn write_panels(ctx: &Context, scenario: &str, batch: &BatchResult) -> Result<Vec<PathBuf>, CliError> {
    let get = |name: &str| batch.metric(name).map_or(&[][..], |m| m.mean.as_slice());
    let misclass = line_chart(
        &format!("{scenario}: misclassification"),
        "run-averaged frequency",
        &[
            Series { label: "legit excluded", values: get("legit_exclusion_freq") },
            Series { label: "malicious included", values: get("malicious_inclusion_freq") },
        ],
        false,
    );
    let consensus = line_chart(
        &format!("{scenario}: consensus"),
        "run-averaged value",
        &[
            Series { label: "max disagreement", values: get("max_disagreement") },
            Series { label: "max deviation", values: get("max_deviation") },
        ],
        true,
    );
    Ok(vec![
        ctx.write_plain(&format!("{scenario}_misclassification.svg"), &misclass)?,
        ctx.write_plain(&format!("{scenario}_consensus.svg"), &consensus)?,
    ])
}

fn write_traces(ctx: &Context, scenario: &str, sim: &Simulator) -> Result<Vec<PathBuf>, CliError> {
    let (metrics, traces) = sim.run_traced(0)?;
    let parts = [
        ("trust", TRUST_TRACE_HEADER, &traces.trust),
        ("classification", CLASSIFICATION_TRACE_HEADER, &traces.classification),
        ("trajectory", TRAJECTORY_TRACE_HEADER, &traces.trajectory),
        ("attacks", ATTACK_TRACE_HEADER, &traces.attacks),
    ];
    let mut files = Vec::new();
    for (kind, header, body) in parts {
        let text = format!("{header}\n{body}");
        files.push(ctx.write(&format!("trace_{scenario}_{kind}.csv"), metrics.seed, &text)?);
    }
    Ok(files)
}

/// Strictly increasing and free of `t = 0`.
fn check_grid(grid: &[u64]) -> Result<(), CliError> {
    if grid.contains(&0) {
        return Err(CliError::Config("bounds grid must not contain t = 0".into()));
    }
    let mut seen = HashSet::new();
    if let Some(t) = grid.iter().find(|t| !seen.insert(**t)) {
        return Err(CliError::Config(format!("bounds grid repeats t = {t}")));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(CliError::Config("bounds grid must be increasing".into()));
    }
    Ok(())
}

fn bound_inputs(ctx: &Context, scenario: &ScenarioSpec, cfg: &SimConfig) -> Result<BoundInputs, CliError> {
    let b = &ctx.spec.bounds;
    let eps1 = match (b.eps1, scenario.threshold_schedule()?) {
        (Some(e), _) => e,
        (None, ThresholdSchedule::SqrtLog { eps1 }) => eps1,
        (None, other) => {
            return Err(CliError::Config(format!(
                "bounds.eps1 is required with the {} threshold",
                other.name()
            )))
        }
    };
    let inputs = cfg.bound_inputs(eps1, b.eps2, b.delta);
    inputs.validate()?;
    Ok(inputs)
}

fn cell(b: Bound) -> String {
    b.reported().to_string()
}

/// Writes `bounds_<scenario>.csv` for each selected scenario: every bound on
/// the grid, clipped to 1, with vacuity flags, followed by the assumption
/// checks as comment lines.
pub fn cmd_bounds(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let ctx = Context::load(opts)?;
    check_grid(&ctx.spec.bounds.grid)?;
    let selected = ctx.spec.select(opts.scenario.as_deref())?;
    let mut files = Vec::new();
    for (name, scenario) in selected {
        let cfg = ctx.config(opts, scenario).map_err(|e| prefix(e, name))?;
        let inputs = bound_inputs(&ctx, scenario, &cfg).map_err(|e| prefix(e, name))?;
        let body = bounds_table(&ctx, scenario, &cfg, &inputs).map_err(|e| prefix(e, name))?;
        files.push(ctx.write(&format!("bounds_{name}.csv"), cfg.base_seed, &body)?);
    }
    Ok(files)
}

fn bounds_table(ctx: &Context, scenario: &ScenarioSpec, cfg: &SimConfig, inputs: &BoundInputs) -> Result<String, CliError> {
    let sim = Simulator::new(cfg.clone())?;
    let topo = sim.topology();
    let rho2 = sim.nominal().rho2();
    let schedule = scenario.threshold_schedule()?;
    let delta_max = if cfg.t0 >= 2 {
        Some(deviation_bound(inputs, &g_functions(inputs)?)?)
    } else {
        None
    };

    let mut s = String::from(
        "t,legit_bound,malicious_bound,tf_tail,delta_max,rate_bound,legit_vacuous,malicious_vacuous,tf_vacuous\n",
    );
    for &t in &ctx.spec.bounds.grid {
        let xi = schedule.threshold(t);
        // Worst observer: largest degree for exclusion, any attacker neighbor for inclusion.
        let max_deg = (0..topo.n_legit()).filter_map(|i| topo.degree(i).ok()).max().unwrap_or(0);
        let legit = legit_misclass_bound(max_deg, xi, t);
        let malicious = (topo.malicious_pair_count() > 0).then(|| {
            let cum_p = cumulative_min_probability(&cfg.attack, t);
            malicious_misclass_bound(inputs.gap, cum_p, xi, t)
        });
        let tf = tf_tail_bound(inputs, t)?;
        let rate = if cfg.t0 >= 2 && t + 1 >= cfg.t0 {
            Some(rate_bound(inputs, t, rho2)?.value)
        } else {
            None
        };
        let _ = writeln!(
            s,
            "{t},{},{},{},{},{},{},{},{}",
            cell(legit),
            opt(malicious.map(cell)),
            cell(tf),
            opt(delta_max),
            opt(rate),
            u8::from(legit.vacuous),
            opt(malicious.map(|b| u8::from(b.vacuous))),
            u8::from(tf.vacuous),
        );
    }
    let report = validate_assumptions(inputs, &schedule, &cfg.attack, ctx.spec.bounds.check_horizon, inputs.eps1);
    for c in &report.checks {
        let _ = writeln!(
            s,
            "# assumption {} {} margin={} from_t={} {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.margin,
            opt(c.from_t),
            c.detail
        );
    }
    Ok(s)
}

/// Runs the batch comparison, the observer-level dominance suite and the
/// decomposition check for each selected scenario. Writes
/// `verify_<scenario>.csv`; any failing row yields exit 4.
pub fn cmd_verify(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let ctx = Context::load(opts)?;
    check_grid(&ctx.spec.bounds.grid)?;
    let selected = ctx.spec.select(opts.scenario.as_deref())?;
    let v = &ctx.spec.verify;
    if !(v.bound_scale > 0.0) {
        return Err(CliError::Config(format!("verify.bound_scale must be positive, got {}", v.bound_scale)));
    }
    if v.trials == 0 {
        return Err(CliError::Config("verify.trials must be at least 1".into()));
    }
    let mut files = Vec::new();
    let mut failures = Vec::new();
    for (name, scenario) in selected {
        let cfg = ctx.config(opts, scenario).map_err(|e| prefix(e, name))?;
        let inputs = bound_inputs(&ctx, scenario, &cfg).map_err(|e| prefix(e, name))?;
        let rows = verify_rows(&ctx, scenario, &cfg, &inputs).map_err(|e| prefix(e, name))?;
        let mut body = String::from("source,check,t,empirical,stderr,bound,vacuous,pass\n");
        for (source, r) in &rows {
            let _ = writeln!(
                body,
                "{source},{},{},{},{},{},{},{}",
                r.check,
                r.t,
                r.empirical,
                r.stderr,
                r.bound,
                u8::from(r.vacuous),
                u8::from(r.pass)
            );
            if !r.pass {
                failures.push(format!("{name}: {} t={}", r.check, r.t));
            }
        }
        files.push(ctx.write(&format!("verify_{name}.csv"), cfg.base_seed, &body)?);
    }
    if failures.is_empty() {
        Ok(files)
    } else {
        Err(CliError::Dominance(failures))
    }
}

fn verify_rows(
    ctx: &Context,
    scenario: &ScenarioSpec,
    cfg: &SimConfig,
    inputs: &BoundInputs,
) -> Result<Vec<(&'static str, ComparisonRow)>, CliError> {
    let v = &ctx.spec.verify;
    let grid = &ctx.spec.bounds.grid;
    let sim = Simulator::new(cfg.clone())?;
    let batch = run_batch(&sim, cfg.n_runs)?;
    let mut rows: Vec<_> = compare_to_bounds(&batch, &sim, inputs, grid, v.bound_scale)?
        .into_iter()
        .map(|r| ("batch", r))
        .collect();

    let worst = batch.runs.iter().map(|r| r.decomposition_residual).fold(0.0, f64::max);
    rows.push((
        "batch",
        ComparisonRow {
            check: "decomposition",
            t: cfg.horizon,
            empirical: worst,
            stderr: 0.0,
            bound: DECOMPOSITION_TOL,
            vacuous: false,
            pass: worst <= DECOMPOSITION_TOL,
        },
    ));

    if !grid.is_empty() {
        let mut setup = DominanceSetup::for_topology(
            sim.topology(),
            cfg.trust,
            cfg.attack,
            scenario.threshold_schedule()?,
            grid.clone(),
            v.trials,
            cfg.base_seed,
        );
        setup.bound_scale = v.bound_scale;
        rows.extend(dominance_suite(&setup)?.into_iter().map(|r| ("observer", r)));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    #[test]
    fn grid_validation() {
        assert!(check_grid(&[]).is_ok());
        assert!(check_grid(&[25, 50, 200]).is_ok());
        assert!(check_grid(&[0, 25]).is_err());
        assert!(check_grid(&[25, 25]).is_err());
        assert!(check_grid(&[50, 25]).is_err());
    }

    #[test]
    fn optional_cells_are_blank() {
        assert_eq!(opt::<u64>(None), "");
        assert_eq!(opt(Some(3)), "3");
        assert_eq!(cell(Bound::new(2.5)), "1");
    }

    #[test]
    fn missing_spec_is_a_config_error() {
        let opts = Options {
            spec: Path::new("/nonexistent/spec.toml").to_path_buf(),
            ..Options::default()
        };
        assert_eq!(cmd_run(&opts).unwrap_err().exit_code(), 2);
    }
}
