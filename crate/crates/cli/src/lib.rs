//! Library side of the `extremes` binary: config loading, the five
//! commands and their exit codes.
//!
//! Every command returns an [`Outcome`] holding the JSON summary printed on
//! stdout, a one-line human summary for stderr and the exit code. CSV goes
//! to `--out` through a single writer after all trials have finished, so
//! the bytes do not depend on scheduling.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use extremes::algorithms::{self, AlgorithmKind};
use extremes::byzantine::{run_byzantine, ByzError, ByzScenario};
use extremes::engine::{self, FuzzSummary, FuzzTemplate, ScenarioError, Trace, Violation};
use extremes::netmodel::{self, GraphFile, ModelCounterexample, NetError};
use extremes::{parallel, report, seed};
use extremes::{CommGraph, GraphSource, NetworkModel, Scenario, SourceKind, UpdateRule};

pub use config::Config;
use config::{GraphKind, SweepModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Default horizon cap when the round bound is large.
const MAX_DEFAULT_ROUNDS: usize = 100_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("bad override: {0}")]
    Override(String),
    #[error("override key `{0}` is not in the config schema")]
    UnknownKey(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Byzantine(#[from] ByzError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fuzz,
    VerifyModel,
    Byzantine,
    Sweep,
}

/// One invocation: command, config path, overrides and output options.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            config_path: None,
            overrides: Vec::new(),
            out_path: None,
            seed: None,
            trials: None,
        }
    }
}

/// The stdout summary of the simulation commands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub max_rate: Option<f64>,
    pub rate_bound: Option<f64>,
    /// Largest convergence time over the trials; `null` if any trial ended
    /// above epsilon.
    pub convergence_time: Option<usize>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl Outcome {
    fn config_error(err: &CliError) -> Self {
        Outcome {
            stdout: String::new(),
            stderr: format!("error: {err}"),
            code: EXIT_CONFIG,
        }
    }
}

/// Runs one invocation; config problems map to exit code 1.
pub fn execute(run: &RunConfig) -> Outcome {
    match try_execute(run) {
        Ok(outcome) => outcome,
        Err(err) => Outcome::config_error(&err),
    }
}

fn try_execute(run: &RunConfig) -> Result<Outcome, CliError> {
    let mut cfg = Config::load(run.config_path.as_deref(), &run.overrides)?;
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(t) = run.trials {
        cfg.trials = t;
    }
    if cfg.trials == 0 {
        return Err(CliError::Invalid("trials must be at least 1".into()));
    }
    match run.command {
        Command::Simulate => simulate(&cfg, run),
        Command::Fuzz => fuzz(&cfg, run),
        Command::VerifyModel => verify_model(&cfg),
        Command::Byzantine => byzantine_cmd(&cfg, run),
        Command::Sweep => sweep(&cfg, run),
    }
}

fn write_csv(run: &RunConfig, traces: &[Trace]) -> Result<(), CliError> {
    let Some(path) = &run.out_path else {
        return Ok(());
    };
    let wrap = |source| CliError::Write { path: path.clone(), source };
    let file = File::create(path).map_err(wrap)?;
    let mut out = BufWriter::new(file);
    report::write_csv(&mut out, traces).map_err(wrap)?;
    out.flush().map_err(wrap)
}

fn summarize(traces: &[Trace]) -> Summary {
    let stats = FuzzSummary::from_traces(traces);
    let convergence_time = if traces.iter().all(|t| t.convergence_time.is_some()) {
        stats.max_convergence_time
    } else {
        None
    };
    Summary {
        max_rate: stats.max_rate,
        rate_bound: stats
            .max_rate_bound
            .or_else(|| traces.iter().map(|t| t.rate_bound).reduce(f64::max)),
        convergence_time,
        violations: stats.violations,
    }
}

fn finish(summary: Summary, traces: &[Trace], run: &RunConfig) -> Result<Outcome, CliError> {
    write_csv(run, traces)?;
    let fmt_opt = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v}"));
    let final_diameter = traces.iter().map(Trace::final_diameter).fold(0.0, f64::max);
    let mut stderr = format!(
        "trials={} final_diameter={} convergence_time={} max_rate={} rate_bound={} violations={}",
        traces.len(),
        final_diameter,
        summary.convergence_time.map_or("none".to_string(), |t| t.to_string()),
        fmt_opt(summary.max_rate),
        fmt_opt(summary.rate_bound),
        summary.violations.len(),
    );
    for v in summary.violations.iter().take(20) {
        stderr.push('\n');
        stderr.push_str(&v.to_string());
    }
    let code = if summary.violations.is_empty() { EXIT_OK } else { EXIT_VIOLATION };
    Ok(Outcome {
        stdout: serde_json::to_string(&summary).expect("summary serializes"),
        stderr,
        code,
    })
}

fn fixed_graphs(cfg: &Config, n: usize) -> Result<Vec<CommGraph>, CliError> {
    let gs = &cfg.graph_source;
    let file = match (&gs.file, &gs.rounds) {
        (Some(path), None) => GraphFile::load(path)?,
        (None, Some(rounds)) => GraphFile { n, rounds: rounds.clone() },
        (Some(_), Some(_)) => {
            return Err(CliError::Invalid("graph_source: give either `file` or `rounds`, not both".into()))
        }
        (None, None) => {
            return Err(CliError::Invalid("graph_source: fixed_sequence needs `file` or `rounds`".into()))
        }
    };
    if file.n != n {
        return Err(ScenarioError::SourceSize { n, source_n: file.n }.into());
    }
    Ok(file.graphs()?)
}

fn graph_source(cfg: &Config, n: usize, model: NetworkModel, seed: u64) -> Result<GraphSource, CliError> {
    let gs = &cfg.graph_source;
    let kind = match gs.kind {
        GraphKind::FixedSequence => SourceKind::FixedSequence(fixed_graphs(cfg, n)?),
        GraphKind::Complete => SourceKind::FixedSequence(vec![CommGraph::complete(n)]),
        GraphKind::Star => {
            if gs.center >= n {
                return Err(CliError::Invalid(format!("star center {} is not below n = {n}", gs.center)));
            }
            let edges: Vec<(usize, usize)> = (0..n).map(|j| (gs.center, j)).collect();
            SourceKind::FixedSequence(vec![CommGraph::from_edges(n, &edges)?])
        }
        GraphKind::StarRotating => SourceKind::StarRotating,
        GraphKind::RandomNonsplit => SourceKind::RandomNonsplit { density: gs.density },
        GraphKind::Omission => SourceKind::Omission { t: gs.t },
        GraphKind::CrashRounds => SourceKind::CrashRounds { f: gs.f },
        GraphKind::RootedChain => SourceKind::RootedChain { density: gs.density },
    };
    Ok(GraphSource::new(n, kind, model, seed::mix(&[seed, 0x9a]))?)
}

/// Everything that varies between sweep cells.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    n: usize,
    d: usize,
    rule: UpdateRule,
    model: SweepModel,
    epsilon: f64,
}

impl Cell {
    fn base(cfg: &Config, model: SweepModel) -> Self {
        Cell {
            n: cfg.scenario.n,
            d: cfg.scenario.d,
            rule: cfg.algorithm.rule,
            model,
            epsilon: cfg.scenario.epsilon,
        }
    }
}

fn sweep_model(model: NetworkModel) -> SweepModel {
    match model {
        NetworkModel::Nonsplit => SweepModel::Nonsplit,
        NetworkModel::Rooted => SweepModel::Rooted,
        NetworkModel::Unrestricted => SweepModel::Unrestricted,
    }
}

fn build_scenario(cfg: &Config, cell: Cell, model: NetworkModel, trial: usize, trial_seed: u64) -> Result<Scenario, CliError> {
    let kind = AlgorithmKind {
        rule: cell.rule,
        amortized: cfg.algorithm.amortized,
        decide_after: cfg.algorithm.decide_after,
    };
    let source = graph_source(cfg, cell.n, model, trial_seed)?;
    let mut scenario = Scenario::new(kind, source, Vec::new());
    scenario.n = cell.n;
    scenario.d = cell.d;
    scenario.initial_values = cfg.scenario.initial_values.to_core()?;
    scenario.epsilon = cell.epsilon;
    scenario.delta_bound = cfg.scenario.delta_bound;
    scenario.seed = trial_seed;
    scenario.trial = trial;
    scenario.check_invariants = cfg.scenario.check_invariants;
    scenario.adversary_candidates = cfg.scenario.adversary_candidates;
    scenario.max_rounds = 1;
    let (_, delta) = scenario.resolve()?;
    let bound = if delta > 0.0 {
        algorithms::required_rounds(delta, cell.epsilon, &kind, cell.d, cell.n).map_err(ScenarioError::from)?
    } else {
        0
    };
    let deciding = cfg.algorithm.decide && kind.decide_after.is_none();
    if deciding {
        scenario.algorithm = kind.deciding_after(bound);
    }
    scenario.max_rounds = match cfg.scenario.max_rounds {
        Some(r) => r,
        None if scenario.rate_is_guaranteed() || deciding => (bound + 2).min(MAX_DEFAULT_ROUNDS),
        None => 100,
    };
    Ok(scenario)
}

fn build_byzantine(cfg: &Config, cell: Cell, trial: usize, trial_seed: u64) -> Result<(ByzScenario, Option<usize>), CliError> {
    let byz = cfg.byzantine.clone().unwrap_or_default();
    if cell.rule != UpdateRule::MidExtremes {
        return Err(CliError::Invalid(format!(
            "the byzantine model runs the safe-area mid_extremes update, not {}",
            cell.rule
        )));
    }
    let scn = ByzScenario {
        n: cell.n,
        f: byz.f,
        d: cell.d,
        correct_values: cfg.scenario.initial_values.to_core()?,
        adversary: byz.adversary,
        epsilon: cell.epsilon,
        delta_bound: cfg.scenario.delta_bound,
        seed: trial_seed,
        trial,
    };
    scn.resolve()?;
    Ok((scn, byz.rounds))
}

enum Job {
    Engine(Scenario),
    Byzantine(ByzScenario, Option<usize>),
}

fn build_job(cfg: &Config, cell: Cell, trial: usize) -> Result<Job, CliError> {
    let trial_seed = seed::split(cfg.seed, trial as u64);
    let model = match cell.model {
        SweepModel::Nonsplit => NetworkModel::Nonsplit,
        SweepModel::Rooted => NetworkModel::Rooted,
        SweepModel::Unrestricted => NetworkModel::Unrestricted,
        SweepModel::Byzantine => {
            let (scn, rounds) = build_byzantine(cfg, cell, trial, trial_seed)?;
            return Ok(Job::Byzantine(scn, rounds));
        }
    };
    Ok(Job::Engine(build_scenario(cfg, cell, model, trial, trial_seed)?))
}

/// Builds every job up front so configuration errors surface before any
/// work runs, then executes them in trial order.
fn run_cells(cfg: &Config, cells: &[Cell]) -> Result<Vec<Trace>, CliError> {
    let mut jobs = Vec::with_capacity(cells.len() * cfg.trials);
    for (c, &cell) in cells.iter().enumerate() {
        for k in 0..cfg.trials {
            jobs.push(build_job(cfg, cell, c * cfg.trials + k)?);
        }
    }
    let results = parallel::map_indexed(jobs.len(), cfg.execution, |i| match &jobs[i] {
        Job::Engine(s) => engine::run(s).map_err(CliError::from),
        Job::Byzantine(s, rounds) => run_byzantine(s, *rounds).map_err(CliError::from),
    });
    results.into_iter().collect()
}

fn simulate(cfg: &Config, run: &RunConfig) -> Result<Outcome, CliError> {
    let cell = Cell::base(cfg, sweep_model(cfg.graph_source.model));
    let traces = run_cells(cfg, &[cell])?;
    finish(summarize(&traces), &traces, run)
}

fn byzantine_cmd(cfg: &Config, run: &RunConfig) -> Result<Outcome, CliError> {
    let cell = Cell::base(cfg, SweepModel::Byzantine);
    let traces = run_cells(cfg, &[cell])?;
    finish(summarize(&traces), &traces, run)
}

fn sweep(cfg: &Config, run: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Invalid("sweep needs a `sweep` stanza".into()))?;
    if grid.n.is_none() && grid.d.is_none() && grid.algorithm.is_none() && grid.model.is_none() && grid.epsilon.is_none() {
        return Err(CliError::Invalid("sweep grid is empty: give at least one axis".into()));
    }
    let base = Cell::base(cfg, sweep_model(cfg.graph_source.model));
    let ns = grid.n.clone().unwrap_or(vec![base.n]);
    let ds = grid.d.clone().unwrap_or(vec![base.d]);
    let rules = grid.algorithm.clone().unwrap_or(vec![base.rule]);
    let models = grid.model.clone().unwrap_or(vec![base.model]);
    let eps = grid.epsilon.clone().unwrap_or(vec![base.epsilon]);
    let mut cells = Vec::new();
    for &n in &ns {
        for &d in &ds {
            for &rule in &rules {
                for &model in &models {
                    for &epsilon in &eps {
                        cells.push(Cell { n, d, rule, model, epsilon });
                    }
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::Invalid("sweep grid is empty: an axis has no values".into()));
    }
    let traces = run_cells(cfg, &cells)?;
    finish(summarize(&traces), &traces, run)
}

fn fuzz(cfg: &Config, run: &RunConfig) -> Result<Outcome, CliError> {
    let kind = AlgorithmKind {
        rule: cfg.algorithm.rule,
        amortized: cfg.algorithm.amortized,
        decide_after: cfg.algorithm.decide_after,
    };
    let (lo, hi) = match cfg.scenario.initial_values {
        config::InitialValuesConfig::UniformBox { lo, hi } => (lo, hi),
        config::InitialValuesConfig::Explicit(_) => {
            return Err(CliError::Invalid("fuzz draws its own values: scenario.initial_values must be a box".into()))
        }
    };
    let mut template = FuzzTemplate::new(kind, cfg.fuzz.n.clone(), cfg.fuzz.d.clone());
    template.families = cfg.fuzz.families.clone();
    template.model = cfg.graph_source.model;
    template.init_lo = lo;
    template.init_hi = hi;
    template.epsilon = cfg.scenario.epsilon;
    template.max_rounds = cfg.scenario.max_rounds;
    template.horizon_cap = cfg.fuzz.horizon_cap;
    template.adversary_candidates = cfg.scenario.adversary_candidates;
    template.corner_fraction = cfg.fuzz.corner_fraction;
    template.root_seed = cfg.seed;
    template.check_invariants = cfg.scenario.check_invariants;
    template.keep_traces = true;
    let outcome = engine::fuzz(&template, cfg.trials, cfg.execution)?;
    let traces = outcome.traces.unwrap_or_default();
    finish(summarize(&traces), &traces, run)
}

/// Result of checking a graph file against its claimed model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub model: NetworkModel,
    pub n: usize,
    pub rounds: usize,
    /// First failing round, 1-based.
    pub counterexample_round: Option<usize>,
    /// Length of the failing composition window, for rooted claims.
    pub window_len: Option<usize>,
}

fn verify_model(cfg: &Config) -> Result<Outcome, CliError> {
    let gs = &cfg.graph_source;
    let file = match (&gs.file, &gs.rounds) {
        (Some(path), _) => GraphFile::load(path)?,
        (None, Some(rounds)) => GraphFile { n: cfg.scenario.n, rounds: rounds.clone() },
        (None, None) => return Err(CliError::Invalid("verify-model needs graph_source.file or graph_source.rounds".into())),
    };
    let graphs = file.graphs()?;
    let found = netmodel::verify_sequence(&graphs, gs.model)?;
    let (round, window_len) = match found {
        None => (None, None),
        Some(ModelCounterexample::Round(r)) => (Some(r), None),
        Some(ModelCounterexample::Window { start, len }) => (Some(start), Some(len)),
    };
    let report = ModelReport {
        model: gs.model,
        n: file.n,
        rounds: graphs.len(),
        counterexample_round: round,
        window_len,
    };
    let stderr = match &found {
        None => format!("all {} rounds satisfy the {} model", graphs.len(), gs.model),
        Some(ModelCounterexample::Round(r)) => format!("counterexample: round {r} is not {}", gs.model),
        Some(ModelCounterexample::Window { .. }) => {
            format!("counterexample: {} does not compose to a non-split graph", found.as_ref().expect("some"))
        }
    };
    Ok(Outcome {
        stdout: serde_json::to_string(&report).expect("report serializes"),
        stderr,
        code: if found.is_some() { EXIT_VIOLATION } else { EXIT_OK },
    })
}

