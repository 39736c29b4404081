//! Deterministic round-by-round executor.
//!
//! [`run`] plays one scenario, recording the value-set diameter, the
//! round-by-round convergence rate and decisions, and checks the trace
//! against the convergence guarantees. [`fuzz`] runs seeded randomized
//! trials of a template, optionally in parallel, and reduces them in trial
//! order.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{self, AgentState, AlgorithmError, AlgorithmKind};
use crate::geometry::{self, BoundingBox, Point};
use crate::netmodel::{CommGraph, GraphSource, NetError, NetworkModel, SourceKind};
use crate::parallel::{self, Execution};
use crate::seed;

/// Absolute slack on every rate and distance assertion.
pub const RATE_SLACK: f64 = 1e-9;

/// Smallest previous diameter for which a rate is reported.
///
/// Each computed midpoint is off by at most half an ulp per coordinate, so
/// the new diameter is off by up to `sqrt(d) * eps * scale`; below this floor
/// that rounding alone could move the ratio by more than [`RATE_SLACK`].
pub fn rate_floor(config: &[Point]) -> f64 {
    let scale = config
        .iter()
        .flat_map(|p| p.coords().iter())
        .fold(0.0f64, |m, c| m.max(c.abs()));
    let d = config.first().map_or(1, Point::dim) as f64;
    d.sqrt() * f64::EPSILON * scale / RATE_SLACK
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario needs n >= 1 and d >= 1 (got n = {n}, d = {d})")]
    EmptyScenario { n: usize, d: usize },
    #[error("graph source is for {source_n} agents, scenario has {n}")]
    SourceSize { n: usize, source_n: usize },
    #[error("expected {expected} initial values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("initial value {index} has dimension {got}, expected {expected}")]
    ValueDimension { index: usize, expected: usize, got: usize },
    #[error("initial box [{lo}, {hi}] is empty or not finite")]
    BadBox { lo: f64, hi: f64 },
    #[error("epsilon must be positive and finite (got {0})")]
    Epsilon(f64),
    #[error("initial diameter {actual} exceeds delta_bound {bound}")]
    DeltaBound { actual: f64, bound: f64 },
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error("adversary_candidates must be at least 1")]
    NoCandidates,
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialValues {
    Explicit(Vec<Point>),
    /// Coordinates drawn uniformly from `[lo, hi]` under the scenario seed.
    UniformBox { lo: f64, hi: f64 },
}

impl InitialValues {
    /// `count` values of dimension `d`, with the default diameter bound
    /// (the actual diameter for explicit values, the box diagonal otherwise).
    pub fn resolve(&self, count: usize, d: usize, seed: u64) -> Result<(Vec<Point>, f64), ScenarioError> {
        match self {
            InitialValues::Explicit(values) => {
                if values.len() != count {
                    return Err(ScenarioError::ValueCount { expected: count, got: values.len() });
                }
                if let Some((index, p)) = values.iter().enumerate().find(|(_, p)| p.dim() != d) {
                    return Err(ScenarioError::ValueDimension { index, expected: d, got: p.dim() });
                }
                Ok((values.clone(), geometry::diameter_value(values)))
            }
            &InitialValues::UniformBox { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(ScenarioError::BadBox { lo, hi });
                }
                let mut rng = seed::rng(seed::mix(&[seed, 0x1a17]));
                let values = (0..count)
                    .map(|_| Point::from_raw((0..d).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()))
                    .collect();
                Ok((values, (hi - lo) * (d as f64).sqrt()))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub n: usize,
    pub d: usize,
    pub algorithm: AlgorithmKind,
    pub graph_source: GraphSource,
    pub initial_values: InitialValues,
    pub epsilon: f64,
    /// A-priori bound on the initial diameter. Defaults to the actual
    /// initial diameter for explicit values and the box diagonal otherwise.
    pub delta_bound: Option<f64>,
    pub max_rounds: usize,
    pub seed: u64,
    /// Trial index, carried into exported rows.
    pub trial: usize,
    /// Retain per-round configurations and check them after the run.
    pub check_invariants: bool,
    /// When above 1 and the source is randomized, each round the engine
    /// picks, among this many candidate graphs, the one maximizing the new
    /// diameter.
    pub adversary_candidates: usize,
}

impl Scenario {
    pub fn new(algorithm: AlgorithmKind, graph_source: GraphSource, initial_values: Vec<Point>) -> Self {
        let n = graph_source.n();
        let d = initial_values.first().map_or(1, Point::dim);
        Scenario {
            n,
            d,
            algorithm,
            graph_source,
            initial_values: InitialValues::Explicit(initial_values),
            epsilon: 1e-6,
            delta_bound: None,
            max_rounds: 100,
            seed: 0,
            trial: 0,
            check_invariants: true,
            adversary_candidates: 1,
        }
    }

    /// Resolved initial configuration and diameter bound.
    pub fn resolve(&self) -> Result<(Vec<Point>, f64), ScenarioError> {
        let (n, d) = (self.n, self.d);
        if n == 0 || d == 0 {
            return Err(ScenarioError::EmptyScenario { n, d });
        }
        if self.graph_source.n() != n {
            return Err(ScenarioError::SourceSize { n, source_n: self.graph_source.n() });
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ScenarioError::Epsilon(self.epsilon));
        }
        if self.max_rounds == 0 {
            return Err(ScenarioError::NoRounds);
        }
        if self.adversary_candidates == 0 {
            return Err(ScenarioError::NoCandidates);
        }
        let (values, default_bound) = self.initial_values.resolve(n, d, self.seed)?;
        let actual = geometry::diameter_value(&values);
        let bound = self.delta_bound.unwrap_or(default_bound);
        if actual > bound {
            return Err(ScenarioError::DeltaBound { actual, bound });
        }
        Ok((values, bound))
    }

    /// Whether the declared model makes the rate bound a guarantee.
    pub fn rate_is_guaranteed(&self) -> bool {
        match self.graph_source.declared_model() {
            NetworkModel::Nonsplit => true,
            NetworkModel::Rooted => self.algorithm.amortized || self.n <= 2,
            NetworkModel::Unrestricted => false,
        }
    }

    /// Rate bound checked on every defined rate: the theorem bound when it
    /// is guaranteed, 1 (convex-combination monotonicity) otherwise.
    pub fn rate_bound(&self) -> f64 {
        if self.rate_is_guaranteed() {
            self.algorithm.rule.rate_bound(self.d)
        } else {
            1.0
        }
    }

    pub fn model_label(&self) -> String {
        self.graph_source.kind().name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub diameter: f64,
    /// `diameter(t) / diameter(t - L)` for macro-round length `L` (1 unless
    /// amortized), recorded at macro-round ends whose previous diameter is
    /// above [`rate_floor`].
    pub rate: Option<f64>,
    pub decided_count: usize,
    pub rate_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    ModelViolation,
    UpdateError,
    RateBound,
    BoxMonotonicity,
    EpsilonAgreement,
    DecisionOutsideBox,
    ConvergenceBound,
    InvalidCollections,
    EmptySafeArea,
    Contraction,
    UnsafeRegion,
    DisjointSafeAreas,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::ModelViolation => "model_violation",
            ViolationKind::UpdateError => "update_error",
            ViolationKind::RateBound => "rate_bound",
            ViolationKind::BoxMonotonicity => "box_monotonicity",
            ViolationKind::EpsilonAgreement => "epsilon_agreement",
            ViolationKind::DecisionOutsideBox => "decision_outside_box",
            ViolationKind::ConvergenceBound => "convergence_bound",
            ViolationKind::InvalidCollections => "invalid_collections",
            ViolationKind::EmptySafeArea => "empty_safe_area",
            ViolationKind::Contraction => "contraction",
            ViolationKind::UnsafeRegion => "unsafe_region",
            ViolationKind::DisjointSafeAreas => "disjoint_safe_areas",
        }
    }
}

/// One failed check, with enough context to replay the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub trial: usize,
    pub seed: u64,
    pub round: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "violation kind={} trial={} seed={}", self.kind.name(), self.trial, self.seed)?;
        if let Some(r) = self.round {
            write!(f, " round={r}")?;
        }
        write!(f, " detail={:?}", self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub trial: usize,
    pub seed: u64,
    pub algorithm: String,
    pub model: String,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta_bound: f64,
    pub rate_bound: f64,
    /// Round by which the diameter is guaranteed to be at most epsilon.
    pub required_rounds: Option<usize>,
    pub rows: Vec<MetricsRow>,
    /// First round after which every observed diameter is at most epsilon.
    pub convergence_time: Option<usize>,
    /// The last observed diameter is still above epsilon.
    pub horizon_truncated: bool,
    pub initial_values: Vec<Point>,
    /// Configurations of rounds `0..=last`, when retained.
    pub configurations: Option<Vec<Vec<Point>>>,
    pub decisions: Vec<Option<Point>>,
    pub violations: Vec<Violation>,
    pub aborted: bool,
}

impl Trace {
    pub fn final_diameter(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.diameter)
    }

    pub fn max_rate(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.rate).reduce(f64::max)
    }

    pub(crate) fn violation(&self, kind: ViolationKind, round: Option<usize>, detail: String) -> Violation {
        Violation {
            kind,
            trial: self.trial,
            seed: self.seed,
            round,
            detail,
        }
    }

    /// Recomputes convergence time and truncation from the rows.
    pub fn update_convergence(&mut self) {
        let last_above = self.rows.iter().rposition(|r| r.diameter > self.epsilon);
        match last_above {
            None => {
                self.convergence_time = Some(self.rows.first().map_or(0, |r| r.round));
                self.horizon_truncated = false;
            }
            Some(k) if k + 1 == self.rows.len() => {
                self.convergence_time = None;
                self.horizon_truncated = true;
            }
            Some(k) => {
                self.convergence_time = Some(self.rows[k + 1].round);
                self.horizon_truncated = false;
            }
        }
    }
}

fn diameter_of(states: &[AgentState]) -> f64 {
    let ys: Vec<Point> = states.iter().map(|s| s.y.clone()).collect();
    geometry::diameter_value(&ys)
}

fn step(
    states: &[AgentState],
    graph: &CommGraph,
    round: usize,
    kind: &AlgorithmKind,
) -> Result<Vec<AgentState>, AlgorithmError> {
    let n = states.len();
    let len = kind.macro_len(n);
    let next: Result<Vec<AgentState>, AlgorithmError> = if kind.amortized {
        let phase = (round - 1) % len + 1;
        let payloads: Vec<Vec<Point>> = states.iter().map(|s| algorithms::macro_payload(s, phase)).collect();
        states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let rcv: Vec<Vec<Point>> = graph.in_neighbors(i).map(|j| payloads[j].clone()).collect();
                algorithms::macro_round_step(s.clone(), &rcv, phase, len, kind.rule).map(|(s, _)| s)
            })
            .collect()
    } else {
        states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let rcv: Vec<Point> = graph.in_neighbors(i).map(|j| states[j].y.clone()).collect();
                let mut s = s.clone();
                s.y = algorithms::apply_rule(kind.rule, &s.y, &rcv)?;
                Ok(s)
            })
            .collect()
    };
    Ok(next?
        .into_iter()
        .map(|s| algorithms::maybe_decide(s, round, kind))
        .collect())
}

/// Executes a scenario for `max_rounds` rounds.
///
/// Out-of-model graphs and update failures abort the run; the partial trace
/// is returned with the violation recorded.
pub fn run(scenario: &Scenario) -> Result<Trace, ScenarioError> {
    let (initial, delta_bound) = scenario.resolve()?;
    let kind = scenario.algorithm;
    let n = scenario.n;
    let len = kind.macro_len(n);
    let rate_bound = scenario.rate_bound();
    let required_rounds = if scenario.rate_is_guaranteed() && delta_bound > 0.0 {
        Some(algorithms::required_rounds(delta_bound, scenario.epsilon, &kind, scenario.d, n)?)
    } else if scenario.rate_is_guaranteed() {
        Some(0)
    } else {
        None
    };

    let mut states: Vec<AgentState> = initial
        .iter()
        .enumerate()
        .map(|(i, y)| AgentState::new(i, y.clone()))
        .collect();
    let mut diameters = vec![diameter_of(&states)];
    let mut floors = vec![rate_floor(&initial)];
    let mut trace = Trace {
        trial: scenario.trial,
        seed: scenario.seed,
        algorithm: kind.label(),
        model: scenario.model_label(),
        n,
        d: scenario.d,
        epsilon: scenario.epsilon,
        delta_bound,
        rate_bound,
        required_rounds,
        rows: vec![MetricsRow {
            round: 0,
            diameter: diameters[0],
            rate: None,
            decided_count: 0,
            rate_bound,
        }],
        convergence_time: None,
        horizon_truncated: false,
        initial_values: initial.clone(),
        configurations: scenario.check_invariants.then(|| vec![initial.clone()]),
        decisions: vec![None; n],
        violations: Vec::new(),
        aborted: false,
    };

    let candidates = if scenario.graph_source.is_randomized() {
        scenario.adversary_candidates as u64
    } else {
        1
    };

    for round in 1..=scenario.max_rounds {
        let mut best: Option<(f64, Vec<AgentState>)> = None;
        let mut failure = None;
        for k in 0..candidates {
            let graph = match scenario.graph_source.candidate_graph(round, k) {
                Ok(g) => g,
                Err(e) => {
                    failure = Some((ViolationKind::ModelViolation, e.to_string()));
                    break;
                }
            };
            match step(&states, &graph, round, &kind) {
                Ok(next) => {
                    let diam = diameter_of(&next);
                    if best.as_ref().is_none_or(|(b, _)| diam > *b) {
                        best = Some((diam, next));
                    }
                }
                Err(e) => {
                    failure = Some((ViolationKind::UpdateError, e.to_string()));
                    break;
                }
            }
        }
        if let Some((vk, detail)) = failure {
            let v = trace.violation(vk, Some(round), detail);
            trace.violations.push(v);
            trace.aborted = true;
            break;
        }
        let (diam, next) = best.expect("at least one candidate");
        states = next;
        diameters.push(diam);
        floors.push(rate_floor(&states.iter().map(|s| s.y.clone()).collect::<Vec<_>>()));
        let rate = if round % len == 0 {
            let prev = diameters[round - len];
            (prev > 0.0 && prev > floors[round - len]).then(|| diam / prev)
        } else {
            None
        };
        trace.rows.push(MetricsRow {
            round,
            diameter: diam,
            rate,
            decided_count: states.iter().filter(|s| s.decided().is_some()).count(),
            rate_bound,
        });
        if let Some(configs) = trace.configurations.as_mut() {
            configs.push(states.iter().map(|s| s.y.clone()).collect());
        }
    }

    trace.decisions = states.iter().map(|s| s.decided().cloned()).collect();
    trace.update_convergence();
    if scenario.check_invariants {
        let found = check_trace_invariants(&trace);
        trace.violations.extend(found);
    }
    Ok(trace)
}

/// Post-hoc checks of a trace: per-coordinate hull monotonicity (when
/// configurations are retained), the rate bound, decision agreement and
/// validity, and the round bound.
pub fn check_trace_invariants(trace: &Trace) -> Vec<Violation> {
    let mut out = Vec::new();

    if let Some(configs) = &trace.configurations {
        for (t, pair) in configs.windows(2).enumerate() {
            let (Ok(prev), Ok(cur)) = (BoundingBox::of(&pair[0]), BoundingBox::of(&pair[1])) else {
                continue;
            };
            for k in 0..prev.lo.len() {
                if cur.lo[k] < prev.lo[k] {
                    out.push(trace.violation(
                        ViolationKind::BoxMonotonicity,
                        Some(t + 1),
                        format!("coordinate {k} minimum decreased from {} to {}", prev.lo[k], cur.lo[k]),
                    ));
                }
                if cur.hi[k] > prev.hi[k] {
                    out.push(trace.violation(
                        ViolationKind::BoxMonotonicity,
                        Some(t + 1),
                        format!("coordinate {k} maximum increased from {} to {}", prev.hi[k], cur.hi[k]),
                    ));
                }
            }
        }
    }

    for row in &trace.rows {
        if let Some(rate) = row.rate {
            if rate > row.rate_bound + RATE_SLACK {
                out.push(trace.violation(
                    ViolationKind::RateBound,
                    Some(row.round),
                    format!("rate {rate} exceeds bound {}", row.rate_bound),
                ));
            }
        }
    }

    let decided: Vec<(usize, &Point)> = trace
        .decisions
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.as_ref().map(|p| (i, p)))
        .collect();
    for (a, &(i, pi)) in decided.iter().enumerate() {
        for &(j, pj) in &decided[a + 1..] {
            let dist = geometry::distance(pi, pj).unwrap_or(f64::INFINITY);
            if dist > trace.epsilon + RATE_SLACK {
                out.push(trace.violation(
                    ViolationKind::EpsilonAgreement,
                    None,
                    format!("decisions of agents {i} and {j} are {dist} apart (epsilon {})", trace.epsilon),
                ));
            }
        }
    }
    if let Ok(initial_box) = BoundingBox::of(&trace.initial_values) {
        for &(i, p) in &decided {
            if !initial_box.contains(p, 0.0) {
                out.push(trace.violation(
                    ViolationKind::DecisionOutsideBox,
                    None,
                    format!("decision {p} of agent {i} outside the initial bounding box"),
                ));
            }
        }
    }

    if let Some(bound) = trace.required_rounds {
        let tolerance = trace.epsilon * (1.0 + RATE_SLACK);
        if let Some(row) = trace
            .rows
            .iter()
            .find(|r| r.round >= bound && r.diameter > tolerance)
        {
            out.push(trace.violation(
                ViolationKind::ConvergenceBound,
                Some(row.round),
                format!(
                    "diameter {} above epsilon {} at or after the round bound {bound}",
                    row.diameter, trace.epsilon
                ),
            ));
        }
    }
    out
}

/// Randomized graph-source families for fuzzing; parameters are drawn per
/// trial within the range the declared model allows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceFamily {
    RandomNonsplit { density: f64 },
    StarRotating,
    /// Budget `t` drawn from `0..=n-1` (non-split) or `0..=2n-3` (rooted).
    Omission,
    /// Crash bound `f` drawn with `2f < n`.
    CrashRounds,
    RootedChain { density: f64 },
}

impl SourceFamily {
    pub fn all_nonsplit() -> Vec<SourceFamily> {
        vec![
            SourceFamily::RandomNonsplit { density: 0.0 },
            SourceFamily::RandomNonsplit { density: 0.3 },
            SourceFamily::StarRotating,
            SourceFamily::Omission,
            SourceFamily::CrashRounds,
        ]
    }

    pub fn instantiate(
        self,
        n: usize,
        model: NetworkModel,
        seed: u64,
        rng: &mut impl Rng,
    ) -> Result<GraphSource, NetError> {
        let kind = match self {
            SourceFamily::RandomNonsplit { density } => SourceKind::RandomNonsplit { density },
            SourceFamily::StarRotating => SourceKind::StarRotating,
            SourceFamily::Omission => {
                let max = match model {
                    NetworkModel::Nonsplit => n - 1,
                    _ => (2 * n).saturating_sub(3).max(n - 1),
                };
                SourceKind::Omission { t: rng.gen_range(0..=max) }
            }
            SourceFamily::CrashRounds => SourceKind::CrashRounds { f: rng.gen_range(0..=(n - 1) / 2) },
            SourceFamily::RootedChain { density } => SourceKind::RootedChain { density },
        };
        GraphSource::new(n, kind, model, seed)
    }
}

/// Scenario template for [`fuzz`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuzzTemplate {
    pub algorithm: AlgorithmKind,
    pub n_choices: Vec<usize>,
    pub d_choices: Vec<usize>,
    pub families: Vec<SourceFamily>,
    pub model: NetworkModel,
    pub init_lo: f64,
    pub init_hi: f64,
    pub epsilon: f64,
    /// Rounds per trial; defaults to the round bound plus two.
    pub max_rounds: Option<usize>,
    /// Cap on the default horizon.
    pub horizon_cap: usize,
    pub adversary_candidates: usize,
    /// Fraction of trials whose initial values sit on box corners.
    pub corner_fraction: f64,
    pub root_seed: u64,
    pub check_invariants: bool,
    pub keep_traces: bool,
}

impl FuzzTemplate {
    pub fn new(algorithm: AlgorithmKind, n_choices: Vec<usize>, d_choices: Vec<usize>) -> Self {
        FuzzTemplate {
            algorithm,
            n_choices,
            d_choices,
            families: SourceFamily::all_nonsplit(),
            model: NetworkModel::Nonsplit,
            init_lo: -1.0,
            init_hi: 1.0,
            epsilon: 1e-3,
            max_rounds: None,
            horizon_cap: 2000,
            adversary_candidates: 1,
            corner_fraction: 0.25,
            root_seed: 0,
            check_invariants: true,
            keep_traces: false,
        }
    }

    /// The scenario of trial `index`.
    pub fn scenario(&self, index: usize) -> Result<Scenario, ScenarioError> {
        let trial_seed = seed::split(self.root_seed, index as u64);
        let mut rng = seed::rng(trial_seed);
        let n = *self.n_choices.choose(&mut rng).ok_or(ScenarioError::EmptyScenario { n: 0, d: 0 })?;
        let d = *self.d_choices.choose(&mut rng).ok_or(ScenarioError::EmptyScenario { n, d: 0 })?;
        let family = *self
            .families
            .choose(&mut rng)
            .ok_or(NetError::InvalidParameters("no source families".into()))?;
        let source = family.instantiate(n, self.model, seed::mix(&[trial_seed, 0x9a]), &mut rng)?;
        let (lo, hi) = (self.init_lo, self.init_hi);
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ScenarioError::BadBox { lo, hi });
        }
        let corners = rng.gen_bool(self.corner_fraction.clamp(0.0, 1.0));
        let values: Vec<Point> = (0..n)
            .map(|_| {
                Point::from_raw(
                    (0..d)
                        .map(|_| {
                            if corners {
                                if rng.gen_bool(0.5) { hi } else { lo }
                            } else {
                                lo + (hi - lo) * rng.gen::<f64>()
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        let delta_bound = (hi - lo) * (d as f64).sqrt();
        let mut scenario = Scenario::new(self.algorithm, source, values);
        scenario.d = d;
        scenario.epsilon = self.epsilon;
        scenario.delta_bound = Some(delta_bound);
        scenario.seed = trial_seed;
        scenario.trial = index;
        scenario.check_invariants = self.check_invariants;
        scenario.adversary_candidates = self.adversary_candidates;
        scenario.max_rounds = match self.max_rounds {
            Some(r) => r,
            None if scenario.rate_is_guaranteed() => {
                let bound = algorithms::required_rounds(delta_bound, self.epsilon, &self.algorithm, d, n)?;
                (bound + 2).min(self.horizon_cap).max(1)
            }
            None => self.horizon_cap.clamp(1, 100),
        };
        Ok(scenario)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FuzzSummary {
    pub trials: usize,
    pub rounds: usize,
    pub defined_rates: usize,
    pub max_rate: Option<f64>,
    pub max_rate_bound: Option<f64>,
    pub max_rate_trial: Option<usize>,
    pub max_rate_seed: Option<u64>,
    /// Largest observed `rate / rate_bound`.
    pub max_rate_ratio: Option<f64>,
    pub max_convergence_time: Option<usize>,
    pub violations: Vec<Violation>,
}

impl FuzzSummary {
    pub fn violation_count(&self) -> usize {
        self.violations.len()
    }

    /// Summary of already-run traces, reduced in iteration order.
    pub fn from_traces<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> Self {
        let mut summary = FuzzSummary::default();
        for trace in traces {
            summary.absorb(trace);
        }
        summary
    }

    pub(crate) fn absorb(&mut self, trace: &Trace) {
        self.trials += 1;
        self.rounds += trace.rows.len().saturating_sub(1);
        for row in &trace.rows {
            if let Some(rate) = row.rate {
                self.defined_rates += 1;
                if self.max_rate.is_none_or(|m| rate > m) {
                    self.max_rate = Some(rate);
                    self.max_rate_bound = Some(row.rate_bound);
                    self.max_rate_trial = Some(trace.trial);
                    self.max_rate_seed = Some(trace.seed);
                }
                let ratio = rate / row.rate_bound;
                if self.max_rate_ratio.is_none_or(|m| ratio > m) {
                    self.max_rate_ratio = Some(ratio);
                }
            }
        }
        if let Some(t) = trace.convergence_time {
            self.max_convergence_time = Some(self.max_convergence_time.map_or(t, |m| m.max(t)));
        }
        self.violations.extend(trace.violations.iter().cloned());
    }
}

#[derive(Debug, Clone)]
pub struct FuzzOutcome {
    pub summary: FuzzSummary,
    /// Per-trial traces in trial order, when the template keeps them.
    pub traces: Option<Vec<Trace>>,
    /// Replayable scenarios of the trials that produced violations.
    pub failing_scenarios: Vec<Scenario>,
}

/// Runs `trials` seeded trials of `template`.
pub fn fuzz(template: &FuzzTemplate, trials: usize, exec: Execution) -> Result<FuzzOutcome, ScenarioError> {
    let results = parallel::map_indexed(trials, exec, |k| {
        let scenario = template.scenario(k)?;
        let trace = run(&scenario)?;
        Ok::<_, ScenarioError>((scenario, trace))
    });
    let mut summary = FuzzSummary::default();
    let mut traces = template.keep_traces.then(Vec::new);
    let mut failing = Vec::new();
    for result in results {
        let (scenario, trace) = result?;
        summary.absorb(&trace);
        if !trace.violations.is_empty() {
            failing.push(scenario);
        }
        if let Some(ts) = traces.as_mut() {
            ts.push(trace);
        }
    }
    Ok(FuzzOutcome {
        summary,
        traces,
        failing_scenarios: failing,
    })
}
