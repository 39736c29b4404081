//! Byzantine rounds, abstracted to their collection postcondition.
//!
//! Each round the adversary hands every correct agent a multiset of
//! `(source, value)` entries. Entries from correct sources carry true values,
//! Byzantine sources may report anything (and differently per owner), and
//! any two owners share at least `n - f` identical entries. Each correct
//! agent then moves to the midpoint of a diameter pair of its safe area.

pub mod safe_area;

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{self, AlgorithmError, AlgorithmKind, UpdateRule};
use crate::engine::{
    FuzzSummary, InitialValues, MetricsRow, ScenarioError, Trace, Violation, ViolationKind, RATE_SLACK,
};
use crate::geometry::{self, BoundingBox, Point};
use crate::parallel::{self, Execution};
use crate::seed;

pub use safe_area::{
    byz_update, convex_hull, safe_area, safe_area_1d, safe_area_2d, SafeAreaError, SafeRegion, Vec2,
    CLIP_TOLERANCE, MAX_SUBSET_SOURCE,
};

pub const ALGORITHM_LABEL: &str = "byzantine_mid_extremes";
pub const MODEL_LABEL: &str = "byzantine";

/// Per-round contraction factor of the safe-area update, in one and two
/// dimensions.
pub fn contraction_bound() -> f64 {
    UpdateRule::MidExtremes.rate_bound(2)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ByzError {
    #[error("n = {n} agents cannot tolerate f = {f} Byzantine agents in d = {d} (need n > (d + 2) f)")]
    Unsolvable { n: usize, f: usize, d: usize },
    #[error(transparent)]
    SafeArea(#[from] SafeAreaError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
}

/// What the Byzantine agents do each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ByzAdversary {
    /// Every Byzantine agent reports `point` (all coordinates 100 when
    /// absent) to every owner; collections are complete.
    Outlier {
        #[serde(default)]
        point: Option<Vec<f64>>,
    },
    /// Each Byzantine agent reports an independent random value to each
    /// owner, up to `spread` times the current diameter away from the
    /// correct values; collections are complete.
    Equivocate { spread: f64 },
    /// A random core of `n - f` sources is delivered to everyone with one
    /// value per source; every other source reaches each owner with
    /// probability one half, Byzantine ones with per-owner values.
    Withhold { spread: f64 },
}

impl ByzAdversary {
    pub fn name(&self) -> &'static str {
        match self {
            ByzAdversary::Outlier { .. } => "outlier",
            ByzAdversary::Equivocate { .. } => "equivocate",
            ByzAdversary::Withhold { .. } => "withhold",
        }
    }

    /// All three strategies with the default parameters.
    pub fn all() -> Vec<ByzAdversary> {
        vec![
            ByzAdversary::Outlier { point: None },
            ByzAdversary::Equivocate { spread: 2.0 },
            ByzAdversary::Withhold { spread: 2.0 },
        ]
    }
}

/// The entries one correct agent collected in a round.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectionMultiset {
    pub owner: usize,
    /// `(source, value)` pairs with distinct sources.
    pub entries: Vec<(usize, Point)>,
}

impl CollectionMultiset {
    pub fn values(&self) -> Vec<Point> {
        self.entries.iter().map(|(_, p)| p.clone()).collect()
    }
}

fn shared_entries(a: &CollectionMultiset, b: &CollectionMultiset) -> usize {
    a.entries
        .iter()
        .filter(|(s, p)| b.entries.iter().any(|(t, q)| s == t && p.bit_eq(q)))
        .count()
}

/// Whether every multiset has at least `n - f` entries from distinct sources
/// below `n` and every pair shares at least `n - f` identical entries.
pub fn validate_collections(collections: &[CollectionMultiset], n: usize, f: usize) -> bool {
    let need = n.saturating_sub(f);
    let well_formed = collections.iter().all(|c| {
        let sources: BTreeSet<usize> = c.entries.iter().map(|(s, _)| *s).collect();
        sources.len() == c.entries.len() && c.entries.len() >= need && sources.iter().all(|&s| s < n)
    });
    well_formed
        && collections
            .iter()
            .enumerate()
            .all(|(k, a)| collections[k + 1..].iter().all(|b| shared_entries(a, b) >= need))
}

/// Agents `0..n-f` are correct, `n-f..n` Byzantine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByzScenario {
    pub n: usize,
    pub f: usize,
    pub d: usize,
    pub correct_values: InitialValues,
    pub adversary: ByzAdversary,
    pub epsilon: f64,
    /// Known bound on the initial diameter of the correct values; defaults
    /// as for fault-free scenarios.
    pub delta_bound: Option<f64>,
    pub seed: u64,
    pub trial: usize,
}

impl ByzScenario {
    pub fn new(n: usize, f: usize, correct_values: Vec<Point>, adversary: ByzAdversary) -> Self {
        let d = correct_values.first().map_or(1, Point::dim);
        ByzScenario {
            n,
            f,
            d,
            correct_values: InitialValues::Explicit(correct_values),
            adversary,
            epsilon: 1e-6,
            delta_bound: None,
            seed: 0,
            trial: 0,
        }
    }

    pub fn correct_count(&self) -> usize {
        self.n - self.f
    }

    /// Validated correct values and diameter bound.
    pub fn resolve(&self) -> Result<(Vec<Point>, f64), ByzError> {
        let (n, f, d) = (self.n, self.f, self.d);
        if !(1..=2).contains(&d) {
            return Err(SafeAreaError::UnsupportedDimension(d).into());
        }
        if n <= (d + 2) * f {
            return Err(ByzError::Unsolvable { n, f, d });
        }
        if d == 2 && n > MAX_SUBSET_SOURCE {
            return Err(SafeAreaError::TooManyValues(n).into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ScenarioError::Epsilon(self.epsilon).into());
        }
        let (values, default_bound) = self.correct_values.resolve(n - f, d, self.seed)?;
        let actual = geometry::diameter_value(&values);
        let bound = self.delta_bound.unwrap_or(default_bound);
        if actual > bound {
            return Err(ScenarioError::DeltaBound { actual, bound }.into());
        }
        Ok((values, bound))
    }

    /// `ceil(log_{sqrt(8/7)} delta_bound / epsilon)`.
    pub fn required_rounds(&self) -> Result<usize, ByzError> {
        let (_, bound) = self.resolve()?;
        round_bound(bound, self.epsilon)
    }
}

fn round_bound(delta: f64, epsilon: f64) -> Result<usize, ByzError> {
    if delta <= epsilon {
        return Ok(0);
    }
    // The two-dimensional MidExtremes bound has the same base.
    Ok(algorithms::required_rounds(
        delta,
        epsilon,
        &AlgorithmKind::plain(UpdateRule::MidExtremes),
        2,
        1,
    )?)
}

fn random_point(rng: &mut impl Rng, center: &[f64], radius: f64) -> Point {
    Point::from_raw(center.iter().map(|c| c + radius * rng.gen_range(-1.0..=1.0)).collect())
}

/// The collections handed to the correct agents in one round.
pub fn adversary_collections(
    adversary: &ByzAdversary,
    n: usize,
    f: usize,
    correct: &[Point],
    rng: &mut impl Rng,
) -> Vec<CollectionMultiset> {
    let c = n - f;
    let d = correct.first().map_or(1, Point::dim);
    let center: Vec<f64> = match BoundingBox::of(correct) {
        Ok(b) => b.lo.iter().zip(&b.hi).map(|(l, h)| 0.5 * (l + h)).collect(),
        Err(_) => vec![0.0; d],
    };
    let radius = |spread: f64| spread * geometry::diameter_value(correct).max(1.0);
    let full = |byz: &dyn Fn(usize, usize) -> Point| -> Vec<CollectionMultiset> {
        (0..c)
            .map(|owner| CollectionMultiset {
                owner,
                entries: (0..n)
                    .map(|s| (s, if s < c { correct[s].clone() } else { byz(owner, s) }))
                    .collect(),
            })
            .collect()
    };
    match adversary {
        ByzAdversary::Outlier { point } => {
            let v = Point::from_raw(point.clone().unwrap_or_else(|| vec![100.0; d]));
            full(&|_, _| v.clone())
        }
        ByzAdversary::Equivocate { spread } => {
            let r = radius(*spread);
            let table: Vec<Vec<Point>> = (0..c)
                .map(|_| (0..f).map(|_| random_point(rng, &center, r)).collect())
                .collect();
            full(&|owner, s| table[owner][s - c].clone())
        }
        ByzAdversary::Withhold { spread } => {
            let r = radius(*spread);
            let mut core: Vec<usize> = index::sample(rng, n, c).into_vec();
            core.sort_unstable();
            let core_byz: Vec<Point> = (0..f).map(|_| random_point(rng, &center, r)).collect();
            (0..c)
                .map(|owner| {
                    let mut entries = Vec::new();
                    for s in 0..n {
                        let in_core = core.binary_search(&s).is_ok();
                        if !in_core && !rng.gen_bool(0.5) {
                            continue;
                        }
                        let value = match (s < c, in_core) {
                            (true, _) => correct[s].clone(),
                            (false, true) => core_byz[s - c].clone(),
                            (false, false) => random_point(rng, &center, r),
                        };
                        entries.push((s, value));
                    }
                    CollectionMultiset { owner, entries }
                })
                .collect()
        }
    }
}

/// Whether entries from correct sources carry the true current values.
fn faithful(collections: &[CollectionMultiset], correct: &[Point]) -> bool {
    collections
        .iter()
        .flat_map(|c| c.entries.iter())
        .all(|(s, p)| *s >= correct.len() || p.bit_eq(&correct[*s]))
}

fn region_scale(values: &[Point]) -> f64 {
    values
        .iter()
        .flat_map(|p| p.coords().iter())
        .fold(1.0f64, |m, c| m.max(c.abs()))
}

/// Smallest previous diameter for which a rate is reported: above it the
/// clipping tolerance cannot move the ratio by more than [`RATE_SLACK`].
fn byz_rate_floor(values: &[Point]) -> f64 {
    let d = values.first().map_or(1, Point::dim);
    if d == 1 {
        crate::engine::rate_floor(values)
    } else {
        4.0 * CLIP_TOLERANCE * region_scale(values) / RATE_SLACK
    }
}

/// Runs `rounds` Byzantine rounds (default: the round bound), with every
/// correct agent deciding its value once the round bound is reached.
///
/// Invalid collections and empty safe areas abort the run with a recorded
/// violation; contraction, safety and pairwise-overlap failures are
/// recorded and the run continues.
pub fn run_byzantine(scn: &ByzScenario, rounds: Option<usize>) -> Result<Trace, ByzError> {
    let (initial, delta_bound) = scn.resolve()?;
    let (n, f) = (scn.n, scn.f);
    let required = round_bound(delta_bound, scn.epsilon)?;
    let horizon = rounds.unwrap_or(required);
    let bound = contraction_bound();

    let mut values = initial.clone();
    let mut decisions: Vec<Option<Point>> = vec![None; values.len()];
    if required == 0 {
        decisions = values.iter().cloned().map(Some).collect();
    }
    let decided = |ds: &[Option<Point>]| ds.iter().filter(|d| d.is_some()).count();
    let mut trace = Trace {
        trial: scn.trial,
        seed: scn.seed,
        algorithm: ALGORITHM_LABEL.to_string(),
        model: MODEL_LABEL.to_string(),
        n,
        d: scn.d,
        epsilon: scn.epsilon,
        delta_bound,
        rate_bound: bound,
        required_rounds: Some(required),
        rows: vec![MetricsRow {
            round: 0,
            diameter: geometry::diameter_value(&values),
            rate: None,
            decided_count: decided(&decisions),
            rate_bound: bound,
        }],
        convergence_time: None,
        horizon_truncated: false,
        initial_values: initial.clone(),
        configurations: Some(vec![initial.clone()]),
        decisions: Vec::new(),
        violations: Vec::new(),
        aborted: false,
    };

    for round in 1..=horizon {
        let mut rng = seed::rng(seed::mix(&[scn.seed, round as u64, 0xb12a]));
        let collections = adversary_collections(&scn.adversary, n, f, &values, &mut rng);
        if !validate_collections(&collections, n, f) || !faithful(&collections, &values) {
            let v = trace.violation(
                ViolationKind::InvalidCollections,
                Some(round),
                format!("adversary {} broke the collection constraints", scn.adversary.name()),
            );
            trace.violations.push(v);
            trace.aborted = true;
            break;
        }
        let regions: Result<Vec<SafeRegion>, SafeAreaError> =
            collections.iter().map(|c| safe_area(&c.values(), f)).collect();
        let regions = match regions {
            Ok(r) => r,
            Err(e) => {
                let v = trace.violation(ViolationKind::EmptySafeArea, Some(round), e.to_string());
                trace.violations.push(v);
                trace.aborted = true;
                break;
            }
        };
        let found = check_regions(&regions, &values);
        for (kind, detail) in found {
            let v = trace.violation(kind, Some(round), detail);
            trace.violations.push(v);
        }

        let next = regions.iter().map(byz_update).collect::<Result<Vec<Point>, _>>()?;
        let prev_diam = trace.rows.last().map_or(0.0, |r| r.diameter);
        let diam = geometry::diameter_value(&next);
        if diam > bound * prev_diam + RATE_SLACK {
            let v = trace.violation(
                ViolationKind::Contraction,
                Some(round),
                format!("diameter {diam} exceeds {bound} * {prev_diam} + {RATE_SLACK}"),
            );
            trace.violations.push(v);
        }
        let rate = (prev_diam > 0.0 && prev_diam > byz_rate_floor(&values)).then(|| diam / prev_diam);
        values = next;
        if round == required {
            for (slot, y) in decisions.iter_mut().zip(&values) {
                slot.get_or_insert_with(|| y.clone());
            }
        }
        trace.rows.push(MetricsRow {
            round,
            diameter: diam,
            rate,
            decided_count: decided(&decisions),
            rate_bound: bound,
        });
        if let Some(configs) = trace.configurations.as_mut() {
            configs.push(values.clone());
        }
    }

    trace.decisions = decisions;
    trace.update_convergence();
    let found = check_byzantine_trace(&trace);
    trace.violations.extend(found);
    Ok(trace)
}

/// Safety (every region lies in the hull of the correct values) and
/// pairwise overlap of the regions of one round.
fn check_regions(regions: &[SafeRegion], correct: &[Point]) -> Vec<(ViolationKind, String)> {
    let mut out = Vec::new();
    let tol = 8.0 * CLIP_TOLERANCE * region_scale(correct);
    let hull = match correct.first().map(Point::dim) {
        Some(1) => {
            let xs: Vec<f64> = correct.iter().map(|p| p.coords()[0]).collect();
            safe_area_1d(&xs, 0).ok()
        }
        Some(2) => {
            let pts: Vec<Vec2> = correct.iter().map(|p| [p.coords()[0], p.coords()[1]]).collect();
            Some(SafeRegion::Polygon(convex_hull(&pts, CLIP_TOLERANCE * region_scale(correct))))
        }
        _ => None,
    };
    for (owner, region) in regions.iter().enumerate() {
        if let Some(hull) = &hull {
            if let Some(v) = region.vertices().into_iter().find(|v| !hull.contains(v, tol)) {
                out.push((
                    ViolationKind::UnsafeRegion,
                    format!("safe area of agent {owner} has vertex {v} outside the correct hull"),
                ));
            }
        }
    }
    for (i, a) in regions.iter().enumerate() {
        for (j, b) in regions.iter().enumerate().skip(i + 1) {
            if !a.overlaps(b, tol) {
                out.push((
                    ViolationKind::DisjointSafeAreas,
                    format!("safe areas of agents {i} and {j} do not intersect"),
                ));
            }
        }
    }
    out
}

/// Post-hoc checks: hull monotonicity, decision agreement and validity, and
/// the round bound. Containment is checked with the clipping tolerance.
pub fn check_byzantine_trace(trace: &Trace) -> Vec<Violation> {
    let mut out = Vec::new();
    let tol = 8.0 * CLIP_TOLERANCE * region_scale(&trace.initial_values);
    if let Some(configs) = &trace.configurations {
        for (t, pair) in configs.windows(2).enumerate() {
            let (Ok(prev), Ok(cur)) = (BoundingBox::of(&pair[0]), BoundingBox::of(&pair[1])) else {
                continue;
            };
            for k in 0..prev.lo.len() {
                if cur.lo[k] < prev.lo[k] - tol || cur.hi[k] > prev.hi[k] + tol {
                    out.push(trace.violation(
                        ViolationKind::BoxMonotonicity,
                        Some(t + 1),
                        format!("coordinate {k} range left [{}, {}]", prev.lo[k], prev.hi[k]),
                    ));
                }
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
            if !initial_box.contains(p, tol) {
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
        if let Some(row) = trace.rows.iter().find(|r| r.round >= bound && r.diameter > tolerance) {
            out.push(trace.violation(
                ViolationKind::ConvergenceBound,
                Some(row.round),
                format!("diameter {} above epsilon {} at or after round {bound}", row.diameter, trace.epsilon),
            ));
        }
    }
    out
}

/// Randomized Byzantine trials: `f` and `d` are drawn per trial, then `n`
/// between the smallest solvable size and `n_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ByzTemplate {
    pub d_choices: Vec<usize>,
    pub f_choices: Vec<usize>,
    pub n_max: usize,
    pub adversaries: Vec<ByzAdversary>,
    pub init_lo: f64,
    pub init_hi: f64,
    pub epsilon: f64,
    /// Rounds per trial; defaults to the round bound.
    pub rounds: Option<usize>,
    pub root_seed: u64,
    pub keep_traces: bool,
}

impl ByzTemplate {
    pub fn new(d_choices: Vec<usize>, f_choices: Vec<usize>) -> Self {
        ByzTemplate {
            d_choices,
            f_choices,
            n_max: MAX_SUBSET_SOURCE,
            adversaries: ByzAdversary::all(),
            init_lo: -1.0,
            init_hi: 1.0,
            epsilon: 1e-3,
            rounds: None,
            root_seed: 0,
            keep_traces: false,
        }
    }

    pub fn scenario(&self, index: usize) -> Result<ByzScenario, ByzError> {
        let trial_seed = seed::split(self.root_seed, index as u64);
        let mut rng = seed::rng(trial_seed);
        let empty = ScenarioError::EmptyScenario { n: 0, d: 0 };
        let d = *self.d_choices.choose(&mut rng).ok_or(empty.clone())?;
        let f = *self.f_choices.choose(&mut rng).ok_or(empty)?;
        let n_min = (d + 2) * f + 1;
        let n = if self.n_max > n_min { rng.gen_range(n_min..=self.n_max) } else { n_min };
        let adversary = self
            .adversaries
            .choose(&mut rng)
            .cloned()
            .unwrap_or(ByzAdversary::Outlier { point: None });
        let (lo, hi) = (self.init_lo, self.init_hi);
        Ok(ByzScenario {
            n,
            f,
            d,
            correct_values: InitialValues::UniformBox { lo, hi },
            adversary,
            epsilon: self.epsilon,
            delta_bound: None,
            seed: trial_seed,
            trial: index,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ByzFuzzOutcome {
    pub summary: FuzzSummary,
    pub traces: Option<Vec<Trace>>,
    pub failing_scenarios: Vec<ByzScenario>,
}

/// Runs `trials` seeded Byzantine trials, reduced in trial order.
pub fn fuzz_byzantine(template: &ByzTemplate, trials: usize, exec: Execution) -> Result<ByzFuzzOutcome, ByzError> {
    let results = parallel::map_indexed(trials, exec, |k| {
        let scenario = template.scenario(k)?;
        let trace = run_byzantine(&scenario, template.rounds)?;
        Ok::<_, ByzError>((scenario, trace))
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
    Ok(ByzFuzzOutcome {
        summary,
        traces,
        failing_scenarios: failing,
    })
}
