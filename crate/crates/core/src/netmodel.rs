//! Communication graphs, network-model predicates, and adversary graph
//! sources.
//!
//! Edge `(i, j)` means agent `j` receives agent `i`'s broadcast. Every graph
//! carries all self-loops.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("graph has no agents")]
    Empty,
    #[error("node {node} is missing its self-loop")]
    MissingSelfLoop { node: usize },
    #[error("graph size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("edge ({from}, {to}) out of range for n = {n}")]
    EdgeOutOfRange { from: usize, to: usize, n: usize },
    #[error("invalid graph source parameters: {0}")]
    InvalidParameters(String),
    #[error("round numbers start at 1")]
    RoundZero,
    #[error("round {round}: graph is not {model}")]
    ModelViolation { round: usize, model: NetworkModel },
    #[error("malformed graph file: {0}")]
    Parse(String),
}

/// Directed communication graph of one round.
#[derive(Clone, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    adj: Vec<bool>,
}

impl CommGraph {
    /// Graph with only self-loops.
    pub fn self_loops(n: usize) -> Self {
        assert!(n > 0, "graph needs at least one agent");
        let mut adj = vec![false; n * n];
        for i in 0..n {
            adj[i * n + i] = true;
        }
        CommGraph { n, adj }
    }

    pub fn complete(n: usize) -> Self {
        assert!(n > 0, "graph needs at least one agent");
        CommGraph {
            n,
            adj: vec![true; n * n],
        }
    }

    /// Builds a graph from directed edges; self-loops are added.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, NetError> {
        if n == 0 {
            return Err(NetError::Empty);
        }
        let mut g = CommGraph::self_loops(n);
        for &(from, to) in edges {
            if from >= n || to >= n {
                return Err(NetError::EdgeOutOfRange { from, to, n });
            }
            g.adj[from * n + to] = true;
        }
        Ok(g)
    }

    /// Raw adjacency matrix, `rows[i][j]` for edge `(i, j)`. Self-loops are
    /// not added, so the result may be malformed.
    pub fn from_matrix(rows: &[Vec<bool>]) -> Result<Self, NetError> {
        let n = rows.len();
        if n == 0 {
            return Err(NetError::Empty);
        }
        let mut adj = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(NetError::SizeMismatch { left: n, right: row.len() });
            }
            adj.extend_from_slice(row);
        }
        Ok(CommGraph { n, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adj[from * self.n + to]
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        self.adj[from * self.n + to] = true;
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) {
        self.adj[from * self.n + to] = false;
    }

    /// Agents `j` with edge `(j, i)`, ascending.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has_edge(j, i))
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_neighbors(i).count()
    }

    /// Non-self edges in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), NetError> {
        match (0..self.n).find(|&i| !self.has_edge(i, i)) {
            Some(node) => Err(NetError::MissingSelfLoop { node }),
            None => Ok(()),
        }
    }

    fn reach_from(&self, root: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            for v in 0..self.n {
                if !seen[v] && self.has_edge(u, v) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

impl fmt::Debug for CommGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CommGraph(n={}, edges={:?})", self.n, self.edges())
    }
}

/// Every pair of agents has a common in-neighbor.
pub fn is_nonsplit(g: &CommGraph) -> Result<bool, NetError> {
    g.validate()?;
    let n = g.n;
    for i in 0..n {
        for j in (i + 1)..n {
            if !(0..n).any(|k| g.has_edge(k, i) && g.has_edge(k, j)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Some agent reaches every agent along directed paths.
pub fn is_rooted(g: &CommGraph) -> Result<bool, NetError> {
    g.validate()?;
    Ok((0..g.n).any(|r| g.reach_from(r).into_iter().all(|s| s)))
}

/// Relational composition: `(i, k)` iff `(i, j)` in `g1` and `(j, k)` in `g2`
/// for some `j`.
pub fn compose(g1: &CommGraph, g2: &CommGraph) -> Result<CommGraph, NetError> {
    if g1.n != g2.n {
        return Err(NetError::SizeMismatch { left: g1.n, right: g2.n });
    }
    let n = g1.n;
    let mut adj = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if g1.has_edge(i, j) {
                for k in 0..n {
                    if g2.has_edge(j, k) {
                        adj[i * n + k] = true;
                    }
                }
            }
        }
    }
    Ok(CommGraph { n, adj })
}

/// Left fold of [`compose`] over a nonempty window.
pub fn cumulative(graphs: &[CommGraph]) -> Result<CommGraph, NetError> {
    let (first, rest) = graphs.split_first().ok_or(NetError::Empty)?;
    rest.iter().try_fold(first.clone(), |acc, g| compose(&acc, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkModel {
    Nonsplit,
    Rooted,
    Unrestricted,
}

impl NetworkModel {
    pub fn admits(self, g: &CommGraph) -> Result<bool, NetError> {
        match self {
            NetworkModel::Nonsplit => is_nonsplit(g),
            NetworkModel::Rooted => is_rooted(g),
            NetworkModel::Unrestricted => g.validate().map(|_| true),
        }
    }
}

impl fmt::Display for NetworkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkModel::Nonsplit => "nonsplit",
            NetworkModel::Rooted => "rooted",
            NetworkModel::Unrestricted => "unrestricted",
        })
    }
}

/// User-supplied round-to-graph function.
#[derive(Clone)]
pub struct CustomScript(pub Arc<dyn Fn(usize) -> CommGraph + Send + Sync>);

impl fmt::Debug for CustomScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomScript(..)")
    }
}

#[derive(Debug, Clone)]
pub enum SourceKind {
    /// Cycles through the given graphs.
    FixedSequence(Vec<CommGraph>),
    /// Random edges at `density`, repaired until non-split.
    RandomNonsplit { density: f64 },
    /// Center `(round - 1) mod n` broadcasts to everyone.
    StarRotating,
    /// Complete graph minus `t` seeded-random non-self edges.
    Omission { t: usize },
    /// Every agent hears exactly `n - f` agents including itself.
    CrashRounds { f: usize },
    /// Random spanning out-tree plus extra edges at `density`.
    RootedChain { density: f64 },
    CustomScript(CustomScript),
}

impl SourceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SourceKind::FixedSequence(_) => "fixed_sequence",
            SourceKind::RandomNonsplit { .. } => "random_nonsplit",
            SourceKind::StarRotating => "star_rotating",
            SourceKind::Omission { .. } => "omission",
            SourceKind::CrashRounds { .. } => "crash_rounds",
            SourceKind::RootedChain { .. } => "rooted_chain",
            SourceKind::CustomScript(_) => "custom_script",
        }
    }

    fn is_randomized(&self) -> bool {
        matches!(
            self,
            SourceKind::RandomNonsplit { .. }
                | SourceKind::Omission { .. }
                | SourceKind::CrashRounds { .. }
                | SourceKind::RootedChain { .. }
        )
    }
}

/// Adversary strategy emitting one graph per round.
///
/// Graphs are a pure function of `(kind, n, seed, round)`, so a source can be
/// shared freely and replayed.
#[derive(Debug, Clone)]
pub struct GraphSource {
    n: usize,
    kind: SourceKind,
    declared_model: NetworkModel,
    seed: u64,
}

fn invalid(msg: impl Into<String>) -> NetError {
    NetError::InvalidParameters(msg.into())
}

impl GraphSource {
    pub fn new(
        n: usize,
        kind: SourceKind,
        declared_model: NetworkModel,
        seed: u64,
    ) -> Result<Self, NetError> {
        if n == 0 {
            return Err(NetError::Empty);
        }
        match &kind {
            SourceKind::FixedSequence(graphs) => {
                if graphs.is_empty() {
                    return Err(invalid("fixed_sequence needs at least one graph"));
                }
                if let Some(g) = graphs.iter().find(|g| g.n() != n) {
                    return Err(NetError::SizeMismatch { left: n, right: g.n() });
                }
            }
            SourceKind::RandomNonsplit { density } | SourceKind::RootedChain { density } => {
                if !(0.0..=1.0).contains(density) {
                    return Err(invalid(format!("edge density {density} outside [0, 1]")));
                }
                if matches!(kind, SourceKind::RootedChain { .. })
                    && declared_model == NetworkModel::Nonsplit
                    && n > 2
                {
                    return Err(invalid(
                        "rooted_chain graphs are only guaranteed rooted, not non-split",
                    ));
                }
            }
            SourceKind::StarRotating | SourceKind::CustomScript(_) => {}
            SourceKind::Omission { t } => {
                let t = *t;
                match declared_model {
                    NetworkModel::Nonsplit if t > n - 1 => {
                        return Err(invalid(format!(
                            "omission budget t = {t} exceeds n - 1 = {}; non-split is only guaranteed for t <= n - 1",
                            n - 1
                        )))
                    }
                    NetworkModel::Rooted if n >= 2 && t > 2 * n - 3 => {
                        return Err(invalid(format!(
                            "omission budget t = {t} exceeds 2n - 3 = {}; rootedness is only guaranteed for t <= 2n - 3",
                            2 * n - 3
                        )))
                    }
                    _ => {}
                }
            }
            SourceKind::CrashRounds { f } => {
                let f = *f;
                if f >= n {
                    return Err(invalid(format!("crash bound f = {f} must be below n = {n}")));
                }
                if declared_model != NetworkModel::Unrestricted && 2 * f >= n {
                    return Err(invalid(format!(
                        "crash bound f = {f} is not below n/2 = {}; rounds of n - f messages are only non-split for f < n/2",
                        n as f64 / 2.0
                    )));
                }
            }
        }
        Ok(GraphSource {
            n,
            kind,
            declared_model,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    pub fn declared_model(&self) -> NetworkModel {
        self.declared_model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same source with a different seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        GraphSource {
            seed,
            ..self.clone()
        }
    }

    /// Whether candidates other than `k = 0` differ from the round's graph.
    pub fn is_randomized(&self) -> bool {
        self.kind.is_randomized()
    }

    /// The round's graph, validated against the declared model.
    pub fn next_graph(&self, round: usize) -> Result<CommGraph, NetError> {
        self.candidate_graph(round, 0)
    }

    /// Alternative graph `k` for a round (`k = 0` is [`Self::next_graph`]).
    /// Only randomized kinds produce distinct candidates.
    pub fn candidate_graph(&self, round: usize, k: u64) -> Result<CommGraph, NetError> {
        let g = self.raw_graph(round, k)?;
        if !self.declared_model.admits(&g)? {
            return Err(NetError::ModelViolation {
                round,
                model: self.declared_model,
            });
        }
        Ok(g)
    }

    /// Unvalidated graph for `round`.
    pub fn raw_graph(&self, round: usize, k: u64) -> Result<CommGraph, NetError> {
        if round == 0 {
            return Err(NetError::RoundZero);
        }
        let n = self.n;
        let mut rng = seed::rng(seed::mix(&[self.seed, round as u64, k]));
        let g = match &self.kind {
            SourceKind::FixedSequence(graphs) => graphs[(round - 1) % graphs.len()].clone(),
            SourceKind::StarRotating => {
                let center = (round - 1) % n;
                let mut g = CommGraph::self_loops(n);
                for j in 0..n {
                    g.add_edge(center, j);
                }
                g
            }
            SourceKind::RandomNonsplit { density } => random_nonsplit(n, *density, &mut rng),
            SourceKind::Omission { t } => {
                let mut g = CommGraph::complete(n);
                let all = g.edges();
                for &(i, j) in all.choose_multiple(&mut rng, (*t).min(all.len())) {
                    g.remove_edge(i, j);
                }
                g
            }
            SourceKind::CrashRounds { f } => {
                let mut g = CommGraph::self_loops(n);
                for i in 0..n {
                    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                    for &j in others.choose_multiple(&mut rng, n - f - 1) {
                        g.add_edge(j, i);
                    }
                }
                g
            }
            SourceKind::RootedChain { density } => random_rooted(n, *density, &mut rng),
            SourceKind::CustomScript(script) => {
                let g = (script.0)(round);
                if g.n() != n {
                    return Err(NetError::SizeMismatch { left: n, right: g.n() });
                }
                g
            }
        };
        Ok(g)
    }
}

fn random_extra_edges(g: &mut CommGraph, density: f64, rng: &mut impl Rng) {
    let n = g.n();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                g.add_edge(i, j);
            }
        }
    }
}

fn random_nonsplit(n: usize, density: f64, rng: &mut impl Rng) -> CommGraph {
    let mut g = CommGraph::self_loops(n);
    random_extra_edges(&mut g, density, rng);
    for i in 0..n {
        for j in (i + 1)..n {
            if !(0..n).any(|k| g.has_edge(k, i) && g.has_edge(k, j)) {
                let k = rng.gen_range(0..n);
                g.add_edge(k, i);
                g.add_edge(k, j);
            }
        }
    }
    g
}

fn random_rooted(n: usize, density: f64, rng: &mut impl Rng) -> CommGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut g = CommGraph::self_loops(n);
    for idx in 1..n {
        let parent = order[rng.gen_range(0..idx)];
        g.add_edge(parent, order[idx]);
    }
    random_extra_edges(&mut g, density, rng);
    g
}

/// On-disk form of a fixed graph sequence: 0-based directed edges per round,
/// self-loops implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub rounds: Vec<Vec<(usize, usize)>>,
}

impl GraphFile {
    pub fn parse(text: &str) -> Result<Self, NetError> {
        serde_json::from_str(text).map_err(|e| NetError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NetError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn graphs(&self) -> Result<Vec<CommGraph>, NetError> {
        if self.rounds.is_empty() {
            return Err(NetError::Parse("no rounds".into()));
        }
        self.rounds
            .iter()
            .map(|edges| CommGraph::from_edges(self.n, edges))
            .collect()
    }

    pub fn from_graphs(graphs: &[CommGraph]) -> Self {
        GraphFile {
            n: graphs.first().map_or(0, CommGraph::n),
            rounds: graphs.iter().map(CommGraph::edges).collect(),
        }
    }
}

/// First failing round (1-based) of a graph sequence against a claimed model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelCounterexample {
    /// A single round's graph is outside the model.
    Round(usize),
    /// The cumulative graph of rounds `start..start + len` is not non-split.
    Window { start: usize, len: usize },
}

impl fmt::Display for ModelCounterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelCounterexample::Round(r) => write!(f, "round {r}"),
            ModelCounterexample::Window { start, len } => {
                write!(f, "window of rounds {start}..={}", start + len - 1)
            }
        }
    }
}

/// Checks every graph against `model`; for rooted claims also checks that
/// every window of `n - 1` consecutive rounds composes to a non-split graph.
pub fn verify_sequence(
    graphs: &[CommGraph],
    model: NetworkModel,
) -> Result<Option<ModelCounterexample>, NetError> {
    for (k, g) in graphs.iter().enumerate() {
        if !model.admits(g)? {
            return Ok(Some(ModelCounterexample::Round(k + 1)));
        }
    }
    if model == NetworkModel::Rooted {
        if let Some(n) = graphs.first().map(CommGraph::n) {
            let len = n.saturating_sub(1).max(1);
            for start in 0..graphs.len().saturating_sub(len - 1) {
                if !is_nonsplit(&cumulative(&graphs[start..start + len])?)? {
                    return Ok(Some(ModelCounterexample::Window { start: start + 1, len }));
                }
            }
        }
    }
    Ok(None)
}
