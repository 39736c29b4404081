//! Scenario configuration files and `--set` overrides.
//!
//! A config is one JSON document with the stanzas `scenario`,
//! `graph_source`, `algorithm`, and optionally `byzantine`, `sweep` and
//! `fuzz`. Every field has a default, so `{}` is a valid config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use extremes::byzantine::ByzAdversary;
use extremes::engine::{InitialValues, SourceFamily};
use extremes::{Execution, NetworkModel, Point, UpdateRule};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root seed; trial `k` runs under `seed::split(seed, k)`.
    pub seed: u64,
    pub trials: usize,
    pub execution: Execution,
    pub scenario: ScenarioConfig,
    pub graph_source: GraphSourceConfig,
    pub algorithm: AlgorithmConfig,
    pub byzantine: Option<ByzantineConfig>,
    pub sweep: Option<SweepConfig>,
    pub fuzz: FuzzConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            trials: 1,
            execution: Execution::Parallel,
            scenario: ScenarioConfig::default(),
            graph_source: GraphSourceConfig::default(),
            algorithm: AlgorithmConfig::default(),
            byzantine: None,
            sweep: None,
            fuzz: FuzzConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Total number of agents (Byzantine ones included).
    pub n: usize,
    pub d: usize,
    pub initial_values: InitialValuesConfig,
    pub epsilon: f64,
    pub delta_bound: Option<f64>,
    /// Defaults to the round bound plus two when the bound is guaranteed,
    /// 100 otherwise.
    pub max_rounds: Option<usize>,
    pub check_invariants: bool,
    pub adversary_candidates: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 4,
            d: 1,
            initial_values: InitialValuesConfig::default(),
            epsilon: 1e-6,
            delta_bound: None,
            max_rounds: None,
            check_invariants: true,
            adversary_candidates: 1,
        }
    }
}

/// Either one coordinate list per agent or a box to sample from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialValuesConfig {
    Explicit(Vec<Vec<f64>>),
    UniformBox { lo: f64, hi: f64 },
}

impl Default for InitialValuesConfig {
    fn default() -> Self {
        InitialValuesConfig::UniformBox { lo: -1.0, hi: 1.0 }
    }
}

impl InitialValuesConfig {
    pub fn to_core(&self) -> Result<InitialValues, CliError> {
        Ok(match self {
            InitialValuesConfig::Explicit(rows) => InitialValues::Explicit(
                rows.iter()
                    .enumerate()
                    .map(|(i, c)| {
                        Point::new(c.clone())
                            .map_err(|e| CliError::Invalid(format!("scenario.initial_values[{i}]: {e}")))
                    })
                    .collect::<Result<_, _>>()?,
            ),
            &InitialValuesConfig::UniformBox { lo, hi } => InitialValues::UniformBox { lo, hi },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    /// Graphs from `file` or inline `rounds`, cycled.
    FixedSequence,
    Complete,
    /// Fixed star whose `center` broadcasts to everyone.
    Star,
    StarRotating,
    RandomNonsplit,
    Omission,
    CrashRounds,
    RootedChain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSourceConfig {
    pub kind: GraphKind,
    /// The model the source claims; every emitted graph is checked.
    pub model: NetworkModel,
    pub density: f64,
    /// Omission budget.
    pub t: usize,
    /// Crash bound.
    pub f: usize,
    pub center: usize,
    /// Graph file, relative to the config file's directory.
    pub file: Option<PathBuf>,
    /// Inline 0-based edge lists, one per round.
    pub rounds: Option<Vec<Vec<(usize, usize)>>>,
}

impl Default for GraphSourceConfig {
    fn default() -> Self {
        GraphSourceConfig {
            kind: GraphKind::RandomNonsplit,
            model: NetworkModel::Nonsplit,
            density: 0.3,
            t: 0,
            f: 0,
            center: 0,
            file: None,
            rounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub rule: UpdateRule,
    pub amortized: bool,
    pub decide_after: Option<usize>,
    /// Decide at the round bound when `decide_after` is not given.
    pub decide: bool,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            rule: UpdateRule::MidExtremes,
            amortized: false,
            decide_after: None,
            decide: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ByzantineConfig {
    pub f: usize,
    pub adversary: ByzAdversary,
    /// Defaults to the decision round.
    pub rounds: Option<usize>,
}

impl Default for ByzantineConfig {
    fn default() -> Self {
        ByzantineConfig {
            f: 1,
            adversary: ByzAdversary::Outlier { point: None },
            rounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepModel {
    Nonsplit,
    Rooted,
    Unrestricted,
    Byzantine,
}

/// Grid axes; an absent axis takes the single value from the other
/// stanzas, an empty one makes the grid empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n: Option<Vec<usize>>,
    pub d: Option<Vec<usize>>,
    pub algorithm: Option<Vec<UpdateRule>>,
    pub model: Option<Vec<SweepModel>>,
    pub epsilon: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzConfig {
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub families: Vec<SourceFamily>,
    pub corner_fraction: f64,
    pub horizon_cap: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            n: (2..=10).collect(),
            d: vec![1, 2, 3, 8],
            families: SourceFamily::all_nonsplit(),
            corner_fraction: 0.25,
            horizon_cap: 2000,
        }
    }
}

impl Config {
    /// Every key an override may name, as a JSON tree of defaults with the
    /// optional stanzas filled in. Null marks a node whose inner keys are
    /// checked against the document instead.
    pub fn schema() -> Value {
        let full = Config {
            byzantine: Some(ByzantineConfig::default()),
            sweep: Some(SweepConfig::default()),
            ..Config::default()
        };
        let mut schema = serde_json::to_value(full).expect("config serializes");
        // the adversary's fields depend on the variant the document picks
        schema["byzantine"]["adversary"] = Value::Null;
        schema
    }

    /// Reads `path` (or starts from `{}`), applies `overrides` in order and
    /// deserializes. Relative graph-file paths are resolved against the
    /// config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| CliError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Map::new()),
        };
        let schema = Config::schema();
        for item in overrides {
            apply_override(&mut doc, &schema, item)?;
        }
        let mut cfg: Config = serde_json::from_value(doc).map_err(|e| CliError::Parse(e.to_string()))?;
        if let (Some(file), Some(dir)) = (cfg.graph_source.file.as_mut(), path.and_then(Path::parent)) {
            if file.is_relative() {
                *file = dir.join(&*file);
            }
        }
        Ok(cfg)
    }
}

/// Applies one `key=value` override with a dotted key. The value is parsed
/// as JSON when possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, schema: &Value, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Override(format!("`{item}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(CliError::Override(format!("empty segment in key `{key}`")));
    }
    check_schema_path(schema, doc, &path).map_err(|_| CliError::UnknownKey(key.to_string()))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));

    let mut node = doc;
    for seg in &path[..path.len() - 1] {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        node = node
            .as_object_mut()
            .expect("just made an object")
            .entry(seg.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    if !node.is_object() {
        *node = Value::Object(Map::new());
    }
    node.as_object_mut()
        .expect("just made an object")
        .insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

/// Keys must exist in the schema while the schema has structure there.
/// Below a schema leaf (an optional value, or a tagged enum such as the
/// Byzantine adversary) the path must exist in the document itself, except
/// that a new last key may be added to an existing object.
fn check_schema_path(schema: &Value, doc: &Value, path: &[&str]) -> Result<(), ()> {
    let Some((head, rest)) = path.split_first() else {
        return Ok(());
    };
    let doc_child = doc.get(head).unwrap_or(&Value::Null);
    match schema {
        Value::Object(map) => match map.get(*head) {
            Some(child) if child.is_object() || rest.is_empty() => check_schema_path(child, doc_child, rest),
            Some(_) => check_doc_path(doc_child, rest),
            None => Err(()),
        },
        _ => check_doc_path(doc, path),
    }
}

fn check_doc_path(doc: &Value, path: &[&str]) -> Result<(), ()> {
    match path.split_first() {
        None => Ok(()),
        Some((head, rest)) => match doc.get(head) {
            Some(child) => check_doc_path(child, rest),
            None if rest.is_empty() && doc.is_object() => Ok(()),
            None => Err(()),
        },
    }
}
