//! Asymptotic and approximate consensus in dynamic networks with
//! multidimensional values.
//!
//! The crate implements the MidExtremes and ApproachExtreme update rules,
//! the network models they run in (non-split, rooted, omission and crash
//! rounds), a deterministic executor with convergence-rate tracking, and a
//! safe-area layer for Byzantine agents in one and two dimensions.

pub mod algorithms;
pub mod byzantine;
pub mod engine;
pub mod geometry;
pub mod netmodel;
pub mod parallel;
pub mod report;
pub mod seed;

pub use algorithms::{AgentState, AlgorithmKind, UpdateRule};
pub use engine::{run, Scenario, Trace};
pub use geometry::Point;
pub use netmodel::{CommGraph, GraphSource, NetworkModel, SourceKind};
pub use parallel::Execution;
