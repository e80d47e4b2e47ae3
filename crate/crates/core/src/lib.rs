//! Engine for agentic graph learning: a text-attributed graph store, four
//! graph-native search tools, the reason–act–observe tag protocol, composite
//! rewards, a difficulty curriculum and an interactive rollout environment.
//!
//! Data-parallel work (dense scans, batch scoring, curriculum scoring) runs on
//! rayon when the `parallel` feature is on and sequentially otherwise. Results
//! are identical either way.

pub mod curriculum;
pub mod env;
pub mod graph;
pub mod par;
pub mod protocol;
pub mod retrieval;
pub mod reward;
pub mod synthetic;
pub mod task;
pub mod tools;

pub use env::{Environment, RolloutRecord, Session, SessionConfig, StepOutcome};
pub use graph::{Graph, NodeId, Split, Target, TargetKind};
pub use task::{Stage, Task};
pub use tools::{Tool, ToolConfig, TopK};
