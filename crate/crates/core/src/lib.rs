//! Relative-entropy guided graph rewiring for node classification on
//! heterophilic graphs.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: the immutable [`Graph`] type, dataset ingestion, stratified
//!   splits, homophily analytics and edge-list export.
//! - [`entropy`]: pairwise feature/structural/combined entropy and the
//!   per-node ranked candidate sequences.
//! - [`gnn`]: a two-layer message-passing classifier (GCN or GraphSAGE-mean)
//!   with hand-written backpropagation and Adam.
//! - [`rl`]: the rewiring MDP and a PPO agent with one categorical head per
//!   state coordinate.
//! - [`orchestrator`]: the joint GNN/agent training loop, ablation modes and
//!   report emission.
//! - [`synthetic`]: seeded graph generators used by tests, benches and as a
//!   stand-in when benchmark datasets are not on disk.

pub mod entropy;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod orchestrator;
pub mod rl;
pub mod synthetic;

pub use entropy::{EmbeddingConfig, EmbeddingMode, EntropySequence, EntropyTable};
pub use error::{RareError, Result};
pub use gnn::{Backbone, GcnModel, GnnConfig, TrainMetrics};
pub use graph::{Graph, SplitMask};
pub use orchestrator::{Mode, RunConfig, RunReport};
pub use rl::{PolicyNet, PpoConfig, RewireAction, RewireState, StateBounds};
