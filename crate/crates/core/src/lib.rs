//! Tree-structured decentralized collective learning with structural
//! self-adaptation.
//!
//! Agents each hold a handful of candidate plans. Arranged in a balanced tree,
//! they repeatedly pick plans that minimise the variance of the summed plan,
//! exchanging aggregates up and down the tree. The modules here cover loading
//! and generating plans, the agent ranking metrics, tree placement, the learning
//! engine, adaptation strategies that reposition agents mid-run, and the
//! benchmark that locates a placement's cost within a random-placement sample.

pub mod adaptation;
pub mod benchmark;
pub mod error;
pub mod learning;
pub mod metrics;
pub mod plans;
pub mod seeding;
pub mod topology;

pub use error::{Error, Result};
pub use learning::{run_phase, InitialSelection, LearningConfig, LearningTrace};
pub use metrics::{MetricId, RankingScore};
pub use plans::{AgentProfile, Plan, Population};
pub use topology::{build_balanced_tree, Bijection, SortOrder, TreeTopology};
