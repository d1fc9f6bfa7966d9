//! Counting and estimating the maximal execution graphs of bounded concurrent
//! programs under sequential consistency.
//!
//! The exact oracles ([`tdag::enumerate_t_sinks`], [`dtree::enumerate_d_tree`])
//! give ground truth; the randomized estimators in [`estimators`] walk either
//! the interleaving DAG or the optimal DPOR tree.

pub mod dtree;
pub mod estimators;
pub mod graph;
pub mod harness;
pub mod program;
pub mod subexp;
pub mod tdag;

use thiserror::Error;

pub use graph::{CanonicalKey, Event, EventSet, ExecutionGraph, GraphError, Label};
pub use program::{parse_program, ParseError, Program};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Replay(#[from] program::ReplayError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{what} exceeded the cap of {cap} (explored {explored})")]
    CapExceeded { what: &'static str, cap: usize, explored: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
