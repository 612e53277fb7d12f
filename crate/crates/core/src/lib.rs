//! Approximate most-probable-explanation (MPE) inference for discrete
//! Bayesian networks.
//!
//! The network is split into an ordered sequence of partitions, each backed by
//! a clique tree forest whose cliques never exceed a state-space bound. Every
//! partition is max-calibrated, then shrunk by exact and local
//! max-marginalization before the next partition is built on top of it. The
//! maximum belief of the last partition estimates the MPE probability, and an
//! iterative traceback decodes a complete assignment.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command line
//! and the benchmark harness live in the `ibia` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod approximate;
pub mod assignment;
pub mod build;
pub mod calibrate;
pub mod ctf;
pub mod engine;
mod error;
pub mod factor;
pub mod network;
pub mod oracle;

pub use approximate::{approximate_ctf, ApproxConfig, VariablePriority};
pub use assignment::Assignment;
pub use build::{Partition, PartitionSequence, PartitionStats};
pub use ctf::{clique_size, Clique, CliqueId, Ctf, Sepset};
pub use engine::{infer_mpe, DeltaMetrics, EngineConfig, IterationTrace, MpeFailure, MpeResult};
pub use error::Error;
pub use factor::{Factor, TieBreak, VarId};
pub use network::{DiscreteNetwork, Family, ReducedNetwork};

pub type Result<T> = core::result::Result<T, Error>;
