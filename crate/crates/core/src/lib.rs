//! Cycle-popping samplers for cycle-rooted spanning forests on graphs with a
//! U(1)-connection, the exact law of their running time, and enumeration
//! oracles to check both.

pub mod cli;
pub mod cycle;
pub mod cyclepop;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod heaps;
pub mod loops;
pub mod oracle;
pub mod prs;
pub mod spectral;

pub use cycle::{CycleWeight, OrientedCycle};
pub use error::{Error, Result};
pub use graph::{ConnectionGraph, NodeId};
