//! A workbench for replicated data types: state-based, delta-state and
//! operation-based implementations of counters, registers, sets, a list
//! and maps, a deterministic network simulator, and an oracle that
//! computes the expected value of a run from its update history alone.

pub mod causality;
pub mod harness;
pub mod model;
pub mod op;
pub mod oracle;
pub mod sim;
pub mod state;
