//! Cycle-level simulator and closed-form bandwidth model of a many-core
//! vector cluster sharing a multi-banked L1 scratchpad through a
//! hierarchical interconnect, with burst access support on the load path:
//! narrow burst requests, per-bank-group burst managers that split and merge
//! them, and response channels widened by a configurable grouping factor.

pub mod analytic;
pub mod engine;
pub mod metrics;
pub mod runspec;
pub mod topology;
pub mod workloads;
