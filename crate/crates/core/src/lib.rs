//! Simulation of split neural-network inference on a mobile edge cluster.
//!
//! Workloads arrive over time; a decision policy picks a layer-wise or
//! semantic split per workload, a placement policy maps the resulting
//! fragments onto hosts, and a fluid processor-sharing engine executes them
//! while accounting for transfers and energy.

pub mod cli;
pub mod decider;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod schedulers;
pub mod simulation;
pub mod trace;
