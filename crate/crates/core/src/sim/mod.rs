//! Scenario-driven simulation of a migration: workload, pipeline, ramp, and
//! the event log the oracle replays.

mod oracle;
mod report;
mod runner;
mod scenario;
mod workload;

pub use oracle::{oracle_verify, ttc_from_log, Check, OracleReport};
pub use report::{evaluate_expectations, run_scenario, RunReport};
pub use runner::{simulate, RunStats, SimOutcome, Simulation};
pub use scenario::*;
pub use workload::{generate_workload_step, LegacyOp, WorkloadGenerator};
