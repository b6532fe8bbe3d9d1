//! Convergence metrics: counters, settlement times, time to converge,
//! consistency rates, and the event log they can be recomputed from.

mod consistency;
mod eventlog;
mod registry;
mod settlement;

pub use consistency::{consistency_rate, consistency_rate_now, rate, staleness_bound, ConsistencyReport, ConsistencyTracker};
pub use eventlog::{EventLog, LogEntry, LogEvent, LogFormatError};
pub use registry::{Histogram, MetricsRegistry};
pub use settlement::{time_to_converge, NotSettled, SettlementTracker, Update};
