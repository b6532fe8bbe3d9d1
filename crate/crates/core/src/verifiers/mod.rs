//! The verification and ingestion triggers: bootstrap bulk load, nearline
//! change-stream checks, shadow reads and offline snapshot comparison. All
//! of them hand discrepancies to the self-healing queue.

mod bootstrap;
mod limiter;
mod nearline;
mod offline;
mod shadow;

pub use bootstrap::{Bootstrap, BootstrapMode, BootstrapReport};
pub use limiter::{RateLimiter, TickUsage};
pub use nearline::{nearline_verify, NearlineOutcome, NearlineVerifier};
pub use offline::{offline_bulk_verify, OfflineReport, DEFAULT_CUTOFF};
pub use shadow::{ShadowOutcome, ShadowReader, DEFAULT_ALARM_INTERVAL};
