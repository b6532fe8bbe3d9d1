//! Legacy store with change stream and snapshots; target store with fault injection.

mod fault;
mod legacy;
mod snapshot;
mod stream;
mod target;

pub use fault::{FaultError, FaultProfile, OutageWindow};
pub use legacy::{ChangeEvent, ChangeOp, LegacyStore, LegacyWrite};
pub use snapshot::{Snapshot, SnapshotFormatError};
pub use stream::{stream_subscribe, SubscribeError, Subscription};
pub use target::{PutOutcome, TargetSnapshot, TargetStore, Unavailable, WriteLogEntry};
