//! Self-healing queue: validation events from every trigger, idempotent
//! validate-and-fix, retry with backoff, and dead letters.

mod fix;
mod queue;

pub use fix::{validate_and_fix, FixReport, RepairContext};
pub use queue::{
    DeadLetter, EnqueueOutcome, FailReason, FixOutcome, JournalEntry, Priority, ProcessReport, RetryPolicy, RetryPolicyError, SelfHealingQueue,
    Transition, Trigger, ValidationEvent,
};
