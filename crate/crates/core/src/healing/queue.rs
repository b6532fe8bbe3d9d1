use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{TargetKey, Tick};
use crate::metrics::MetricsRegistry;

/// What found the potential discrepancy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    DualWrite,
    Nearline,
    ShadowRead,
    Offline,
    Bootstrap,
}

/// Live-traffic events are served before repair/backfill events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Live,
    Repair,
}

impl Trigger {
    pub fn priority(self) -> Priority {
        match self {
            Trigger::DualWrite | Trigger::Nearline | Trigger::ShadowRead => Priority::Live,
            Trigger::Offline | Trigger::Bootstrap => Priority::Repair,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Trigger::DualWrite => "dualwrite",
            Trigger::Nearline => "nearline",
            Trigger::ShadowRead => "shadowread",
            Trigger::Offline => "offline",
            Trigger::Bootstrap => "bootstrap",
        }
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationEvent {
    pub target_key: TargetKey,
    pub trigger: Trigger,
    pub enqueued_at: Tick,
    /// Commit time of the source change behind this event.
    pub source_update_time: Tick,
    pub attempts: u32,
}

impl ValidationEvent {
    pub fn new(target_key: TargetKey, trigger: Trigger, enqueued_at: Tick, source_update_time: Tick) -> Self {
        ValidationEvent { target_key, trigger, enqueued_at, source_update_time, attempts: 0 }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("max_attempts must be at least 1")]
pub struct RetryPolicyError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base: Tick,
    pub backoff_cap: Tick,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 10, backoff_base: 1, backoff_cap: 64 }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), RetryPolicyError> {
        if self.max_attempts == 0 {
            Err(RetryPolicyError)
        } else {
            Ok(())
        }
    }

    /// Delay before the next try after `attempts` failures.
    pub fn backoff(&self, attempts: u32) -> Tick {
        let exp = self.backoff_base.saturating_mul(1u64.checked_shl(attempts).unwrap_or(u64::MAX));
        exp.min(self.backoff_cap)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    Unavailable,
    MappingBug(String),
    MissingParent(TargetKey),
    /// A tombstone would leave this child without its parent.
    LiveChild(TargetKey),
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailReason::Unavailable => f.write_str("unavailable"),
            FailReason::MappingBug(m) => write!(f, "mapping_bug: {m}"),
            FailReason::MissingParent(k) => write!(f, "missing_parent: {k}"),
            FailReason::LiveChild(k) => write!(f, "live_child: {k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixOutcome {
    AlreadyConsistent,
    Fixed,
    Failed(FailReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnqueueOutcome {
    Enqueued,
    Coalesced,
    /// Merged into an existing dead letter awaiting manual review.
    Parked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub event: ValidationEvent,
    pub last_error: String,
    pub surfaced_at: Tick,
}

/// One queue state change made by [`SelfHealingQueue::process`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Transition {
    Removed { key: TargetKey, outcome: FixOutcome },
    Retried { key: TargetKey, attempts: u32, next_due: Tick, reason: FailReason },
    DeadLettered { key: TargetKey, reason: FailReason },
}

/// Queue activity record, kept only when journaling is on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JournalEntry {
    Enqueue { key: TargetKey, trigger: Trigger, source_update_time: Tick, outcome: EnqueueOutcome },
    Transition(Transition),
    Requeued { key: TargetKey },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProcessReport {
    pub processed: usize,
    pub already_consistent: usize,
    pub fixed: usize,
    pub failed: usize,
    pub retried: usize,
    pub dead_lettered: usize,
    pub transitions: Vec<Transition>,
}

#[derive(Clone, Debug)]
struct Entry {
    event: ValidationEvent,
    due: Tick,
    seq: u64,
    priority: Priority,
    first_attempt: Option<Tick>,
}

type Slot = (Tick, u64, TargetKey);

/// Pending validations, one per target key. Events leave only on verified
/// consistency, a successful fix, or retry exhaustion.
#[derive(Debug)]
pub struct SelfHealingQueue {
    policy: RetryPolicy,
    rate_limit: usize,
    entries: HashMap<TargetKey, Entry>,
    live: BTreeSet<Slot>,
    repair: BTreeSet<Slot>,
    dead: Vec<DeadLetter>,
    dead_index: HashMap<TargetKey, usize>,
    by_trigger: HashMap<Trigger, usize>,
    next_seq: u64,
    metrics: MetricsRegistry,
    journal: Option<Vec<JournalEntry>>,
}

impl SelfHealingQueue {
    pub const DEFAULT_RATE_LIMIT: usize = 100;

    pub fn new(policy: RetryPolicy, rate_limit: usize) -> Self {
        SelfHealingQueue {
            policy,
            rate_limit,
            entries: HashMap::new(),
            live: BTreeSet::new(),
            repair: BTreeSet::new(),
            dead: Vec::new(),
            dead_index: HashMap::new(),
            by_trigger: HashMap::new(),
            next_seq: 0,
            metrics: MetricsRegistry::default(),
            journal: None,
        }
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    pub fn rate_limit(&self) -> usize {
        self.rate_limit
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &TargetKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn pending_with_trigger(&self, trigger: Trigger) -> usize {
        self.by_trigger.get(&trigger).copied().unwrap_or(0)
    }

    pub fn metrics(&self) -> &MetricsRegistry {
        &self.metrics
    }

    pub fn events(&self) -> impl Iterator<Item = &ValidationEvent> {
        self.entries.values().map(|e| &e.event)
    }

    /// Earliest source update time among queued events.
    pub fn oldest_source_update(&self) -> Option<Tick> {
        self.entries.values().map(|e| e.event.source_update_time).min()
    }

    fn slots(&mut self, p: Priority) -> &mut BTreeSet<Slot> {
        match p {
            Priority::Live => &mut self.live,
            Priority::Repair => &mut self.repair,
        }
    }

    fn count_trigger(&mut self, t: Trigger, delta: isize) {
        let n = self.by_trigger.entry(t).or_insert(0);
        *n = n.checked_add_signed(delta).expect("trigger count underflow");
    }

    /// Start recording enqueues and transitions for [`Self::take_journal`].
    pub fn with_journal(mut self) -> Self {
        self.journal = Some(Vec::new());
        self
    }

    pub fn take_journal(&mut self) -> Vec<JournalEntry> {
        self.journal.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn enqueue(&mut self, event: ValidationEvent) -> EnqueueOutcome {
        let journal = self.journal.is_some().then(|| (event.target_key.clone(), event.trigger, event.source_update_time));
        let outcome = self.enqueue_inner(event);
        if let (Some(j), Some((key, trigger, source_update_time))) = (self.journal.as_mut(), journal) {
            j.push(JournalEntry::Enqueue { key, trigger, source_update_time, outcome });
        }
        outcome
    }

    fn enqueue_inner(&mut self, event: ValidationEvent) -> EnqueueOutcome {
        if let Some(&i) = self.dead_index.get(&event.target_key) {
            let d = &mut self.dead[i].event;
            d.source_update_time = d.source_update_time.max(event.source_update_time);
            self.metrics.coalesced += 1;
            return EnqueueOutcome::Parked;
        }
        if self.entries.contains_key(&event.target_key) {
            let key = event.target_key.clone();
            let (old_priority, slot, upgrade) = {
                let e = self.entries.get_mut(&key).expect("checked");
                e.event.enqueued_at = e.event.enqueued_at.min(event.enqueued_at);
                e.event.source_update_time = e.event.source_update_time.max(event.source_update_time);
                let upgrade = e.priority == Priority::Repair && event.trigger.priority() == Priority::Live;
                (e.priority, (e.due, e.seq, key.clone()), upgrade)
            };
            if upgrade {
                self.slots(old_priority).remove(&slot);
                let due = slot.0.min(event.enqueued_at);
                let e = self.entries.get_mut(&key).expect("checked");
                let old_trigger = e.event.trigger;
                e.event.trigger = event.trigger;
                e.priority = Priority::Live;
                e.due = due;
                self.live.insert((due, slot.1, key));
                self.count_trigger(old_trigger, -1);
                self.count_trigger(event.trigger, 1);
            }
            self.metrics.coalesced += 1;
            return EnqueueOutcome::Coalesced;
        }
        self.insert(event, None);
        EnqueueOutcome::Enqueued
    }

    fn insert(&mut self, event: ValidationEvent, due: Option<Tick>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let due = due.unwrap_or(event.enqueued_at);
        let priority = event.trigger.priority();
        let key = event.target_key.clone();
        self.count_trigger(event.trigger, 1);
        self.slots(priority).insert((due, seq, key.clone()));
        self.entries.insert(key, Entry { event, due, seq, priority, first_attempt: None });
        self.metrics.enqueue += 1;
        self.metrics.queue_length = self.entries.len() as u64;
    }

    fn remove(&mut self, key: &TargetKey) -> Entry {
        let e = self.entries.remove(key).expect("queued");
        let slot = (e.due, e.seq, key.clone());
        self.slots(e.priority).remove(&slot);
        self.count_trigger(e.event.trigger, -1);
        self.metrics.queue_length = self.entries.len() as u64;
        e
    }

    fn due_keys(&self, now: Tick) -> Vec<TargetKey> {
        self.live
            .iter()
            .take_while(|s| s.0 <= now)
            .chain(self.repair.iter().take_while(|s| s.0 <= now))
            .take(self.rate_limit)
            .map(|s| s.2.clone())
            .collect()
    }

    /// Run validate-and-fix on due events, live class first, up to the rate limit.
    pub fn process(&mut self, now: Tick, mut fixer: impl FnMut(&ValidationEvent) -> FixOutcome) -> ProcessReport {
        let mut report = ProcessReport::default();
        for key in self.due_keys(now) {
            let mut entry = self.remove(&key);
            entry.first_attempt.get_or_insert(now);
            let outcome = fixer(&entry.event);
            report.processed += 1;
            match &outcome {
                FixOutcome::AlreadyConsistent => {
                    self.metrics.validation_success += 1;
                    report.already_consistent += 1;
                }
                FixOutcome::Fixed => {
                    self.metrics.validation_failure += 1;
                    self.metrics.fix_success += 1;
                    report.fixed += 1;
                }
                FixOutcome::Failed(_) => {
                    self.metrics.validation_failure += 1;
                    self.metrics.fix_failure += 1;
                    report.failed += 1;
                }
            }
            if let FixOutcome::Failed(FailReason::MissingParent(other) | FailReason::LiveChild(other)) = &outcome {
                if !self.entries.contains_key(other) && !self.dead_index.contains_key(other) {
                    self.enqueue(ValidationEvent::new(other.clone(), entry.event.trigger, now, entry.event.source_update_time));
                }
            }
            match outcome {
                FixOutcome::Failed(reason) => {
                    entry.event.attempts += 1;
                    if entry.event.attempts >= self.policy.max_attempts {
                        self.metrics.dead_lettered += 1;
                        self.dead_index.insert(key.clone(), self.dead.len());
                        self.dead.push(DeadLetter { event: entry.event, last_error: reason.to_string(), surfaced_at: now });
                        report.dead_lettered += 1;
                        report.transitions.push(Transition::DeadLettered { key, reason });
                    } else {
                        self.metrics.retry += 1;
                        let next_due = now + self.policy.backoff(entry.event.attempts);
                        let attempts = entry.event.attempts;
                        let first = entry.first_attempt;
                        // keep seq so equal-due retries stay FIFO
                        self.reinsert(entry.event, next_due, entry.seq, first);
                        report.retried += 1;
                        report.transitions.push(Transition::Retried { key, attempts, next_due, reason });
                    }
                }
                done => {
                    self.metrics.dequeue += 1;
                    self.metrics.in_queue_latency.record(now.saturating_sub(entry.event.enqueued_at));
                    self.metrics.validate_fix_latency.record(now.saturating_sub(entry.first_attempt.unwrap_or(now)));
                    self.metrics.pipeline_latency.record(now.saturating_sub(entry.event.source_update_time));
                    report.transitions.push(Transition::Removed { key, outcome: done });
                }
            }
        }
        if let Some(j) = self.journal.as_mut() {
            j.extend(report.transitions.iter().cloned().map(JournalEntry::Transition));
        }
        report
    }

    fn reinsert(&mut self, event: ValidationEvent, due: Tick, seq: u64, first_attempt: Option<Tick>) {
        let priority = event.trigger.priority();
        let key = event.target_key.clone();
        self.count_trigger(event.trigger, 1);
        self.slots(priority).insert((due, seq, key.clone()));
        self.entries.insert(key, Entry { event, due, seq, priority, first_attempt });
        self.metrics.queue_length = self.entries.len() as u64;
    }

    pub fn dead_letters(&self) -> &[DeadLetter] {
        &self.dead
    }

    /// Operator action after a bug fix: move every dead letter back into the
    /// queue with a fresh attempt budget. Returns the requeued keys.
    pub fn requeue_dead_letters(&mut self, now: Tick) -> Vec<TargetKey> {
        let dead = std::mem::take(&mut self.dead);
        self.dead_index.clear();
        let mut keys = Vec::with_capacity(dead.len());
        for d in dead {
            let mut ev = d.event;
            ev.attempts = 0;
            ev.enqueued_at = now;
            keys.push(ev.target_key.clone());
            if let Some(j) = self.journal.as_mut() {
                j.push(JournalEntry::Requeued { key: ev.target_key.clone() });
            }
            self.insert(ev, Some(now));
        }
        keys
    }

    /// Current loop gauges: queue length and the age of the oldest source
    /// update still in the loop.
    pub fn loop_gauges(&mut self, now: Tick) -> (u64, Tick) {
        let age = self.oldest_source_update().map_or(0, |t| now.saturating_sub(t));
        self.metrics.max_event_age = age;
        (self.entries.len() as u64, age)
    }

    /// Debug dump: one line per queued event, oldest due first.
    pub fn dump(&self, now: Tick) -> String {
        let mut out = String::new();
        for slot in self.live.iter().chain(self.repair.iter()) {
            let e = &self.entries[&slot.2];
            out.push_str(&format!(
                "key={} trigger={} due={} attempts={} age={} source_age={}\n",
                e.event.target_key,
                e.event.trigger,
                e.due,
                e.event.attempts,
                now.saturating_sub(e.event.enqueued_at),
                now.saturating_sub(e.event.source_update_time),
            ));
        }
        out
    }
}
