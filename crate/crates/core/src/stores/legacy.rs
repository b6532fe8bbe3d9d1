use std::cell::Cell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::snapshot::Snapshot;
use crate::domain::{SourceKey, SourceRecord, SourceView, Tick, Value, VersionStamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeOp {
    Write,
    Delete,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub seq: u64,
    pub key: SourceKey,
    pub new_version: VersionStamp,
    pub op: ChangeOp,
}

impl ChangeEvent {
    pub fn commit_time(&self) -> Tick {
        self.new_version.commit_time
    }
}

/// What a client asks the legacy store to do with a key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LegacyWrite {
    Put(Value),
    Delete,
}

/// The source of truth. Always available; keeps every committed version so
/// snapshots can be cut at any past instant.
#[derive(Debug, Default)]
pub struct LegacyStore {
    history: HashMap<SourceKey, Vec<SourceRecord>>,
    change_log: Vec<ChangeEvent>,
    reads: Cell<u64>,
    writes: u64,
}

impl LegacyStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Commit a write or delete at `now` with the key's next version.
    pub fn commit(&mut self, key: SourceKey, write: LegacyWrite, now: Tick) -> ChangeEvent {
        if let Some(last) = self.change_log.last() {
            assert!(now >= last.commit_time(), "commit at {now} precedes log tail {}", last.commit_time());
        }
        let versions = self.history.entry(key.clone()).or_default();
        let counter = versions.last().map_or(1, |r| r.version.counter + 1);
        let version = VersionStamp::new(counter, now);
        let (record, op) = match write {
            LegacyWrite::Put(value) => (SourceRecord::live(key.clone(), value, version), ChangeOp::Write),
            LegacyWrite::Delete => (SourceRecord::tombstone(key.clone(), version), ChangeOp::Delete),
        };
        versions.push(record);
        self.writes += 1;
        let event = ChangeEvent { seq: self.change_log.len() as u64 + 1, key, new_version: version, op };
        self.change_log.push(event.clone());
        event
    }

    /// Client read; counted as a legacy operation.
    pub fn read(&self, key: &SourceKey) -> Option<&SourceRecord> {
        self.reads.set(self.reads.get() + 1);
        self.current(key)
    }

    pub fn current(&self, key: &SourceKey) -> Option<&SourceRecord> {
        self.history.get(key).and_then(|v| v.last())
    }

    /// State of `key` as of time `at`.
    pub fn as_of(&self, key: &SourceKey, at: Tick) -> Option<&SourceRecord> {
        let versions = self.history.get(key)?;
        let n = versions.partition_point(|r| r.version.commit_time <= at);
        n.checked_sub(1).map(|i| &versions[i])
    }

    pub fn change_log(&self) -> &[ChangeEvent] {
        &self.change_log
    }

    pub fn max_seq(&self) -> u64 {
        self.change_log.len() as u64
    }

    /// Change events committed strictly after `after`.
    pub fn changes_after(&self, after: Tick) -> &[ChangeEvent] {
        let start = self.change_log.partition_point(|e| e.commit_time() <= after);
        &self.change_log[start..]
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &SourceKey> {
        self.history.keys()
    }

    pub fn records(&self) -> impl Iterator<Item = &SourceRecord> {
        self.history.values().filter_map(|v| v.last())
    }

    /// Number of client operations (commits and reads) served so far.
    pub fn operation_count(&self) -> u64 {
        self.writes + self.reads.get()
    }

    /// Freeze every record committed at or before `at`.
    pub fn take_snapshot(&self, at: Tick) -> Snapshot {
        let records = self.history.keys().filter_map(|k| self.as_of(k, at)).map(|r| (r.key.clone(), r.clone()));
        Snapshot::new(at, records.collect())
    }
}

impl SourceView for LegacyStore {
    fn source(&self, key: &SourceKey) -> Option<&SourceRecord> {
        self.current(key)
    }
}
