use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fault::FaultProfile;
use crate::domain::{at_least_as_fresh, TargetKey, TargetRecord, Tick};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PutOutcome {
    Accepted,
    StaleRejected,
    Unavailable,
    /// A live child was offered while a required parent is absent or tombstoned.
    ParentMissing(TargetKey),
}

impl PutOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, PutOutcome::Accepted)
    }
}

/// Transient store failure; the caller may retry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("target store unavailable")]
pub struct Unavailable;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WriteLogEntry {
    pub time: Tick,
    pub record: Arc<TargetRecord>,
    pub outcome: PutOutcome,
}

/// The new database. Writes are conditional on freshness and the store is
/// subject to its [`FaultProfile`].
#[derive(Debug, Default)]
pub struct TargetStore {
    records: HashMap<TargetKey, Arc<TargetRecord>>,
    fault: FaultProfile,
    write_log: Vec<WriteLogEntry>,
    ops: u64,
}

impl TargetStore {
    pub fn new(fault: FaultProfile) -> Self {
        TargetStore { records: HashMap::new(), fault, write_log: Vec::new(), ops: 0 }
    }

    pub fn fault(&self) -> &FaultProfile {
        &self.fault
    }

    pub fn set_fault(&mut self, fault: FaultProfile) {
        self.fault = fault;
    }

    pub fn put_if_fresher(&mut self, record: TargetRecord, now: Tick) -> PutOutcome {
        self.put_checked(Arc::new(record), &[], now)
    }

    /// Conditional write. Rejects a record whose provenance is older than
    /// (or missing an entry of) the stored one; a live record also requires
    /// every key in `parents` to be live. One availability draw per call.
    pub fn put_checked(&mut self, record: Arc<TargetRecord>, parents: &[TargetKey], now: Tick) -> PutOutcome {
        self.ops += 1;
        let outcome = if !self.fault.available(&record.key, now) {
            PutOutcome::Unavailable
        } else if self.records.get(&record.key).is_some_and(|cur| !at_least_as_fresh(&record.provenance, &cur.provenance)) {
            PutOutcome::StaleRejected
        } else if let Some(p) = parents.iter().find(|p| record.is_live() && !self.records.get(*p).is_some_and(|r| r.is_live())) {
            PutOutcome::ParentMissing(p.clone())
        } else {
            self.records.insert(record.key.clone(), record.clone());
            PutOutcome::Accepted
        };
        self.write_log.push(WriteLogEntry { time: now, record, outcome: outcome.clone() });
        outcome
    }

    pub fn get(&mut self, key: &TargetKey, now: Tick) -> Result<Option<Arc<TargetRecord>>, Unavailable> {
        self.ops += 1;
        if !self.fault.available(key, now) {
            return Err(Unavailable);
        }
        Ok(self.records.get(key).cloned())
    }

    /// Fault-free read for frozen views and checkers.
    pub fn peek(&self, key: &TargetKey) -> Option<&Arc<TargetRecord>> {
        self.records.get(key)
    }

    pub fn is_live(&self, key: &TargetKey) -> bool {
        self.records.get(key).is_some_and(|r| r.is_live())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &Arc<TargetRecord>> {
        self.records.values()
    }

    pub fn write_log(&self) -> &[WriteLogEntry] {
        &self.write_log
    }

    pub fn operation_count(&self) -> u64 {
        self.ops
    }

    pub fn snapshot(&self, now: Tick) -> TargetSnapshot {
        TargetSnapshot {
            taken_at: now,
            records: Arc::new(self.records.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        }
    }

    /// Final state obtained by applying the accepted entries of a write log.
    pub fn replay(log: &[WriteLogEntry]) -> BTreeMap<TargetKey, Arc<TargetRecord>> {
        let mut out = BTreeMap::new();
        for e in log.iter().filter(|e| e.outcome.is_accepted()) {
            out.insert(e.record.key.clone(), e.record.clone());
        }
        out
    }

    /// Live records whose declared parents are not live. `parents_of`
    /// resolves a record's parent keys.
    pub fn orphans(&self, parents_of: impl Fn(&TargetRecord) -> Vec<TargetKey>) -> Vec<TargetKey> {
        let mut out: Vec<TargetKey> = self
            .records
            .values()
            .filter(|r| r.is_live() && parents_of(r).iter().any(|p| !self.is_live(p)))
            .map(|r| r.key.clone())
            .collect();
        out.sort();
        out
    }
}

/// Frozen copy of the target store.
#[derive(Clone, Debug)]
pub struct TargetSnapshot {
    pub taken_at: Tick,
    pub records: Arc<BTreeMap<TargetKey, Arc<TargetRecord>>>,
}

impl TargetSnapshot {
    pub fn get(&self, key: &TargetKey) -> Option<&TargetRecord> {
        self.records.get(key).map(|r| r.as_ref())
    }
}
