use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{classify, DiscrepancyClass, Mapper, TargetKey, Tick};
use crate::duration::DAY;
use crate::healing::{SelfHealingQueue, Trigger, ValidationEvent};
use crate::metrics::rate;
use crate::stores::{Snapshot, TargetSnapshot};

pub const DEFAULT_CUTOFF: Tick = DAY;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OfflineReport {
    pub snapshot_time: Tick,
    pub cutoff: Tick,
    pub scanned: u64,
    pub counts: BTreeMap<DiscrepancyClass, u64>,
    pub enqueued: u64,
    pub rate: f64,
}

impl OfflineReport {
    pub fn inconsistent(&self) -> u64 {
        self.counts.iter().filter(|(c, _)| !c.is_consistent()).map(|(_, n)| n).sum()
    }

    /// Structured text: a header line, then one `class count` line per class.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "offline_verify snapshot_time={} cutoff={} scanned={} enqueued={} rate={:.6}\n",
            self.snapshot_time, self.cutoff, self.scanned, self.enqueued, self.rate
        );
        for class in DiscrepancyClass::ALL {
            let _ = writeln!(s, "{:<16} {}", class.name(), self.counts.get(&class).copied().unwrap_or(0));
        }
        s
    }
}

/// Compare the mapped source snapshot with the paired target snapshot for
/// every target key whose sources were all last written at least `cutoff`
/// before the snapshot; enqueue each mismatch.
pub fn offline_bulk_verify(source: &Snapshot, target: &TargetSnapshot, cutoff: Tick, mapper: &Mapper, queue: &mut SelfHealingQueue, now: Tick) -> OfflineReport {
    assert_eq!(source.taken_at(), target.taken_at, "snapshots must be paired");
    let horizon = source.taken_at().checked_sub(cutoff);
    let mut report = OfflineReport { snapshot_time: source.taken_at(), cutoff, ..Default::default() };
    let mut last_update: BTreeMap<TargetKey, Tick> = BTreeMap::new();
    for r in source.records() {
        for t in mapper.affected_targets(&r.key) {
            let e = last_update.entry(t).or_insert(0);
            *e = (*e).max(r.version.commit_time);
        }
    }
    for (key, last) in last_update {
        if horizon.is_none_or(|h| last > h) {
            continue;
        }
        let class = match mapper.expected_for(source, &key) {
            Ok(expected) => classify(expected.as_ref(), target.get(&key)),
            Err(_) => DiscrepancyClass::Corrupt,
        };
        report.scanned += 1;
        *report.counts.entry(class).or_insert(0) += 1;
        if !class.is_consistent() {
            queue.enqueue(ValidationEvent::new(key, Trigger::Offline, now, last));
            report.enqueued += 1;
        }
    }
    report.rate = rate(report.scanned - report.inconsistent(), report.scanned);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EntityKey, Value};
    use crate::healing::RetryPolicy;
    use crate::schemas;
    use crate::stores::{FaultProfile, LegacyStore, LegacyWrite, TargetStore};

    fn v() -> Value {
        Value::from([("name".to_string(), "p".to_string())])
    }

    fn world(n: u64) -> (LegacyStore, TargetStore, Mapper) {
        let mapper = Mapper::new(schemas::recruiting());
        let mut legacy = LegacyStore::new();
        let mut target = TargetStore::new(FaultProfile::healthy());
        for id in 0..n {
            legacy.commit(EntityKey::new("project", id), LegacyWrite::Put(v()), 0);
            let r = mapper.expected_for(&legacy, &EntityKey::new("project_v2", id)).unwrap().unwrap();
            target.put_if_fresher(r, 0);
        }
        (legacy, target, mapper)
    }

    #[test]
    fn consistent_world_rates_one() {
        let (legacy, target, mapper) = world(10);
        let mut q = SelfHealingQueue::new(RetryPolicy::default(), 100);
        let r = offline_bulk_verify(&legacy.take_snapshot(DAY), &target.snapshot(DAY), DEFAULT_CUTOFF, &mapper, &mut q, DAY);
        assert_eq!((r.scanned, r.rate, r.enqueued), (10, 1.0, 0));
        assert_eq!(DEFAULT_CUTOFF, 1440);
    }

    #[test]
    fn one_missing_in_100k() {
        let (mut legacy, target, mapper) = world(100_000);
        legacy.commit(EntityKey::new("project", 100_000), LegacyWrite::Put(v()), 1);
        let mut q = SelfHealingQueue::new(RetryPolicy::default(), 100);
        let r = offline_bulk_verify(&legacy.take_snapshot(2 * DAY), &target.snapshot(2 * DAY), DAY, &mapper, &mut q, 2 * DAY);
        assert_eq!(r.scanned, 100_001);
        assert_eq!(r.counts[&DiscrepancyClass::Missing], 1);
        assert_eq!(r.enqueued, 1);
        assert!(r.to_text().contains("missing"));

        let (legacy, mut target, mapper) = world(100_000);
        let mut gone = (**target.peek(&EntityKey::new("project_v2", 5)).unwrap()).clone();
        gone.tombstone = true;
        gone.value.clear();
        target.put_if_fresher(gone, 0);
        let r = offline_bulk_verify(&legacy.take_snapshot(DAY), &target.snapshot(DAY), DAY, &mapper, &mut q, DAY);
        assert_eq!(r.rate, 0.99999);
    }

    #[test]
    fn recent_updates_are_not_flagged() {
        let (mut legacy, target, mapper) = world(3);
        legacy.commit(EntityKey::new("project", 1), LegacyWrite::Put(Value::new()), 100);
        let mut q = SelfHealingQueue::new(RetryPolicy::default(), 100);
        let r = offline_bulk_verify(&legacy.take_snapshot(200), &target.snapshot(200), 150, &mapper, &mut q, 200);
        assert_eq!((r.scanned, r.enqueued), (2, 0));
    }
}
