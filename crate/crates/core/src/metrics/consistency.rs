use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::domain::{classify, DiscrepancyClass, Mapper, SchemaHandle, TargetKey, Tick};
use crate::stores::{LegacyStore, Snapshot, TargetSnapshot, TargetStore};

/// Point-in-time convergence summary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub at: Tick,
    pub overall_rate: f64,
    pub settled_rate: f64,
    pub total_keys: u64,
    pub inconsistent_keys: u64,
    pub settled_keys: u64,
    pub settled_inconsistent: u64,
    pub queue_length: u64,
    pub max_in_loop_age: Tick,
    pub window_ttc: Tick,
    pub staleness_bound: Tick,
}

/// Fraction with the convention that an empty population is fully consistent.
pub fn rate(good: u64, total: u64) -> f64 {
    if total == 0 {
        1.0
    } else {
        good as f64 / total as f64
    }
}

/// Staleness bound from the trailing-window TTC.
pub fn staleness_bound(window_ttc: Tick) -> Tick {
    (2 * window_ttc).max(10)
}

/// Keeps the set of inconsistent target keys current by re-checking only
/// keys touched since the last refresh. Uses the reference mapping, so an
/// injected mapping bug does not hide its own damage.
#[derive(Debug)]
pub struct ConsistencyTracker {
    mapper: Mapper,
    dirty: HashSet<TargetKey>,
    domain: HashSet<TargetKey>,
    inconsistent: BTreeMap<TargetKey, DiscrepancyClass>,
}

impl ConsistencyTracker {
    pub fn new(schema: SchemaHandle) -> Self {
        ConsistencyTracker { mapper: Mapper::new(schema), dirty: HashSet::new(), domain: HashSet::new(), inconsistent: BTreeMap::new() }
    }

    pub fn touch_source(&mut self, key: &crate::domain::SourceKey) {
        self.dirty.extend(self.mapper.affected_targets(key));
    }

    pub fn touch_target(&mut self, key: &TargetKey) {
        self.dirty.insert(key.clone());
    }

    pub fn refresh(&mut self, legacy: &LegacyStore, target: &TargetStore) {
        for key in self.dirty.drain() {
            let actual = target.peek(&key).map(|r| r.as_ref());
            let (in_domain, class) = match self.mapper.expected_for(legacy, &key) {
                Ok(expected) => (expected.is_some() || actual.is_some_and(|a| a.is_live()), classify(expected.as_ref(), actual)),
                Err(_) => (true, DiscrepancyClass::Corrupt),
            };
            if in_domain {
                self.domain.insert(key.clone());
            } else {
                self.domain.remove(&key);
            }
            if in_domain && !class.is_consistent() {
                self.inconsistent.insert(key, class);
            } else {
                self.inconsistent.remove(&key);
            }
        }
    }

    pub fn inconsistent(&self) -> &BTreeMap<TargetKey, DiscrepancyClass> {
        &self.inconsistent
    }

    pub fn total(&self) -> u64 {
        self.domain.len() as u64
    }

    /// Fill the rate fields of a report at `at`. Keys fed by a source
    /// changed after `at - bound` are excluded from the settled population.
    pub fn rates(&mut self, legacy: &LegacyStore, target: &TargetStore, at: Tick, bound: Tick, report: &mut ConsistencyReport) {
        self.refresh(legacy, target);
        let mut recent = HashSet::new();
        for ev in legacy.changes_after(at.saturating_sub(bound)) {
            for t in self.mapper.affected_targets(&ev.key) {
                if self.domain.contains(&t) {
                    recent.insert(t);
                }
            }
        }
        let total = self.total();
        let bad = self.inconsistent.len() as u64;
        let settled_total = total - recent.len() as u64;
        let settled_bad = self.inconsistent.keys().filter(|k| !recent.contains(*k)).count() as u64;
        report.at = at;
        report.total_keys = total;
        report.inconsistent_keys = bad;
        report.settled_keys = settled_total;
        report.settled_inconsistent = settled_bad;
        report.overall_rate = rate(total - bad, total);
        report.settled_rate = rate(settled_total - settled_bad, settled_total);
        report.staleness_bound = bound;
    }
}

/// Full recomputation over paired frozen views: (overall, settled_only).
pub fn consistency_rate(source: &Snapshot, target: &TargetSnapshot, schema: &SchemaHandle, staleness_bound: Tick) -> (f64, f64) {
    let mapper = Mapper::new(schema.clone());
    let at = source.taken_at();
    let mut last_update: BTreeMap<TargetKey, Tick> = BTreeMap::new();
    for r in source.records() {
        for t in mapper.affected_targets(&r.key) {
            let e = last_update.entry(t).or_insert(0);
            *e = (*e).max(r.version.commit_time);
        }
    }
    for (k, r) in target.records.iter() {
        if r.is_live() {
            last_update.entry(k.clone()).or_insert(0);
        }
    }
    let (mut total, mut good, mut s_total, mut s_good) = (0u64, 0u64, 0u64, 0u64);
    for (key, last) in &last_update {
        let actual = target.get(key);
        let ok = match mapper.expected_for(source, key) {
            Ok(None) if !actual.is_some_and(|a| a.is_live()) => continue,
            Ok(expected) => classify(expected.as_ref(), actual).is_consistent(),
            Err(_) => false,
        };
        total += 1;
        good += ok as u64;
        if *last + staleness_bound <= at {
            s_total += 1;
            s_good += ok as u64;
        }
    }
    (rate(good, total), rate(s_good, s_total))
}

/// Same as [`consistency_rate`] against live stores, freezing them first.
pub fn consistency_rate_now(legacy: &LegacyStore, target: &TargetStore, schema: &SchemaHandle, at: Tick, bound: Tick) -> (f64, f64) {
    consistency_rate(&legacy.take_snapshot(at), &target.snapshot(at), schema, bound)
}
